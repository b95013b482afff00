//! Galerkin assembly of retarded boundary integral operators for
//! piecewise-constant ansatz and test functions in space and time.
//!
//! Time steps are 0-based: step m covers [mΔt, (m+1)Δt). With
//! B_j = ∬_{E_j} 1/(4π|x-y|) over the light-cone shell
//! E_j = {jcΔt <= |x-y| < (j+1)cΔt}, the single layer blocks are
//! V^j = B_j - B_{j-1} (B_{-1} = 0). Writing D_k for the pair integral
//! restricted to |x-y| < kcΔt, this is the second difference
//! V^j = D_{j+1} - 2D_j + D_{j-1}, which telescopes to zero over j.
//!
//! The adjoint double layer blocks are documented in `docs/adjoint_double_layer.md`.

mod inner;
pub mod oracle;
mod outer;

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{SurfaceMesh, TimeGrid};
use crate::quadrature::TriangleRule;

pub use inner::{AngularRule, SourceTriangle};
pub use outer::{integrate as integrate_adaptive, AdaptiveOptions, AdaptiveReport};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(u32, u32, f64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().expect("nonempty") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r as usize + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: diag.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Adds `delta` to a stored entry. Test hook for fault injection.
    pub fn perturb(&mut self, r: usize, c: usize, delta: f64) -> Result<()> {
        if r >= self.nrows {
            return Err(Error::InvalidArgument(format!("row {r} out of range")));
        }
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.cols[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => {
                self.vals[lo + k] += delta;
                Ok(())
            }
            Err(_) => Err(Error::InvalidArgument(format!("entry ({r}, {c}) is not stored"))),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.cols[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Entries of row r as (column, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// y += alpha · A x with x, y stored element-major: `x[s * k + i]` is
    /// component i of element s, k = `width`.
    pub fn mul_add_rows(&self, alpha: f64, x: &[f64], y: &mut [f64], width: usize) {
        debug_assert_eq!(x.len(), self.ncols * width);
        debug_assert_eq!(y.len(), self.nrows * width);
        y.par_chunks_mut(width).enumerate().for_each(|(r, yr)| {
            for (c, v) in self.row(r) {
                let a = alpha * v;
                let xs = &x[c * width..(c + 1) * width];
                for (yi, xi) in yr.iter_mut().zip(xs) {
                    *yi += a * xi;
                }
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    SingleLayer,
    AdjointDoubleLayer,
    Mass,
}

impl OperatorTag {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorTag::SingleLayer => "V",
            OperatorTag::AdjointDoubleLayer => "K'",
            OperatorTag::Mass => "mass",
        }
    }
}

/// Light-cone shell E_j = {(x, y) : jcΔt <= |x - y| < (j+1)cΔt}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightConeShell {
    pub j: usize,
    pub inner: f64,
    pub outer: f64,
}

impl LightConeShell {
    pub fn new(j: usize, c: f64, dt: f64) -> Self {
        LightConeShell {
            j,
            inner: j as f64 * c * dt,
            outer: (j + 1) as f64 * c * dt,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.inner && r < self.outer
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssemblyStats {
    pub pairs: usize,
    pub evaluations: usize,
    pub capped_pairs: usize,
    /// Largest estimated error relative to the pair's integral scale.
    pub max_rel_error: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub seconds: f64,
}

/// Causal sequence of spatial blocks M^0..M^L; absent blocks are zero.
#[derive(Debug, Clone)]
pub struct ToeplitzBlockSequence {
    pub tag: OperatorTag,
    pub dt: f64,
    pub c: f64,
    blocks: Vec<Option<CsrMatrix>>,
    n: usize,
    pub stats: AssemblyStats,
}

impl ToeplitzBlockSequence {
    pub fn from_blocks(tag: OperatorTag, dt: f64, c: f64, n: usize, blocks: Vec<Option<CsrMatrix>>) -> Self {
        ToeplitzBlockSequence {
            tag,
            dt,
            c,
            blocks,
            n,
            stats: AssemblyStats::default(),
        }
    }

    /// Truncation length L; blocks with j > L are identically zero.
    pub fn truncation(&self) -> usize {
        self.blocks.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn block(&self, j: usize) -> Option<&CsrMatrix> {
        self.blocks.get(j).and_then(|b| b.as_ref())
    }

    pub fn block_mut(&mut self, j: usize) -> Option<&mut CsrMatrix> {
        self.blocks.get_mut(j).and_then(|b| b.as_mut())
    }

    pub fn present(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&j| self.blocks[j].is_some()).collect()
    }

    pub fn get(&self, j: usize, r: usize, s: usize) -> f64 {
        self.block(j).map_or(0.0, |b| b.get(r, s))
    }

    pub fn dense(&self, j: usize) -> DMatrix<f64> {
        self.block(j)
            .map_or_else(|| DMatrix::zeros(self.n, self.n), |b| b.to_dense())
    }

    /// Σ_j M^j as a dense matrix.
    pub fn block_sum(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for b in self.blocks.iter().flatten() {
            for (r, c, v) in b.iter() {
                s[(r, c)] += v;
            }
        }
        s
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.nnz()).sum()
    }

    /// Writes `j,r,s,value` triplets.
    pub fn write_triplets_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        writeln!(w, "j,r,s,value").map_err(io)?;
        for (j, b) in self.blocks.iter().enumerate() {
            if let Some(b) = b {
                for (r, s, v) in b.iter() {
                    writeln!(w, "{j},{r},{s},{v:e}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

/// Quadrature settings for block assembly.
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub outer: AdaptiveOptions,
    pub angular_points: usize,
    pub angular_span: f64,
    /// Turn depth/leaf-cap hits into errors instead of reporting them.
    pub fail_on_cap: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            outer: AdaptiveOptions {
                rel_tol: 1e-4,
                max_depth: 14,
                max_leaves: 256,
            },
            angular_points: 12,
            angular_span: 1.5,
            fail_on_cap: false,
        }
    }
}

/// L = ceil(diam / (cΔt)) + 1.
pub fn truncation_length(diameter: f64, c: f64, dt: f64) -> usize {
    (diameter / (c * dt)).ceil() as usize + 1
}

/// Radii kcΔt strictly inside (dmin, dmax), as (first k, radii); D_k is zero
/// for smaller k and equal to the full integral from k = first + len on.
fn active_radii(dmin: f64, dmax: f64, cdt: f64) -> (usize, Vec<f64>) {
    let k_lo = ((dmin / cdt).floor() as usize + 1).max(1);
    let mut radii = Vec::new();
    let mut k = k_lo;
    while (k as f64) * cdt < dmax {
        radii.push(k as f64 * cdt);
        k += 1;
    }
    (k_lo, radii)
}

/// D_k from the active values: 0 below `k_lo`, the full value past the range.
struct Cumulative<'a> {
    k_lo: usize,
    active: &'a [f64],
    full: f64,
}

impl Cumulative<'_> {
    fn at(&self, k: isize) -> f64 {
        if k < self.k_lo as isize {
            0.0
        } else if ((k as usize) - self.k_lo) < self.active.len() {
            self.active[k as usize - self.k_lo]
        } else {
            self.full
        }
    }

    /// Range of j for which a second difference can be nonzero.
    fn blocks(&self) -> std::ops::RangeInclusive<usize> {
        let lo = self.k_lo.saturating_sub(1);
        let kfull = self.k_lo + self.active.len();
        lo..=(kfull + 1)
    }
}

struct PairResult {
    entries: Vec<(u32, f64)>,
    report: AdaptiveReport,
    rel_err: f64,
}

fn pair_distances(mesh: &SurfaceMesh, r: usize, s: usize) -> (f64, f64) {
    let tr = mesh.triangle(r);
    let ts = mesh.triangle(s);
    let shared = mesh.triangles()[r]
        .iter()
        .any(|v| mesh.triangles()[s].contains(v));
    let dmin = if shared { 0.0 } else { geom::triangle_distance(&tr, &ts) };
    (dmin, geom::triangle_max_distance(&tr, &ts))
}

fn single_layer_pair(
    tr: [Vec3; 3],
    src: &SourceTriangle,
    dmin: f64,
    dmax: f64,
    cdt: f64,
    rule: &TriangleRule,
    opts: &AdaptiveOptions,
) -> PairResult {
    let (k_lo, radii) = active_radii(dmin, dmax, cdt);
    let m = radii.len() + 1;
    let (vals, report) = outer::integrate(tr, m, rule, opts, |x, out| src.single_layer_many(x, &radii, out));
    let cum = Cumulative {
        k_lo,
        active: &vals[..radii.len()],
        full: vals[radii.len()],
    };
    let mut entries = Vec::new();
    for j in cum.blocks() {
        let j = j as isize;
        let v = cum.at(j + 1) - 2.0 * cum.at(j) + cum.at(j - 1);
        if v != 0.0 {
            entries.push((j as u32, v));
        }
    }
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rel_err = if scale > 0.0 { report.error_estimate / scale } else { 0.0 };
    PairResult {
        entries,
        report,
        rel_err,
    }
}

#[allow(clippy::too_many_arguments)]
fn adjoint_double_layer_pair(
    tr: [Vec3; 3],
    nu: Vec3,
    src: &SourceTriangle,
    dmin: f64,
    dmax: f64,
    dt: f64,
    cdt: f64,
    rule: &TriangleRule,
    angular: &AngularRule,
    opts: &AdaptiveOptions,
    edge_graded: bool,
) -> PairResult {
    let (k_lo, radii) = active_radii(dmin, dmax, cdt);
    let m = radii.len() + 1;
    let f = |x: Vec3, out: &mut [f64]| src.normal_derivative_many(x, nu, &radii, angular, out);
    let (vals, report) = if edge_graded {
        integrate_edge_graded(tr, m, rule, opts, f)
    } else {
        outer::integrate(tr, m, rule, opts, f)
    };
    let cum = Cumulative {
        k_lo,
        active: &vals[..radii.len()],
        full: vals[radii.len()],
    };
    let factor = -dt / (4.0 * PI);
    let mut entries = Vec::new();
    for j in cum.blocks() {
        let ji = j as isize;
        let jf = j as f64;
        let v = factor
            * ((jf + 1.0) * (cum.at(ji + 1) - cum.at(ji)) - (jf - 1.0) * (cum.at(ji) - cum.at(ji - 1)));
        if v != 0.0 {
            entries.push((j as u32, v));
        }
    }
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rel_err = if scale > 0.0 { report.error_estimate / scale } else { 0.0 };
    PairResult {
        entries,
        report,
        rel_err,
    }
}

/// Integrates over `tr` with a quadratic grading towards the edge tr[0]-tr[1]:
/// x = a + s(1-τ²)(b-a) + τ²(c-a) over the unit square in (s, τ), which
/// removes the logarithmic singularity along that edge.
fn integrate_edge_graded<F>(
    tr: [Vec3; 3],
    m: usize,
    rule: &TriangleRule,
    opts: &AdaptiveOptions,
    mut f: F,
) -> (Vec<f64>, AdaptiveReport)
where
    F: FnMut(Vec3, &mut [f64]),
{
    let [a, b, c] = tr;
    let jac0 = 2.0 * geom::triangle_area(&tr);
    let halves = [
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]],
        [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
    ];
    let mut total = vec![0.0; m];
    let mut rep = AdaptiveReport::default();
    for half in halves {
        let (v, r) = outer::integrate(half, m, rule, opts, |p, out| {
            let (s, t) = (p[0], p[1]);
            let t2 = t * t;
            let x = geom::add(
                a,
                geom::add(geom::scale(geom::sub(b, a), s * (1.0 - t2)), geom::scale(geom::sub(c, a), t2)),
            );
            f(x, out);
            let jac = jac0 * 2.0 * t * (1.0 - t2);
            out.iter_mut().for_each(|o| *o *= jac);
        });
        for (t, x) in total.iter_mut().zip(&v) {
            *t += x;
        }
        rep.evaluations += r.evaluations;
        rep.leaves += r.leaves;
        rep.error_estimate += r.error_estimate;
        rep.capped |= r.capped;
    }
    (total, rep)
}

/// Reorders element r so that the edge shared with s comes first.
fn shared_edge_first(mesh: &SurfaceMesh, r: usize, s: usize) -> Option<[Vec3; 3]> {
    let tr = mesh.triangles()[r];
    let ts = mesh.triangles()[s];
    let shared: Vec<usize> = (0..3).filter(|&i| ts.contains(&tr[i])).collect();
    if shared.len() != 2 {
        return None;
    }
    let other = 3 - shared[0] - shared[1];
    let v = mesh.vertices();
    Some([v[tr[shared[0]]], v[tr[shared[1]]], v[tr[other]]])
}

/// `tr` reordered with the edge it shares with `ts` first, by vertex equality.
fn shared_edge_points(tr: &[Vec3; 3], ts: &[Vec3; 3]) -> Option<[Vec3; 3]> {
    let shared: Vec<usize> = (0..3).filter(|&i| ts.contains(&tr[i])).collect();
    if shared.len() != 2 {
        return None;
    }
    Some([tr[shared[0]], tr[shared[1]], tr[3 - shared[0] - shared[1]]])
}

fn collect_blocks(
    tag: OperatorTag,
    n: usize,
    grid: &TimeGrid,
    big_l: usize,
    rows: Vec<Vec<(u32, u32, f64)>>,
    symmetric: bool,
) -> ToeplitzBlockSequence {
    let mut per_block: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); big_l + 1];
    for (r, row) in rows.into_iter().enumerate() {
        for (j, s, v) in row {
            per_block[j as usize].push((r as u32, s, v));
            if symmetric && s as usize != r {
                per_block[j as usize].push((s, r as u32, v));
            }
        }
    }
    let blocks = per_block
        .into_iter()
        .map(|t| (!t.is_empty()).then(|| CsrMatrix::from_triplets(n, n, t)))
        .collect();
    ToeplitzBlockSequence::from_blocks(tag, grid.dt, grid.c, n, blocks)
}

fn check_cap(opts: &AssemblyOptions, r: usize, s: usize, p: &PairResult) -> Result<()> {
    if opts.fail_on_cap && p.report.capped {
        return Err(Error::Quadrature {
            row: r,
            col: s,
            estimate: p.rel_err,
        });
    }
    if p.entries.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Assembly(format!("non-finite entry for pair ({r}, {s})")));
    }
    Ok(())
}

fn fold_stats(stats: &mut AssemblyStats, r: usize, s: usize, p: &PairResult) {
    stats.pairs += 1;
    stats.evaluations += p.report.evaluations;
    if p.report.capped {
        stats.capped_pairs += 1;
    }
    if p.rel_err > stats.max_rel_error {
        stats.max_rel_error = p.rel_err;
        stats.worst_pair = Some((r, s));
    }
}

/// Single layer blocks V^0..V^L. Pairs r <= s are integrated once and
/// mirrored, so every block is exactly symmetric.
pub fn assemble_single_layer(mesh: &SurfaceMesh, grid: &TimeGrid, opts: &AssemblyOptions) -> Result<ToeplitzBlockSequence> {
    let start = Instant::now();
    let n = mesh.len();
    let cdt = grid.c * grid.dt;
    let big_l = truncation_length(mesh.diameter(), grid.c, grid.dt);
    let rule = TriangleRule::degree5();
    let sources: Vec<SourceTriangle> = (0..n).map(|e| SourceTriangle::new(mesh.triangle(e))).collect();
    let rows: Vec<(Vec<(u32, u32, f64)>, AssemblyStats)> = (0..n)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let tr = mesh.triangle(r);
            let mut row = Vec::new();
            let mut stats = AssemblyStats::default();
            for s in r..n {
                let (dmin, dmax) = pair_distances(mesh, r, s);
                let p = single_layer_pair(tr, &sources[s], dmin, dmax, cdt, &rule, &opts.outer);
                check_cap(opts, r, s, &p)?;
                fold_stats(&mut stats, r, s, &p);
                row.extend(p.entries.iter().map(|&(j, v)| (j, s as u32, v)));
            }
            Ok((row, stats))
        })
        .collect::<Result<_>>()?;
    let mut stats = AssemblyStats::default();
    let mut trip = Vec::with_capacity(n);
    for (row, st) in rows {
        merge_stats(&mut stats, &st);
        trip.push(row);
    }
    let mut seq = collect_blocks(OperatorTag::SingleLayer, n, grid, big_l, trip, true);
    stats.seconds = start.elapsed().as_secs_f64();
    seq.stats = stats;
    Ok(seq)
}

/// Time blocks (j, value) of a single pair of elements, test `tr`, ansatz
/// `ts`. For the adjoint double layer `nu` is the normal of `tr`.
pub fn pair_blocks(
    tag: OperatorTag,
    tr: [Vec3; 3],
    ts: [Vec3; 3],
    grid: &TimeGrid,
    opts: &AssemblyOptions,
) -> Result<Vec<(usize, f64)>> {
    let cdt = grid.c * grid.dt;
    let rule = TriangleRule::degree5();
    let src = SourceTriangle::new(ts);
    let dmin = geom::triangle_distance(&tr, &ts);
    let dmax = geom::triangle_max_distance(&tr, &ts);
    let p = match tag {
        OperatorTag::SingleLayer => single_layer_pair(tr, &src, dmin, dmax, cdt, &rule, &opts.outer),
        OperatorTag::AdjointDoubleLayer => {
            let nu = geom::normalize(geom::cross(geom::sub(tr[1], tr[0]), geom::sub(tr[2], tr[0])));
            if geom::dot(nu, geom::normalize(geom::cross(geom::sub(ts[1], ts[0]), geom::sub(ts[2], ts[0])))).abs()
                >= 1.0 - 1e-12
                && geom::dot(nu, geom::sub(ts[0], tr[0])).abs() <= 1e-12 * dmax
            {
                return Ok(Vec::new());
            }
            let angular = AngularRule::new(opts.angular_points, opts.angular_span);
            let graded = shared_edge_points(&tr, &ts);
            let t = graded.unwrap_or(tr);
            adjoint_double_layer_pair(
                t,
                nu,
                &src,
                dmin,
                dmax,
                grid.dt,
                cdt,
                &rule,
                &angular,
                &opts.outer,
                graded.is_some(),
            )
        }
        OperatorTag::Mass => return Err(Error::InvalidArgument("mass has no time blocks".into())),
    };
    check_cap(opts, 0, 1, &p)?;
    Ok(p.entries.iter().map(|&(j, v)| (j as usize, v)).collect())
}

fn merge_stats(acc: &mut AssemblyStats, st: &AssemblyStats) {
    acc.pairs += st.pairs;
    acc.evaluations += st.evaluations;
    acc.capped_pairs += st.capped_pairs;
    if st.max_rel_error > acc.max_rel_error {
        acc.max_rel_error = st.max_rel_error;
        acc.worst_pair = st.worst_pair;
    }
}

/// Whether two elements lie in a common plane with parallel normals.
fn coplanar(mesh: &SurfaceMesh, r: usize, s: usize) -> bool {
    let nr = mesh.normals()[r];
    let ns = mesh.normals()[s];
    if geom::dot(nr, ns).abs() < 1.0 - 1e-12 {
        return false;
    }
    let ts = mesh.triangle(s);
    let scale = mesh.diameters()[s].max(mesh.diameters()[r]);
    mesh.triangle(r)
        .iter()
        .all(|&v| geom::dot(geom::sub(v, ts[0]), ns).abs() <= 1e-12 * scale)
}

/// Adjoint double layer blocks K'^0..K'^L (test element r, ansatz element s).
pub fn assemble_adjoint_double_layer(
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    opts: &AssemblyOptions,
) -> Result<ToeplitzBlockSequence> {
    let start = Instant::now();
    let n = mesh.len();
    let cdt = grid.c * grid.dt;
    let big_l = truncation_length(mesh.diameter(), grid.c, grid.dt);
    let rule = TriangleRule::degree5();
    let angular = AngularRule::new(opts.angular_points, opts.angular_span);
    let sources: Vec<SourceTriangle> = (0..n).map(|e| SourceTriangle::new(mesh.triangle(e))).collect();
    let rows: Vec<(Vec<(u32, u32, f64)>, AssemblyStats)> = (0..n)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let tr = mesh.triangle(r);
            let nu = mesh.normals()[r];
            let mut row = Vec::new();
            let mut stats = AssemblyStats::default();
            for s in 0..n {
                if s == r || coplanar(mesh, r, s) {
                    continue;
                }
                let (dmin, dmax) = pair_distances(mesh, r, s);
                let graded = shared_edge_first(mesh, r, s);
                let p = adjoint_double_layer_pair(
                    graded.unwrap_or(tr),
                    nu,
                    &sources[s],
                    dmin,
                    dmax,
                    grid.dt,
                    cdt,
                    &rule,
                    &angular,
                    &opts.outer,
                    graded.is_some(),
                );
                check_cap(opts, r, s, &p)?;
                fold_stats(&mut stats, r, s, &p);
                row.extend(p.entries.iter().map(|&(j, v)| (j, s as u32, v)));
            }
            Ok((row, stats))
        })
        .collect::<Result<_>>()?;
    let mut stats = AssemblyStats::default();
    let mut trip = Vec::with_capacity(n);
    for (row, st) in rows {
        merge_stats(&mut stats, &st);
        trip.push(row);
    }
    let mut seq = collect_blocks(OperatorTag::AdjointDoubleLayer, n, grid, big_l, trip, false);
    stats.seconds = start.elapsed().as_secs_f64();
    seq.stats = stats;
    Ok(seq)
}

/// Diagonal of the mass matrix ∫_{Γ_r} w(x) ds_x for piecewise constants.
pub fn assemble_mass<W>(mesh: &SurfaceMesh, weight: W) -> Result<Vec<f64>>
where
    W: Fn(Vec3, usize) -> f64,
{
    let rule = TriangleRule::degree5();
    (0..mesh.len())
        .map(|e| {
            let t = mesh.triangle(e);
            let mut acc = 0.0;
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let x = geom::affine(&t, p[0], p[1]);
                let g = weight(x, e);
                if !(g > 0.0) || !g.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "mass weight must be positive, got {g} at element {e}"
                    )));
                }
                acc += w * g;
            }
            Ok(acc * mesh.areas()[e])
        })
        .collect()
}

/// Pressure samples of the retarded single layer potential, indexed
/// `[(mode * points + p) * times + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSamples {
    pub modes: usize,
    pub points: usize,
    pub times: usize,
    pub values: Vec<f64>,
}

impl PotentialSamples {
    pub fn series(&self, mode: usize, point: usize) -> &[f64] {
        let start = (mode * self.points + point) * self.times;
        &self.values[start..start + self.times]
    }
}

/// u(t, x) = Σ_{m,s} φ^{m,s} [C_s(x; c(t - mΔt)) - C_s(x; c(t - (m+1)Δt))]
/// for every mode. `density(mode, step, element)` supplies coefficients.
pub fn eval_single_layer_potential<D>(
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    modes: usize,
    density: D,
    points: &[Vec3],
    times: &[f64],
) -> Result<PotentialSamples>
where
    D: Fn(usize, usize, usize) -> f64 + Sync,
{
    let h = mesh.h();
    for (i, &p) in points.iter().enumerate() {
        let d = mesh.distance_to(p);
        if d <= 1e-6 * h {
            return Err(Error::PointOnSurface { index: i, distance: d });
        }
    }
    let n = mesh.len();
    let steps = grid.steps;
    let sources: Vec<SourceTriangle> = (0..n).map(|e| SourceTriangle::new(mesh.triangle(e))).collect();
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&x| {
            let mut out = vec![0.0; modes * times.len()];
            let mut g = vec![0.0; steps + 1];
            for (s, src) in sources.iter().enumerate() {
                let tri = mesh.triangle(s);
                let dmin = geom::point_triangle_distance(x, &tri);
                let dmax = tri.iter().map(|&v| geom::dist(x, v)).fold(0.0, f64::max);
                let full = src.single_layer(x, None);
                let c_at = |rho: f64| {
                    if rho <= dmin {
                        0.0
                    } else if rho >= dmax {
                        full
                    } else {
                        src.single_layer(x, Some(rho))
                    }
                };
                for (ti, &t) in times.iter().enumerate() {
                    for (m, gm) in g.iter_mut().enumerate() {
                        *gm = c_at(grid.c * (t - grid.time(m)));
                    }
                    for mode in 0..modes {
                        let mut u = 0.0;
                        for m in 0..steps {
                            let w = g[m] - g[m + 1];
                            if w != 0.0 {
                                u += density(mode, m, s) * w;
                            }
                        }
                        out[mode * times.len() + ti] += u;
                    }
                }
            }
            out
        })
        .collect();
    let mut values = vec![0.0; modes * points.len() * times.len()];
    for (p, vals) in per_point.iter().enumerate() {
        for mode in 0..modes {
            let dst = (mode * points.len() + p) * times.len();
            values[dst..dst + times.len()].copy_from_slice(&vals[mode * times.len()..(mode + 1) * times.len()]);
        }
    }
    Ok(PotentialSamples {
        modes,
        points: points.len(),
        times: times.len(),
        values,
    })
}
