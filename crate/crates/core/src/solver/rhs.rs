use rayon::prelude::*;

use super::ModeTensor;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{SurfaceMesh, TimeGrid};
use crate::pc_basis::PcBasis;
use crate::quadrature::{gauss_legendre_on, TriangleRule};

/// How a source enters the test functions of step l.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeWeighting {
    /// ∫_{I_l} ∂_t f dt = f(t_{l+1}) - f(t_l), exact.
    Increment,
    /// ∫_{I_l} f dt by 4-point Gauss.
    Integral,
}

impl TimeWeighting {
    fn rule(self, grid: &TimeGrid, l: usize) -> Vec<(f64, f64)> {
        let (a, b) = (grid.time(l), grid.time(l + 1));
        match self {
            TimeWeighting::Increment => vec![(a, -1.0), (b, 1.0)],
            TimeWeighting::Integral => {
                let (x, w) = gauss_legendre_on(4, a, b);
                x.into_iter().zip(w).collect()
            }
        }
    }
}

const CHUNK: usize = 16;

/// Deterministic moments ∫_{Γ_s} ∫ w(t) f(t, x, ξ) for a fixed ξ and the
/// elements in `elems`; layout [local element * steps + l].
pub fn source_moments<F>(
    f: &F,
    xi: &[f64],
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    weighting: TimeWeighting,
    elems: std::ops::Range<usize>,
) -> Result<Vec<f64>>
where
    F: Fn(f64, Vec3, Vec3, &[f64]) -> f64 + ?Sized,
{
    let tri = TriangleRule::degree5();
    let rules: Vec<Vec<(f64, f64)>> = (0..grid.steps).map(|l| weighting.rule(grid, l)).collect();
    let mut out = vec![0.0; elems.len() * grid.steps];
    for (k, e) in elems.enumerate() {
        let t = mesh.triangle(e);
        let n = mesh.normals()[e];
        let area = mesh.areas()[e];
        for (p, wp) in tri.points.iter().zip(&tri.weights) {
            let x = geom::affine(&t, p[0], p[1]);
            for (l, rule) in rules.iter().enumerate() {
                let mut acc = 0.0;
                for &(time, wt) in rule {
                    let v = f(time, x, n, xi);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteSource { t: time, x, xi: xi.to_vec() });
                    }
                    acc += wt * v;
                }
                out[k * grid.steps + l] += area * wp * acc;
            }
        }
    }
    Ok(out)
}

fn project<F>(f: &F, basis: &PcBasis, mesh: &SurfaceMesh, grid: &TimeGrid, weighting: TimeWeighting) -> Result<ModeTensor>
where
    F: Fn(f64, Vec3, Vec3, &[f64]) -> f64 + Sync + ?Sized,
{
    let nodes = basis.tensor_nodes();
    let q = nodes.len();
    let modes = basis.len();
    let steps = grid.steps;
    let n = mesh.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&lo| -> Result<_> {
            let hi = (lo + CHUNK).min(n);
            let per = (hi - lo) * steps;
            // samples[(local * steps + l) * q + node]
            let mut samples = vec![0.0; per * q];
            for (k, (xi, _)) in nodes.iter().enumerate() {
                let m = source_moments(f, xi, mesh, grid, weighting, lo..hi)?;
                for (j, v) in m.into_iter().enumerate() {
                    samples[j * q + k] = v;
                }
            }
            Ok((lo, basis.project_tensor_samples(&samples)))
        })
        .collect::<Result<_>>()?;
    let mut out = ModeTensor::zeros(modes, steps, n);
    for (lo, proj) in chunks {
        for (j, coeffs) in proj.chunks(modes).enumerate() {
            let (e, l) = (lo + j / steps, j % steps);
            for (i, v) in coeffs.iter().enumerate() {
                out.set(i, l, e, *v);
            }
        }
    }
    Ok(out)
}

/// F_i^{l,r} = ∫_Ξ ∫_{I_l} ∫_{Γ_r} ∂_t f Ψ_i, with the time integral done
/// exactly as f(t_{l+1}) - f(t_l).
pub fn project_rhs<F>(f: &F, basis: &PcBasis, mesh: &SurfaceMesh, grid: &TimeGrid) -> Result<ModeTensor>
where
    F: Fn(f64, Vec3, Vec3, &[f64]) -> f64 + Sync + ?Sized,
{
    project(f, basis, mesh, grid, TimeWeighting::Increment)
}

/// F_i^{l,r} = ∫_Ξ ∫_{I_l} ∫_{Γ_r} f Ψ_i.
pub fn project_rhs_time_integral<F>(f: &F, basis: &PcBasis, mesh: &SurfaceMesh, grid: &TimeGrid) -> Result<ModeTensor>
where
    F: Fn(f64, Vec3, Vec3, &[f64]) -> f64 + Sync + ?Sized,
{
    project(f, basis, mesh, grid, TimeWeighting::Integral)
}

/// Projection of a ξ-independent source: mode 0 only, the rest exactly zero.
pub fn project_deterministic<F>(
    f: &F,
    basis: &PcBasis,
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    weighting: TimeWeighting,
) -> Result<ModeTensor>
where
    F: Fn(f64, Vec3, Vec3, &[f64]) -> f64 + ?Sized,
{
    let xi = vec![0.0; basis.dim()];
    let m = source_moments(f, &xi, mesh, grid, weighting, 0..mesh.len())?;
    let mut out = ModeTensor::zeros(basis.len(), grid.steps, mesh.len());
    for e in 0..mesh.len() {
        for l in 0..grid.steps {
            out.set(0, l, e, m[e * grid.steps + l]);
        }
    }
    Ok(out)
}
