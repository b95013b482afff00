//! Oracle suites with measured residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom;
use crate::kernels::{oracle, pair_blocks, AssemblyOptions, OperatorTag, ToeplitzBlockSequence};
use crate::mesh::{SurfaceMesh, TimeGrid};
use crate::pc_basis::PcBasis;
use crate::post;
use crate::solver::{
    dense_dirichlet_solve, mc_reference_solve, mot_dirichlet, solve, ModeTensor, Operators, ProblemSpec,
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value < threshold`.
    pub fn below(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: value < threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// max |∫Ψ_iΨ_j dπ - δ_ij| over n = 1..=max_dim, J = 0..=max_degree, with a
/// quadrature of higher order than the basis default.
pub fn orthonormality(max_dim: usize, max_degree: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0);
    for n in 1..=max_dim {
        for j in 0..=max_degree {
            let b = PcBasis::with_quadrature(n, j, j + 3)?;
            let s = b.gram_matrix(|_| 1.0)?;
            let m = s.nrows();
            for r in 0..m {
                for c in 0..m {
                    let d = (s[(r, c)] - if r == c { 1.0 } else { 0.0 }).abs();
                    if d > worst {
                        worst = d;
                        at = (n, j);
                    }
                }
            }
        }
    }
    Ok(Check::below(
        "orthonormality",
        worst,
        1e-12,
        format!("n<={max_dim}, J<={max_degree}; worst at n={}, J={}", at.0, at.1),
    ))
}

/// S(g) for positive weights: symmetric positive definite, and S(1) = I.
pub fn gram_checks(dim: usize, degree: usize) -> Result<Vec<Check>> {
    let b = PcBasis::new(dim, degree)?;
    let one = b.gram_matrix(|_| 1.0)?;
    let id = nalgebra::DMatrix::<f64>::identity(one.nrows(), one.ncols());
    let mut out = vec![Check::below(
        "gram_identity",
        (one - id).abs().max(),
        1e-12,
        format!("S(1) = I, n={dim}, J={degree}"),
    )];
    type Weight = (&'static str, fn(&[f64]) -> f64);
    let weights: [Weight; 3] = [
        ("0.1+0.9(1+xi0)", |x| 0.1 + 0.9 * (1.0 + x[0])),
        ("exp(xi0*xi_last)", |x| (x[0] * x[x.len() - 1]).exp()),
        ("1.05+sin(3 xi0)", |x| 1.05 + (3.0 * x[0]).sin()),
    ];
    for (name, g) in weights {
        let s = b.gram_matrix(g)?;
        let ev = s.symmetric_eigenvalues();
        let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(Check {
            name: format!("gram_pd[{name}]"),
            passed: min > 0.0,
            value: min,
            threshold: 0.0,
            detail: "smallest eigenvalue must be positive".into(),
        });
    }
    Ok(out)
}

/// ‖Σ_j V^j‖_max / ‖V^0‖_max.
pub fn telescoping(v: &ToeplitzBlockSequence) -> Check {
    let sum = v.block_sum().abs().max();
    let v0 = v.dense(0).abs().max();
    let ratio = if v0 > 0.0 { sum / v0 } else { f64::INFINITY };
    Check::below("telescoping", ratio, 1e-8, format!("{} blocks", v.present().len()))
}

/// Every stored entry of block j must have its pair inside the light cone,
/// (j-1)cΔt < d_max and (j+1)cΔt > d_min.
pub fn causality(v: &ToeplitzBlockSequence, mesh: &SurfaceMesh) -> Check {
    let cdt = v.c * v.dt;
    let mut violations = 0usize;
    let mut entries = 0usize;
    for j in v.present() {
        let blk = v.block(j).expect("present");
        for (r, s, val) in blk.iter() {
            if val == 0.0 {
                continue;
            }
            entries += 1;
            let (tr, ts) = (mesh.triangle(r), mesh.triangle(s));
            let dmin = geom::triangle_distance(&tr, &ts);
            let dmax = geom::triangle_max_distance(&tr, &ts);
            let lo = (j as f64 - 1.0) * cdt;
            let hi = (j as f64 + 1.0) * cdt;
            if !(lo < dmax * (1.0 + 1e-12) && hi > dmin * (1.0 - 1e-12)) {
                violations += 1;
            }
        }
    }
    Check::below(
        "causality",
        violations as f64,
        0.5,
        format!("{entries} stored entries checked against pair distances"),
    )
}

/// MOT against one dense solve of the block lower-triangular system.
pub fn mot_vs_dense(v: &ToeplitzBlockSequence, rhs: &ModeTensor) -> Result<Check> {
    let a = mot_dirichlet(v, rhs)?;
    let b = dense_dirichlet_solve(v, rhs)?;
    let diff = a.data.iter().zip(&b.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.max_abs();
    let rel = if scale > 0.0 { diff / scale } else { diff };
    Ok(Check::below(
        "mot_vs_dense",
        rel,
        1e-10,
        format!("{} modes, {} steps, {} elements", rhs.modes, rhs.steps, rhs.elements),
    ))
}

/// |E + ½ Σ Fᵀφ| / |E| of a Dirichlet solve.
pub fn energy_identity(v: &ToeplitzBlockSequence, phi: &ModeTensor, f: &ModeTensor, label: &str) -> Result<Check> {
    let e = post::energy_functional(phi, v, f)?;
    let g = post::galerkin_energy(phi, f)?;
    let res = if e != 0.0 { (e - g).abs() / e.abs() } else { (e - g).abs() };
    Ok(Check::below(
        format!("energy_identity[{label}]"),
        res,
        1e-10,
        format!("E = {e:.12e}"),
    ))
}

/// SG mean and variance of the density against a Monte-Carlo reference.
#[derive(Debug, Clone, Serialize)]
pub struct McComparison {
    pub pairs: usize,
    pub agreeing: usize,
    pub fraction: f64,
    pub max_mean_z: f64,
    pub max_variance_z: f64,
}

/// Fraction of (step, element) pairs whose SG mean and variance both lie
/// within `sigmas` MC standard errors. A relative floor of 1e-12 of the
/// largest value absorbs pairs where both are zero.
pub fn compare_with_monte_carlo(
    sg: &ModeTensor,
    spec: &ProblemSpec,
    mesh: &SurfaceMesh,
    ops: &Operators,
    samples: usize,
    seed: u64,
    sigmas: f64,
) -> Result<McComparison> {
    let mc = mc_reference_solve(spec, mesh, &ops.grid, &ops.v, ops.k.as_ref(), samples, seed)?;
    let n = mesh.len();
    let mut mean_sg = vec![0.0; sg.steps * n];
    let mut var_sg = vec![0.0; sg.steps * n];
    for m in 0..sg.steps {
        let (mu, var) = sg.mean_variance(m);
        mean_sg[m * n..(m + 1) * n].copy_from_slice(&mu);
        var_sg[m * n..(m + 1) * n].copy_from_slice(&var);
    }
    let fm = 1e-12 * mean_sg.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let fv = 1e-12 * var_sg.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut agreeing = 0;
    let (mut zm, mut zv) = (0.0f64, 0.0f64);
    for k in 0..mean_sg.len() {
        let dm = (mean_sg[k] - mc.mean[k]).abs();
        let dv = (var_sg[k] - mc.variance[k]).abs();
        let ok_m = dm <= sigmas * mc.mean_std_err[k] + fm;
        let ok_v = dv <= sigmas * mc.variance_std_err[k] + fv;
        if mc.mean_std_err[k] > 0.0 {
            zm = zm.max(dm / mc.mean_std_err[k]);
        }
        if mc.variance_std_err[k] > 0.0 {
            zv = zv.max(dv / mc.variance_std_err[k]);
        }
        if ok_m && ok_v {
            agreeing += 1;
        }
    }
    Ok(McComparison {
        pairs: mean_sg.len(),
        agreeing,
        fraction: agreeing as f64 / mean_sg.len() as f64,
        max_mean_z: zm,
        max_variance_z: zv,
    })
}

/// Block entries of randomly drawn element pairs against seeded MC integration.
#[derive(Debug, Clone, Serialize)]
pub struct KernelOracleResult {
    pub operator: String,
    pub pairs: usize,
    pub comparisons: usize,
    pub exceedances: usize,
    pub allowed_exceedances: usize,
    pub max_z: f64,
    /// Entries whose support no sample hit; checked against the zero-hit limit.
    pub unresolved: usize,
    pub unresolved_violations: usize,
}

impl KernelOracleResult {
    pub fn passed(&self) -> bool {
        self.exceedances <= self.allowed_exceedances && self.max_z < 5.0 && self.unresolved_violations == 0
    }
}

/// Upper 99.9% quantile of Binomial(n, p).
pub fn binomial_quantile(n: usize, p: f64, q: f64) -> usize {
    let mut cdf = 0.0;
    let mut pmf = (1.0 - p).powi(n as i32);
    for k in 0..=n {
        cdf += pmf;
        if cdf >= q {
            return k;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    n
}

/// Two-sided probability of |Z| > 3 for a standard normal.
const P_OUTSIDE_3SIGMA: f64 = 0.002_699_796;

#[allow(clippy::too_many_arguments)]
pub fn kernel_oracle(
    tag: OperatorTag,
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    pairs: usize,
    samples: usize,
    seed: u64,
    opts: &AssemblyOptions,
) -> Result<KernelOracleResult> {
    if mesh.len() < 2 {
        return Err(Error::InvalidArgument("kernel oracle needs at least two elements".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comparisons = 0;
    let mut exceed = 0;
    let mut max_z: f64 = 0.0;
    let (mut unresolved, mut violations) = (0, 0);
    let mut drawn = 0;
    while drawn < pairs {
        let r = rng.gen_range(0..mesh.len());
        let s = rng.gen_range(0..mesh.len());
        if r == s {
            continue;
        }
        drawn += 1;
        let (tr, ts) = (mesh.triangle(r), mesh.triangle(s));
        let blocks = pair_blocks(tag, tr, ts, grid, opts)?;
        let nu = mesh.normals()[r];
        for (k, &(j, value)) in blocks.iter().enumerate() {
            if tag == OperatorTag::AdjointDoubleLayer && j == 0 {
                continue;
            }
            let mc_seed = seed ^ ((drawn as u64) << 20) ^ k as u64;
            let est = match tag {
                OperatorTag::SingleLayer => oracle::single_layer_block(&tr, &ts, j, grid.c, grid.dt, samples, mc_seed),
                OperatorTag::AdjointDoubleLayer => {
                    oracle::adjoint_double_layer_block(&tr, nu, &ts, j, grid.c, grid.dt, samples, mc_seed)
                }
                OperatorTag::Mass => unreachable!("pair_blocks rejects mass"),
            };
            if est.hits == 0 {
                unresolved += 1;
                if value.abs() > est.zero_hit_limit(0.999) {
                    violations += 1;
                }
                continue;
            }
            let z = est.z_score(value);
            comparisons += 1;
            max_z = max_z.max(z);
            if z > 3.0 {
                exceed += 1;
            }
        }
    }
    Ok(KernelOracleResult {
        operator: tag.name().into(),
        pairs,
        comparisons,
        exceedances: exceed,
        allowed_exceedances: binomial_quantile(comparisons, P_OUTSIDE_3SIGMA, 0.999),
        max_z,
        unresolved,
        unresolved_violations: violations,
    })
}

/// Quadrature settings for entries compared against MC integration.
pub fn oracle_options() -> AssemblyOptions {
    AssemblyOptions {
        outer: crate::kernels::AdaptiveOptions {
            rel_tol: 1e-9,
            max_depth: 20,
            max_leaves: 4096,
        },
        ..AssemblyOptions::default()
    }
}

/// K' entries of coplanar pairs in an assembled sequence; all must be zero.
pub fn coplanar_zero(k: &ToeplitzBlockSequence, mesh: &SurfaceMesh) -> Check {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for j in k.present() {
        for (r, s, v) in k.block(j).expect("present").iter() {
            let (nr, ns) = (mesh.normals()[r], mesh.normals()[s]);
            let d = geom::sub(mesh.centroids()[s], mesh.centroids()[r]);
            if geom::dot(nr, ns).abs() > 1.0 - 1e-12 && geom::dot(nr, d).abs() < 1e-12 * mesh.diameter() {
                count += 1;
                worst = worst.max(v.abs());
            }
        }
    }
    Check {
        name: "coplanar_zero".into(),
        passed: worst == 0.0,
        value: worst,
        threshold: 0.0,
        detail: format!("{count} stored coplanar entries"),
    }
}

/// Optional fault injected before the checks run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

pub struct SuiteInput<'a> {
    pub spec: &'a ProblemSpec,
    pub mesh: &'a SurfaceMesh,
    pub ops: &'a mut Operators,
    pub mc_samples: usize,
    pub kernel_pairs: usize,
    pub kernel_samples: usize,
    pub seed: u64,
    pub perturb: Option<Perturbation>,
}

/// The default suite: basis, operators, solver equivalence, identities and
/// seeded MC reproducibility.
pub fn run_suite(input: SuiteInput<'_>) -> Result<Report> {
    let SuiteInput {
        spec,
        mesh,
        ops,
        mc_samples,
        kernel_pairs,
        kernel_samples,
        seed,
        perturb,
    } = input;
    if let Some(p) = perturb {
        let blk = ops
            .v
            .block_mut(p.block)
            .ok_or_else(|| Error::InvalidArgument(format!("block {} is not stored", p.block)))?;
        blk.perturb(p.row, p.col, p.delta)?;
    }
    let mut report = Report::default();
    report.push(orthonormality(3, 8)?);
    for c in gram_checks(2, 4)? {
        report.push(c);
    }
    report.push(telescoping(&ops.v));
    report.push(causality(&ops.v, mesh));
    if let Some(k) = &ops.k {
        report.push(coplanar_zero(k, mesh));
    }

    let out = solve(spec, mesh, ops)?;
    match spec.kind {
        crate::solver::ProblemKind::DirichletSingleLayer => {
            report.push(mot_vs_dense(&ops.v, &out.rhs)?);
            report.push(energy_identity(&ops.v, &out.solution.coeffs, &out.rhs, &spec.name)?);
        }
        crate::solver::ProblemKind::AcousticSecondKind => {}
    }

    let tight = oracle_options();
    let mut tags = vec![OperatorTag::SingleLayer];
    if ops.k.is_some() {
        tags.push(OperatorTag::AdjointDoubleLayer);
    }
    for tag in tags {
        let r = kernel_oracle(tag, mesh, &ops.grid, kernel_pairs, kernel_samples, seed, &tight)?;
        report.push(Check {
            name: format!("kernel_oracle[{}]", r.operator),
            passed: r.passed(),
            value: r.exceedances as f64,
            threshold: r.allowed_exceedances as f64,
            detail: format!(
                "{} comparisons over {} pairs, max z {:.2}, {} unresolved ({} above the zero-hit limit)",
                r.comparisons, r.pairs, r.max_z, r.unresolved, r.unresolved_violations
            ),
        });
    }

    if mc_samples >= 2 {
        let c = compare_with_monte_carlo(&out.solution.coeffs, spec, mesh, ops, mc_samples, seed, 3.0)?;
        report.push(Check {
            name: "sg_vs_monte_carlo".into(),
            passed: c.fraction >= 0.99,
            value: c.fraction,
            threshold: 0.99,
            detail: format!(
                "{}/{} pairs, {} samples, max z mean {:.2} variance {:.2}",
                c.agreeing, c.pairs, mc_samples, c.max_mean_z, c.max_variance_z
            ),
        });
        let small = mc_samples.min(16);
        let a = mc_reference_solve(spec, mesh, &ops.grid, &ops.v, ops.k.as_ref(), small, seed)?;
        let b = mc_reference_solve(spec, mesh, &ops.grid, &ops.v, ops.k.as_ref(), small, seed)?;
        let same = a.mean == b.mean && a.variance == b.variance;
        report.push(Check {
            name: "monte_carlo_reproducible".into(),
            passed: same,
            value: if same { 0.0 } else { 1.0 },
            threshold: 0.0,
            detail: format!("two {small}-sample runs with seed {seed}"),
        });
    }
    Ok(report)
}
