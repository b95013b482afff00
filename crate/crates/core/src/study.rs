//! Convergence sweeps over the stochastic degree and the mesh level.

use crate::error::{Error, Result};
use crate::kernels::AssemblyOptions;
use crate::mesh::{gen_cube, gen_icosphere, SurfaceMesh};
use crate::post::{self, ConvergenceRecord, Richardson};
use crate::solver::{assemble_operators, solve, ModeTensor, Operators, ProblemKind, ProblemSpec, SolveOutput};

/// The surface a builtin problem family lives on.
pub fn default_mesh(kind: ProblemKind, level: usize) -> Result<SurfaceMesh> {
    match kind {
        ProblemKind::DirichletSingleLayer => gen_icosphere(level),
        ProblemKind::AcousticSecondKind => gen_cube(level),
    }
}

/// One sweep point; failures are kept and the sweep goes on.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub degree: usize,
    pub level: usize,
    pub dof: usize,
    pub energy: Option<f64>,
    /// |E + ½ Σ Fᵀφ| / |E| of the solve, Dirichlet only.
    pub identity_residual: Option<f64>,
    pub error: Option<f64>,
    pub failure: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub benchmark: f64,
    pub benchmark_label: String,
    /// Energy identity residual of the benchmark solve, Dirichlet degree sweeps only.
    pub benchmark_identity_residual: Option<f64>,
    pub richardson: Option<Richardson>,
    pub records: Vec<ConvergenceRecord>,
    pub rate: Option<post::RateFit>,
}

fn energy_of(ops: &Operators, out: &SolveOutput) -> Result<(f64, f64)> {
    let e = post::energy_functional(&out.solution.coeffs, &ops.v, &out.rhs)?;
    let g = post::galerkin_energy(&out.solution.coeffs, &out.rhs)?;
    let res = if e != 0.0 { (e - g).abs() / e.abs() } else { (e - g).abs() };
    Ok((e, res))
}

/// Modes of `a` embedded in the index set of `b`'s degree, by multi-index.
fn embed_modes(spec: &ProblemSpec, a: &ModeTensor, degree_a: usize, degree_b: usize) -> Result<ModeTensor> {
    let ba = spec.clone().with_degree(degree_a).basis()?;
    let bb = spec.clone().with_degree(degree_b).basis()?;
    let mut out = ModeTensor::zeros(bb.len(), a.steps, a.elements);
    for i in 0..ba.len() {
        let kappa = ba.index_set().multi_index(i);
        let Some(k) = bb.index_set().index_of(kappa) else {
            continue;
        };
        for m in 0..a.steps {
            out.slice_mut(k, m).copy_from_slice(a.slice(i, m));
        }
    }
    Ok(out)
}

fn difference(a: &ModeTensor, b: &ModeTensor) -> ModeTensor {
    let mut d = a.clone();
    for (x, y) in d.data.iter_mut().zip(&b.data) {
        *x -= y;
    }
    d
}

/// Errors of degrees `degrees` against a `benchmark_degree` solve on one mesh.
/// Dirichlet problems use the relative energy error, second-kind problems the
/// relative L2 space-time error of the density.
pub fn degree_sweep(
    spec: &ProblemSpec,
    mesh: &SurfaceMesh,
    ops: &Operators,
    degrees: &[usize],
    benchmark_degree: usize,
    level: usize,
) -> Result<SweepResult> {
    if degrees.is_empty() {
        return Err(Error::InvalidArgument("empty degree sweep".into()));
    }
    if let Some(&j) = degrees.iter().find(|&&j| j >= benchmark_degree) {
        return Err(Error::InvalidArgument(format!(
            "degree {j} is not below the benchmark degree {benchmark_degree}"
        )));
    }
    let dof = mesh.len() * ops.grid.steps;
    let bench_spec = spec.clone().with_degree(benchmark_degree);
    let bench = solve(&bench_spec, mesh, ops)?;
    let (bench_value, bench_norm, bench_res) = match spec.kind {
        ProblemKind::DirichletSingleLayer => {
            let (e, res) = energy_of(ops, &bench)?;
            (e, 0.0, Some(res))
        }
        ProblemKind::AcousticSecondKind => (
            0.0,
            post::l2_space_time_norm(&bench.solution.coeffs, mesh, &ops.grid)?,
            None,
        ),
    };
    let mut points = Vec::new();
    let mut records = Vec::new();
    for &j in degrees {
        let t0 = std::time::Instant::now();
        let run = || -> Result<(Option<f64>, Option<f64>, f64)> {
            let s = spec.clone().with_degree(j);
            let out = solve(&s, mesh, ops)?;
            match spec.kind {
                ProblemKind::DirichletSingleLayer => {
                    let (e, res) = energy_of(ops, &out)?;
                    Ok((Some(e), Some(res), post::relative_error(e, bench_value)?))
                }
                ProblemKind::AcousticSecondKind => {
                    let emb = embed_modes(spec, &out.solution.coeffs, j, benchmark_degree)?;
                    let d = post::l2_space_time_norm(&difference(&emb, &bench.solution.coeffs), mesh, &ops.grid)?;
                    if !(bench_norm > 0.0) {
                        return Err(Error::InvalidArgument("benchmark solution is zero".into()));
                    }
                    Ok((None, None, d / bench_norm))
                }
            }
        };
        let mut p = SweepPoint {
            degree: j,
            level,
            dof,
            energy: None,
            identity_residual: None,
            error: None,
            failure: None,
            seconds: 0.0,
        };
        match run() {
            Ok((e, res, err)) => {
                p.energy = e;
                p.identity_residual = res;
                p.error = Some(err);
                records.push(
                    ConvergenceRecord::new(format!("J={j}"), (j + 1) as f64, err)?
                        .with_level(level)
                        .with_cfl(ops.grid.achieved_cfl),
                );
            }
            Err(e) => p.failure = Some(e.to_string()),
        }
        p.seconds = t0.elapsed().as_secs_f64();
        points.push(p);
    }
    let positive: Vec<ConvergenceRecord> = records.iter().filter(|r| r.error > 0.0).cloned().collect();
    Ok(SweepResult {
        points,
        benchmark: if spec.kind == ProblemKind::DirichletSingleLayer { bench_value } else { bench_norm },
        benchmark_label: format!("J={benchmark_degree}"),
        benchmark_identity_residual: bench_res,
        richardson: None,
        rate: post::fit_rate(&positive).ok(),
        records,
    })
}

/// Relative energy errors over mesh levels against the Richardson limit of
/// the three finest levels, fitted in the space-time DOF.
pub fn level_sweep(
    spec: &ProblemSpec,
    levels: &[usize],
    opts: &AssemblyOptions,
    mut progress: impl FnMut(&SweepPoint),
) -> Result<SweepResult> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("empty level sweep".into()));
    }
    if spec.kind != ProblemKind::DirichletSingleLayer {
        return Err(Error::InvalidArgument(
            "level sweeps use the energy functional and need a Dirichlet problem".into(),
        ));
    }
    if levels.len() < 3 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "level sweep needs at least three increasing levels, got {levels:?}"
        )));
    }
    let mut points = Vec::new();
    for &level in levels {
        let t0 = std::time::Instant::now();
        let mut p = SweepPoint {
            degree: spec.degree,
            level,
            dof: 0,
            energy: None,
            identity_residual: None,
            error: None,
            failure: None,
            seconds: 0.0,
        };
        let run = || -> Result<(usize, f64, f64)> {
            let mesh = default_mesh(spec.kind, level)?;
            let ops = assemble_operators(spec, &mesh, opts)?;
            let out = solve(spec, &mesh, &ops)?;
            let (e, res) = energy_of(&ops, &out)?;
            Ok((mesh.len() * ops.grid.steps, e, res))
        };
        match run() {
            Ok((dof, e, res)) => {
                p.dof = dof;
                p.energy = Some(e);
                p.identity_residual = Some(res);
            }
            Err(e) => p.failure = Some(e.to_string()),
        }
        p.seconds = t0.elapsed().as_secs_f64();
        progress(&p);
        points.push(p);
    }
    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.energy.is_some()).collect();
    if ok.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {} levels solved; extrapolation needs three",
            ok.len()
        )));
    }
    let last = &ok[ok.len() - 3..];
    let x = [0, 1, 2].map(|k| 1.0 / last[k].dof as f64);
    let e = [0, 1, 2].map(|k| last[k].energy.expect("solved"));
    let rich = post::richardson_extrapolate(x, e)?;
    let mut records = Vec::new();
    for p in points.iter_mut() {
        if let Some(e) = p.energy {
            let err = post::relative_error(e, rich.limit)?;
            p.error = Some(err);
            records.push(ConvergenceRecord::new(format!("level {}", p.level), p.dof as f64, err)?.with_level(p.level));
        }
    }
    let positive: Vec<ConvergenceRecord> = records.iter().filter(|r| r.error > 0.0).cloned().collect();
    Ok(SweepResult {
        points,
        benchmark: rich.limit,
        benchmark_label: "richardson".into(),
        benchmark_identity_residual: None,
        richardson: Some(rich),
        rate: post::fit_rate(&positive).ok(),
        records,
    })
}
