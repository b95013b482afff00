use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sgbem::kernels::{AssemblyOptions, ToeplitzBlockSequence};
use sgbem::mesh::{gen_cube, gen_icosphere, write_vtk, SurfaceMesh, TimeGrid};
use sgbem::post::{self, ConvergenceRecord};
use sgbem::solver::{assemble_operators, solve, Operators, ProblemKind, StochasticSolution};
use sgbem::study::{degree_sweep, level_sweep, SweepResult};
use sgbem::validate::{run_suite, Perturbation, SuiteInput};

use crate::config::{invalid, RunConfig};
use crate::run_dir::RunDir;

/// Raised when validation ran and at least one invariant failed.
#[derive(Debug)]
pub struct ChecksFailed(pub usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} validation check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

fn quadrature_json(o: &AssemblyOptions) -> Value {
    json!({
        "outer_rel_tol": o.outer.rel_tol,
        "outer_max_depth": o.outer.max_depth,
        "outer_max_leaves": o.outer.max_leaves,
        "angular_points": o.angular_points,
        "angular_span": o.angular_span,
    })
}

fn blocks_json(b: &ToeplitzBlockSequence) -> Value {
    json!({
        "operator": b.tag.name(),
        "truncation": b.truncation(),
        "present_blocks": b.present().len(),
        "nnz": b.nnz(),
        "pairs": b.stats.pairs,
        "capped_pairs": b.stats.capped_pairs,
        "max_rel_error_estimate": b.stats.max_rel_error,
        "seconds": b.stats.seconds,
    })
}

fn grid_json(g: &TimeGrid) -> Value {
    json!({
        "dt": g.dt,
        "steps": g.steps,
        "horizon": g.horizon(),
        "c": g.c,
        "requested_cfl": g.requested_cfl,
        "achieved_cfl": g.achieved_cfl,
    })
}

fn mesh_json(m: &SurfaceMesh) -> Value {
    json!({
        "elements": m.len(),
        "vertices": m.vertices().len(),
        "h": m.h(),
        "area": m.total_area(),
        "closed": m.is_closed(),
        "patches": m.patch_names(),
    })
}

fn formulation(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::DirichletSingleLayer => "dirichlet single layer, first kind",
        ProblemKind::AcousticSecondKind => "acoustic impedance, second kind (adjoint double layer)",
    }
}

pub fn cmd_mesh(kind: &str, level: usize, out: &Path) -> Result<()> {
    let mesh = match kind {
        "icosphere" => gen_icosphere(level)?,
        "cube" => gen_cube(level)?,
        other => return Err(invalid("kind", format!("expected icosphere or cube, got `{other}`"))),
    };
    let mut run = RunDir::create(out, "mesh")?;
    let vtk = run.file("mesh.vtk");
    write_vtk(&vtk, &mesh, &[("patch", &mesh.patches().iter().map(|&p| p as f64).collect::<Vec<_>>())])?;
    let summary = json!({ "kind": kind, "level": level, "mesh": mesh_json(&mesh) });
    run.write_json("summary.json", &summary)?;
    println!("{} level {level}: {} elements, h = {:.6}", kind, mesh.len(), mesh.h());
    let cfg = RunConfig {
        level,
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    run.finish(&cfg, "ok")
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let opts = cfg.assembly_options();
    let mut run = RunDir::create(&cfg.output_dir, "solve")?;
    let t0 = Instant::now();
    let mesh = cfg.mesh()?;
    let ops = assemble_operators(&spec, &mesh, &opts)?;
    let t_assembly = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let out = solve(&spec, &mesh, &ops)?;
    let t_solve = t1.elapsed().as_secs_f64();

    let sol = &out.solution;
    sol.write(&run.file("solution.sgb"))?;
    sol.write_mean_variance_csv(&run.file("mean_variance.csv"), &[])?;
    write_mean_variance_vtk(&run.file("mean_variance.vtk"), &mesh, sol)?;

    let mut results = json!({
        "l2_space_time_norm": post::l2_space_time_norm(&sol.coeffs, &mesh, &ops.grid)?,
        "max_abs_coefficient": sol.coeffs.max_abs(),
    });
    if spec.kind == ProblemKind::DirichletSingleLayer {
        let e = post::energy_functional(&sol.coeffs, &ops.v, &out.rhs)?;
        let g = post::galerkin_energy(&sol.coeffs, &out.rhs)?;
        results["energy"] = json!(e);
        results["galerkin_identity_residual"] = json!(if e != 0.0 { (e - g).abs() / e.abs() } else { 0.0 });
        println!("energy {e:.12e}");
    }
    let summary = json!({
        "problem": spec.name,
        "formulation": formulation(spec.kind),
        "dim": spec.dim,
        "degree": spec.degree,
        "modes": sol.coeffs.modes,
        "mesh": mesh_json(&mesh),
        "time_grid": grid_json(&ops.grid),
        "quadrature": quadrature_json(&opts),
        "operators": operators_json(&ops),
        "results": results,
        "timings": { "assembly_seconds": t_assembly, "solve_seconds": t_solve },
        "seed": cfg.seed,
    });
    run.write_json("summary.json", &summary)?;
    println!(
        "solved {} on {} elements x {} steps, {} modes; achieved CFL {:.4}; output in {}",
        spec.name,
        mesh.len(),
        ops.grid.steps,
        sol.coeffs.modes,
        ops.grid.achieved_cfl,
        run.root().display()
    );
    run.finish(cfg, "ok")
}

fn operators_json(ops: &Operators) -> Value {
    let mut v = vec![blocks_json(&ops.v)];
    if let Some(k) = &ops.k {
        v.push(blocks_json(k));
    }
    Value::Array(v)
}

fn write_mean_variance_vtk(path: &Path, mesh: &SurfaceMesh, sol: &StochasticSolution) -> Result<()> {
    let mut names = Vec::new();
    let mut data = Vec::new();
    for m in 0..sol.coeffs.steps {
        let (mean, var) = sol.coeffs.mean_variance(m);
        names.push(format!("mean_step{m}"));
        data.push(mean);
        names.push(format!("variance_step{m}"));
        data.push(var);
    }
    let fields: Vec<(&str, &[f64])> = names.iter().map(|n| n.as_str()).zip(data.iter().map(|d| d.as_slice())).collect();
    Ok(post::export_vtk(path, mesh, &fields)?)
}

fn sweep_json(r: &SweepResult) -> Value {
    let points: Vec<Value> = r
        .points
        .iter()
        .map(|p| {
            json!({
                "degree": p.degree,
                "level": p.level,
                "dof": p.dof,
                "energy": p.energy,
                "identity_residual": p.identity_residual,
                "error": p.error,
                "failure": p.failure,
                "seconds": p.seconds,
            })
        })
        .collect();
    json!({
        "benchmark": r.benchmark,
        "benchmark_label": r.benchmark_label,
        "richardson": r.richardson.map(|x| json!({"limit": x.limit, "constant": x.constant, "order": x.order})),
        "slope": r.rate.map(|f| f.slope),
        "points": points,
    })
}

pub fn cmd_convergence(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let opts = cfg.assembly_options();
    let sweep = cfg
        .sweep
        .as_deref()
        .ok_or_else(|| invalid("sweep", "convergence needs `sweep = \"degrees\"` or `\"levels\"`"))?;
    let result = match sweep {
        "degrees" => {
            if cfg.degrees.is_empty() {
                return Err(invalid("degrees", "empty sweep"));
            }
            let bench = cfg.benchmark_degree.unwrap_or(cfg.degrees.iter().max().copied().unwrap_or(0) + 4);
            if cfg.degrees.iter().any(|&j| j >= bench) {
                return Err(invalid("benchmark_degree", format!("must exceed every swept degree, got {bench}")));
            }
            let mesh = cfg.mesh()?;
            let ops = assemble_operators(&spec, &mesh, &opts)?;
            degree_sweep(&spec, &mesh, &ops, &cfg.degrees, bench, cfg.level)?
        }
        _ => {
            if cfg.levels.is_empty() {
                return Err(invalid("levels", "empty sweep"));
            }
            if cfg.mesh_file.is_some() {
                return Err(invalid("mesh_file", "level sweeps use the builtin mesh family"));
            }
            level_sweep(&spec, &cfg.levels, &opts, |p| {
                eprintln!("level {}: energy {:?} ({:.1} s){}", p.level, p.energy, p.seconds,
                    p.failure.as_ref().map(|f| format!(" failed: {f}")).unwrap_or_default());
            })
            .map_err(|e| match e {
                sgbem::Error::InvalidArgument(m) => invalid("levels", m),
                e => e.into(),
            })?
        }
    };
    let mut run = RunDir::create(&cfg.output_dir, "convergence")?;
    post::write_records_csv(&run.file("convergence.csv"), &result.records)?;
    let summary = json!({
        "problem": spec.name,
        "formulation": formulation(spec.kind),
        "sweep": sweep,
        "quadrature": quadrature_json(&opts),
        "result": sweep_json(&result),
    });
    run.write_json("summary.json", &summary)?;
    print_records(&result.records);
    if let Some(f) = result.rate {
        println!("fitted slope {:.4}", f.slope);
    }
    let failed = result.points.iter().filter(|p| p.failure.is_some()).count();
    run.finish(cfg, if failed == 0 { "ok" } else { "partial" })
}

fn print_records(records: &[ConvergenceRecord]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in records {
        let _ = writeln!(out, "{:<12} {:>12} {:.6e}", r.label, r.abscissa, r.error);
    }
}

pub fn cmd_postprocess(cfg: &RunConfig, solution: &Path, extra_points: &[[f64; 3]]) -> Result<()> {
    cfg.validate()?;
    let sol = StochasticSolution::read(solution)?;
    let mesh = cfg.mesh()?;
    if !sol.matches_mesh(&mesh) {
        return Err(invalid("level", "the configured mesh does not match the solution's mesh hash"));
    }
    let mut points = cfg.points.clone();
    points.extend_from_slice(extra_points);
    if points.is_empty() {
        return Err(invalid("points", "need at least one field point"));
    }
    let horizon = sol.grid.horizon();
    let nt = cfg.time_samples;
    let dt = horizon / (nt - 1) as f64;
    let times: Vec<f64> = (0..nt).map(|k| k as f64 * dt).collect();
    let p = post::field_pressure(&sol, &mesh, &points, &times).map_err(|e| match e {
        sgbem::Error::PointOnSurface { index, distance } => invalid(
            &format!("points[{index}]"),
            format!("lies on the boundary (distance {distance:e})"),
        ),
        e => e.into(),
    })?;
    let mut run = RunDir::create(&cfg.output_dir, "postprocess")?;
    write_csv(&run.file("pressure_modes.csv"), "point,mode,time,value", |w| {
        for pt in 0..p.points {
            for m in 0..p.modes {
                for (t, v) in p.times.iter().zip(p.mode_series(m, pt)) {
                    writeln!(w, "{pt},{m},{t:e},{v:e}")?;
                }
            }
        }
        Ok(())
    })?;
    write_csv(&run.file("pressure.csv"), "point,time,mean,std", |w| {
        for pt in 0..p.points {
            for ((t, m), s) in p.times.iter().zip(p.mean_series(pt)).zip(p.std_series(pt)) {
                writeln!(w, "{pt},{t:e},{m:e},{s:e}")?;
            }
        }
        Ok(())
    })?;
    let mut summary = json!({
        "solution": solution,
        "points": points,
        "time_samples": nt,
        "sample_dt": dt,
        "max_abs_mean": p.mean.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        "max_std": p.std.iter().fold(0.0f64, |a, x| a.max(*x)),
    });
    if cfg.fft {
        let spectra: Vec<post::Spectrum> = (0..p.points)
            .map(|pt| post::fft_spl_a_weighted(p.mean_series(pt), dt, post::DB_FLOOR))
            .collect::<sgbem::Result<_>>()?;
        write_csv(&run.file("spectrum_dba.csv"), "point,frequency,spl_db,spl_dba", |w| {
            for (pt, s) in spectra.iter().enumerate() {
                for k in 0..s.freqs.len() {
                    writeln!(w, "{pt},{:e},{:.6},{:.6}", s.freqs[k], s.spl[k], s.spl_a[k])?;
                }
            }
            Ok(())
        })?;
        let bins = spectra[0].freqs.len();
        let mean_dba: Vec<f64> = (0..bins)
            .map(|k| post::energetic_mean_db(&spectra.iter().map(|s| s.spl_a[k]).collect::<Vec<_>>()))
            .collect();
        write_csv(&run.file("mean_spectrum_dba.csv"), "frequency,mean_spl_dba", |w| {
            for (f, l) in spectra[0].freqs.iter().zip(&mean_dba) {
                writeln!(w, "{f:e},{l:.6}")?;
            }
            Ok(())
        })?;
        summary["fft_bins"] = json!(bins);
    }
    run.write_json("summary.json", &summary)?;
    println!("{} points x {} times written to {}", p.points, nt, run.root().display());
    run.finish(cfg, "ok")
}

fn write_csv(
    path: &PathBuf,
    header: &str,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "{header}").and_then(|_| body(&mut w)).and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_validate(cfg: &RunConfig, inject_fault: bool) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let mesh = cfg.mesh()?;
    let opts = cfg.assembly_options();
    let mut ops = assemble_operators(&spec, &mesh, &opts)?;
    let perturb = if inject_fault {
        let v0 = ops.v.block(0).context("V^0 is empty")?;
        let (r, c, _) = v0.iter().next().context("V^0 is empty")?;
        Some(Perturbation {
            block: 0,
            row: r,
            col: c,
            delta: 1e-3 * v0.iter().fold(0.0f64, |a, (_, _, v)| a.max(v.abs())),
        })
    } else {
        None
    };
    let report = run_suite(SuiteInput {
        spec: &spec,
        mesh: &mesh,
        ops: &mut ops,
        mc_samples: cfg.mc_samples,
        kernel_pairs: cfg.kernel_pairs,
        kernel_samples: cfg.kernel_samples,
        seed: cfg.seed,
        perturb,
    })?;
    let mut run = RunDir::create(&cfg.output_dir, "validate")?;
    run.write_json(
        "report.json",
        &json!({
            "problem": spec.name,
            "mesh": mesh_json(&mesh),
            "time_grid": grid_json(&ops.grid),
            "quadrature": quadrature_json(&opts),
            "fault_injected": inject_fault,
            "checks": report.checks,
        }),
    )?;
    for c in &report.checks {
        println!(
            "{} {:<32} value {:.3e} threshold {:.3e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.detail
        );
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    run.finish(cfg, if failed == 0 { "ok" } else { "failed" })?;
    if failed > 0 {
        return Err(ChecksFailed(failed).into());
    }
    Ok(())
}
