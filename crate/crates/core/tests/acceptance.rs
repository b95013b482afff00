//! Acceptance criteria 1-8, one PASS/FAIL line each.
//!
//! `SGBEM_ACCEPTANCE=1,3,8 cargo test --test acceptance` runs a subset.

use std::cell::{OnceCell, RefCell};
use std::sync::Arc;
use std::time::Instant;

use sgbem::geom;
use sgbem::kernels::{pair_blocks, AssemblyOptions, OperatorTag};
use sgbem::mesh::SurfaceMesh;
use sgbem::solver::{assemble_operators, builtin, dirichlet_sphere_source, solve, Operators, ProblemSpec};
use sgbem::study::{default_mesh, degree_sweep, level_sweep};
use sgbem::validate::{
    causality, compare_with_monte_carlo, coplanar_zero, energy_identity, gram_checks, kernel_oracle, mot_vs_dense,
    oracle_options, orthonormality, telescoping,
};

const SEED: u64 = 20240901;

struct Problem {
    spec: ProblemSpec,
    mesh: SurfaceMesh,
    ops: Operators,
}

fn problem(name: &str, degree: usize, level: usize) -> Problem {
    let spec = builtin(name, degree).unwrap();
    let mesh = default_mesh(spec.kind, level).unwrap();
    let ops = assemble_operators(&spec, &mesh, &AssemblyOptions::default()).unwrap();
    Problem { spec, mesh, ops }
}

#[derive(Default)]
struct Ctx {
    sphere1: OnceCell<Problem>,
    sphere2: OnceCell<Problem>,
    cube1: OnceCell<Problem>,
    /// (label, |E + ½ΣFᵀφ| / |E|) of every Dirichlet solve so far.
    identities: RefCell<Vec<(String, f64)>>,
}

impl Ctx {
    fn sphere1(&self) -> &Problem {
        self.sphere1.get_or_init(|| problem("dirichlet-sphere", 1, 1))
    }

    fn sphere2(&self) -> &Problem {
        self.sphere2.get_or_init(|| problem("dirichlet-sphere", 4, 2))
    }

    fn cube1(&self) -> &Problem {
        self.cube1.get_or_init(|| problem("acoustic-cube-2ndkind", 4, 1))
    }

    fn identity(&self, label: String, value: f64) {
        self.identities.borrow_mut().push((label, value));
    }
}

type Outcome = (bool, String);

fn spectral_decay(ctx: &Ctx) -> Outcome {
    let p = ctx.sphere2();
    let r = degree_sweep(&p.spec, &p.mesh, &p.ops, &[0, 1, 2, 3, 4, 5], 8, 2).unwrap();
    let mut errs = Vec::new();
    for pt in &r.points {
        if let Some(res) = pt.identity_residual {
            ctx.identity(format!("level 2, J={}", pt.degree), res);
        }
        errs.push(pt.error.unwrap_or(f64::NAN));
    }
    if let Some(res) = r.benchmark_identity_residual {
        ctx.identity("level 2, J=8".into(), res);
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    // Reduction from J to J+1.
    let factors: Vec<f64> = (1..=4).map(|j| errs[j] / errs[j + 1]).collect();
    let ok = monotone && factors.iter().all(|&f| f >= 10.0) && errs[4] < 1e-5;
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    let fs: Vec<String> = factors.iter().map(|f| format!("{f:.0}")).collect();
    (
        ok,
        format!(
            "errors J=0..5 [{}], reduction J -> J+1 for J=1..4 [{}], {} elements x {} steps",
            shown.join(", "),
            fs.join(", "),
            p.mesh.len(),
            p.ops.grid.steps
        ),
    )
}

fn space_time_rate(ctx: &Ctx) -> Outcome {
    let spec = builtin("dirichlet-sphere", 4).unwrap();
    let r = level_sweep(&spec, &[1, 2, 3], &AssemblyOptions::default(), |p| {
        if let Some(res) = p.identity_residual {
            ctx.identity(format!("level {}, J=4", p.level), res);
        }
    })
    .unwrap();
    let slope = r.rate.map(|f| f.slope).unwrap_or(f64::NAN);
    let pts: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("{} DOF E={:.6} err={:.4}", p.dof, p.energy.unwrap_or(f64::NAN), p.error.unwrap_or(f64::NAN)))
        .collect();
    (
        (-0.70..=-0.35).contains(&slope),
        format!(
            "slope {slope:.3} (want [-0.70, -0.35]); {}; limit {:.6}",
            pts.join("; "),
            r.benchmark
        ),
    )
}

fn mot_dense(ctx: &Ctx) -> Outcome {
    let mut spec = builtin("dirichlet-sphere", 1).unwrap();
    spec.dim = 1;
    spec.source_dim = 1;
    spec.source = Arc::new(|t, x, n, xi| dirichlet_sphere_source(t, x, n, &[xi[0], 0.0, 0.0]));
    let p = ctx.sphere1();
    let out = solve(&spec, &p.mesh, &p.ops).unwrap();
    let c = mot_vs_dense(&p.ops.v, &out.rhs).unwrap();
    let id = energy_identity(&p.ops.v, &out.solution.coeffs, &out.rhs, "mot").unwrap();
    ctx.identity("level 1, n=1, J=1".into(), id.value);
    (
        c.passed && p.ops.grid.steps == 5,
        format!("max rel difference {:.2e}, {} steps, {}", c.value, p.ops.grid.steps, c.detail),
    )
}

fn telescoping_causality(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, p) in [("sphere 1", ctx.sphere1()), ("sphere 2", ctx.sphere2()), ("cube 1", ctx.cube1())] {
        let t = telescoping(&p.ops.v);
        let c = causality(&p.ops.v, &p.mesh);
        ok &= t.passed && c.passed;
        parts.push(format!("{label}: ratio {:.1e}, {} outside cone", t.value, c.value));
    }
    (ok, parts.join("; "))
}

fn energy_identities(ctx: &Ctx) -> Outcome {
    if ctx.identities.borrow().is_empty() {
        let p = ctx.sphere1();
        for j in 0..=3 {
            let spec = p.spec.clone().with_degree(j);
            let out = solve(&spec, &p.mesh, &p.ops).unwrap();
            let c = energy_identity(&p.ops.v, &out.solution.coeffs, &out.rhs, "").unwrap();
            ctx.identity(format!("level 1, J={j}"), c.value);
        }
    }
    let ids = ctx.identities.borrow();
    let (worst_label, worst) = ids
        .iter()
        .fold(("", 0.0f64), |(l, w), (lab, v)| if *v > w { (lab.as_str(), *v) } else { (l, w) });
    (
        ids.iter().all(|(_, v)| *v < 1e-10),
        format!("{} solves, worst {worst:.2e} ({worst_label})", ids.len()),
    )
}

fn sg_vs_mc(ctx: &Ctx) -> Outcome {
    let p = ctx.cube1();
    let out = solve(&p.spec, &p.mesh, &p.ops).unwrap();
    let c = compare_with_monte_carlo(&out.solution.coeffs, &p.spec, &p.mesh, &p.ops, 2000, SEED, 3.0).unwrap();
    (
        c.fraction >= 0.99,
        format!(
            "{}/{} pairs agree ({:.4}), max z mean {:.2}, variance {:.2}",
            c.agreeing, c.pairs, c.fraction, c.max_mean_z, c.max_variance_z
        ),
    )
}

fn coplanar_pair(mesh: &SurfaceMesh) -> Option<(usize, usize)> {
    for r in 0..mesh.len() {
        for s in 0..mesh.len() {
            let d = geom::sub(mesh.centroids()[s], mesh.centroids()[r]);
            if r != s
                && geom::dot(mesh.normals()[r], mesh.normals()[s]) > 1.0 - 1e-12
                && geom::dot(mesh.normals()[r], d).abs() < 1e-12
            {
                return Some((r, s));
            }
        }
    }
    None
}

fn kernel_oracles(ctx: &Ctx) -> Outcome {
    let opts = oracle_options();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, p) in [("sphere 1", ctx.sphere1()), ("cube 1", ctx.cube1())] {
        for tag in [OperatorTag::SingleLayer, OperatorTag::AdjointDoubleLayer] {
            let r = kernel_oracle(tag, &p.mesh, &p.ops.grid, 50, 100_000, SEED, &opts).unwrap();
            ok &= r.passed();
            parts.push(format!(
                "{label} {}: {}/{} beyond 3 sigma (allowed {}), max z {:.2}, {} unresolved ({} above limit)",
                r.operator,
                r.exceedances,
                r.comparisons,
                r.allowed_exceedances,
                r.max_z,
                r.unresolved,
                r.unresolved_violations
            ));
        }
    }
    let cube = ctx.cube1();
    let k = cube.ops.k.as_ref().expect("second-kind problem has K'");
    let cz = coplanar_zero(k, &cube.mesh);
    let (r, s) = coplanar_pair(&cube.mesh).expect("cube faces hold coplanar pairs");
    let direct = pair_blocks(
        OperatorTag::AdjointDoubleLayer,
        cube.mesh.triangle(r),
        cube.mesh.triangle(s),
        &cube.ops.grid,
        &opts,
    )
    .unwrap();
    let direct_zero = direct.iter().all(|&(_, v)| v == 0.0);
    ok &= cz.passed && direct_zero;
    parts.push(format!(
        "coplanar K' max {:.1e} ({}), pair ({r},{s}) gives {} nonzero blocks",
        cz.value,
        cz.detail,
        direct.iter().filter(|&&(_, v)| v != 0.0).count()
    ));
    (ok, parts.join("; "))
}

fn basis(_: &Ctx) -> Outcome {
    let o = orthonormality(3, 8).unwrap();
    let g = gram_checks(3, 4).unwrap();
    let ok = o.passed && g.iter().all(|c| c.passed);
    let min_ev = g.iter().skip(1).map(|c| c.value).fold(f64::INFINITY, f64::min);
    (
        ok,
        format!(
            "max |S - I| {:.1e} for n<=3, J<=8; S(1) deviation {:.1e}; smallest PD eigenvalue {min_ev:.3e}",
            o.value, g[0].value
        ),
    )
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("SGBEM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // Cheap criteria first; the energy identity collects the Dirichlet solves of 1-3.
    let order: [(usize, &str, fn(&Ctx) -> Outcome); 8] = [
        (8, "orthonormality and Gram matrices", basis),
        (3, "MOT equals dense solve", mot_dense),
        (4, "telescoping and causality of V", telescoping_causality),
        (7, "kernel entries vs Monte Carlo", kernel_oracles),
        (1, "spectral decay in the stochastic degree", spectral_decay),
        (6, "stochastic Galerkin vs Monte Carlo", sg_vs_mc),
        (2, "space-time convergence rate", space_time_rate),
        (5, "Galerkin energy identity", energy_identities),
    ];
    let ctx = Ctx::default();
    let mut failed = Vec::new();
    for (id, name, run) in order {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, detail) = run(&ctx);
        println!(
            "criterion {id}: {} {name} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
