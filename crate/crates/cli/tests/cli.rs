use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sgbem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgbem"))
        .args(args)
        .env_remove("SGBEM_THREADS")
        .output()
        .expect("spawn sgbem")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&sgbem(&[])), 1);
    assert_eq!(code(&sgbem(&["frobnicate"])), 1);
    assert_eq!(code(&sgbem(&["solve", "--bogus"])), 1);
    assert_eq!(code(&sgbem(&["--help"])), 0);
}

#[test]
fn invalid_config_is_rejected_before_assembly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = sgbem(&["solve", "--set", "cfl=0", "--out", dir_arg(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cfl"));
    assert!(!out.exists());

    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "problem = \"dirichlet-sphere\"\nlevle = 2\n").unwrap();
    let o = sgbem(&["solve", "-c", dir_arg(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("levle"));

    let o = Command::new(env!("CARGO_BIN_EXE_sgbem"))
        .args(["solve", "--out", dir_arg(&out)])
        .env("SGBEM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn mesh_command_writes_vtk() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sgbem(&["mesh", "--kind", "cube", "--level", "1", "--out", dir_arg(tmp.path())]);
    assert_eq!(code(&o), 0);
    let s = json(&tmp.path().join("summary.json"));
    assert_eq!(s["mesh"]["elements"], 48);
    assert!(tmp.path().join("mesh.vtk").exists());
    assert!(tmp.path().join("manifest.json").exists());
    assert_eq!(code(&sgbem(&["mesh", "--kind", "torus", "--out", dir_arg(tmp.path())])), 2);
}

#[test]
fn solve_dirichlet_sphere_and_postprocess() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("solve");
    let o = sgbem(&["--threads", "1", "solve", "--set", "degree=2", "--out", dir_arg(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&run.join("summary.json"));
    assert_eq!(s["mesh"]["elements"], 80);
    assert_eq!(s["time_grid"]["steps"], 5);
    assert!(s["time_grid"]["achieved_cfl"].as_f64().unwrap() > 0.0);
    assert!(s["operators"][0]["truncation"].as_u64().unwrap() > 0);
    assert!(s["quadrature"]["outer_rel_tol"].as_f64().is_some());
    let e = s["results"]["energy"].as_f64().unwrap();
    assert!(e < 0.0);
    assert!(s["results"]["galerkin_identity_residual"].as_f64().unwrap() < 1e-10);
    let manifest = json(&run.join("manifest.json"));
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in ["solution.sgb", "mean_variance.vtk", "mean_variance.csv", "summary.json"] {
        assert!(files.contains(&f), "{f}");
        assert!(run.join(f).exists());
    }
    let vtk = std::fs::read_to_string(run.join("mean_variance.vtk")).unwrap();
    assert!(vtk.contains("SCALARS mean_step0") && vtk.contains("SCALARS variance_step4"));

    // Far point: the signal needs ~8 time units to arrive.
    let post = tmp.path().join("post");
    let sol = run.join("solution.sgb");
    let o = sgbem(&[
        "postprocess",
        "--solution",
        dir_arg(&sol),
        "--point",
        "0,0,10",
        "--point",
        "1.5,0,0",
        "--set",
        "time_samples=41",
        "--fft",
        "--out",
        dir_arg(&post),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(post.join("pressure.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 82);
    for r in rows.iter().filter(|r| r[0] == 0.0) {
        assert_eq!(r[2], 0.0);
        assert_eq!(r[3], 0.0);
    }
    assert!(rows.iter().filter(|r| r[0] == 1.0).any(|r| r[2] != 0.0));
    // Mean series equals the mode-0 series.
    let modes = std::fs::read_to_string(post.join("pressure_modes.csv")).unwrap();
    let mode0: Vec<f64> = modes
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[0] == "1" && c[1] == "0")
        .map(|c| c[3].parse().unwrap())
        .collect();
    let mean1: Vec<f64> = rows.iter().filter(|r| r[0] == 1.0).map(|r| r[2]).collect();
    assert_eq!(mode0, mean1);
    assert!(post.join("spectrum_dba.csv").exists());
    assert!(post.join("mean_spectrum_dba.csv").exists());

    // A point on the surface is rejected.
    let o = sgbem(&["postprocess", "--solution", dir_arg(&sol), "--point", "0,0.5257311121191336,0.85065080835204", "--out", dir_arg(&post)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    // A different mesh does not match the container.
    let o = sgbem(&["postprocess", "--solution", dir_arg(&sol), "--point", "0,0,3", "--set", "level=2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn acoustic_cube_solves_and_deterministic_std_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("solve");
    let o = sgbem(&[
        "solve",
        "--set",
        "problem=acoustic-cube-2ndkind",
        "--set",
        "degree=2",
        "--out",
        dir_arg(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&run.join("summary.json"));
    assert!(s["formulation"].as_str().unwrap().contains("second kind"));
    assert_eq!(s["operators"].as_array().unwrap().len(), 2);
    assert!(s["results"]["l2_space_time_norm"].as_f64().unwrap() > 0.0);

    let det = tmp.path().join("det");
    let o = sgbem(&[
        "solve",
        "--set",
        "problem=acoustic-cube-2ndkind",
        "--set",
        "alpha_min=1.0",
        "--set",
        "alpha_max=1.0",
        "--out",
        dir_arg(&det),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let post = tmp.path().join("post");
    let o = sgbem(&[
        "postprocess",
        "--solution",
        dir_arg(&det.join("solution.sgb")),
        "--set",
        "problem=acoustic-cube-2ndkind",
        "--point",
        "0,0,2",
        "--set",
        "time_samples=31",
        "--out",
        dir_arg(&post),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(post.join("pressure.csv")).unwrap();
    let mut any_mean = false;
    for l in text.lines().skip(1) {
        let c: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(c[3], 0.0);
        any_mean |= c[2] != 0.0;
    }
    assert!(any_mean);
}

#[test]
fn convergence_degree_sweep_and_empty_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sgbem(&["convergence", "--set", "sweep=degrees", "--out", dir_arg(tmp.path())]);
    assert_eq!(code(&o), 2);
    let o = sgbem(&["convergence", "--set", "degrees=[0,1,2]", "--out", dir_arg(tmp.path())]);
    assert_eq!(code(&o), 2);
    let o = sgbem(&[
        "convergence",
        "--set",
        "sweep=degrees",
        "--set",
        "degrees=[0,1,2]",
        "--set",
        "benchmark_degree=5",
        "--out",
        dir_arg(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    let errs: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let s = json(&tmp.path().join("summary.json"));
    assert!(s["result"]["slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn validate_passes_and_detects_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let o = sgbem(&["--threads", "1", "validate", "--set", "mc_samples=100", "--out", dir_arg(&a)]);
    let stdout = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(code(&o), 0, "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.contains("PASS telescoping"));
    assert!(!stdout.contains("FAIL"));
    let report = json(&a.join("report.json"));
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let b = tmp.path().join("b");
    let o = sgbem(&["validate", "--inject-fault", "--set", "mc_samples=0", "--out", dir_arg(&b)]);
    let stdout = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(code(&o), 2, "{stdout}");
    assert!(stdout.contains("FAIL telescoping"), "{stdout}");
}

#[test]
fn seeded_monte_carlo_is_reproducible_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["x", "y"] {
        let d = tmp.path().join(name);
        let o = sgbem(&[
            "--threads",
            "1",
            "validate",
            "--set",
            "mc_samples=40",
            "--set",
            "kernel_pairs=2",
            "--out",
            dir_arg(&d),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        let r = json(&d.join("report.json"));
        let mc = r["checks"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == "sg_vs_monte_carlo")
            .unwrap()
            .clone();
        reports.push(mc);
    }
    assert_eq!(reports[0], reports[1]);
}
