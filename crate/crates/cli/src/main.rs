mod commands;
mod config;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Invalid, RunConfig};

#[derive(Parser)]
#[command(name = "sgbem", version, about = "Space-time stochastic Galerkin BEM for the wave equation")]
struct Cli {
    /// Worker threads (default: $SGBEM_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set degree=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a builtin mesh and write it as VTK.
    Mesh {
        #[arg(long, default_value = "icosphere")]
        kind: String,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(short, long, default_value = "mesh")]
        out: PathBuf,
    },
    /// Assemble, solve and export one problem.
    Solve(ConfigArgs),
    /// Sweep stochastic degrees or mesh levels and fit a rate.
    Convergence(ConfigArgs),
    /// Evaluate the field pressure of a stored solution at points.
    Postprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Solution container written by `solve`.
        #[arg(long)]
        solution: PathBuf,
        /// Field point `x,y,z`; repeatable.
        #[arg(long = "point", value_parser = parse_point)]
        points: Vec<[f64; 3]>,
        /// Also write the A-weighted spectrum of the mean pressure.
        #[arg(long)]
        fft: bool,
    },
    /// Run the oracle suites and report every invariant.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Perturb one V^0 entry before checking (test hook).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn parse_point(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected x,y,z, got `{s}`"))
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    let base = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&args.sets)?;
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn init_threads(flag: Option<usize>, cfg: Option<&RunConfig>) -> Result<()> {
    let env = match std::env::var("SGBEM_THREADS") {
        Ok(s) => Some(
            s.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| config::invalid("SGBEM_THREADS", format!("expected a positive integer, got `{s}`")))?,
        ),
        Err(_) => None,
    };
    if flag == Some(0) {
        return Err(config::invalid("--threads", "must be at least 1"));
    }
    if let Some(n) = flag.or(cfg.and_then(|c| c.threads)).or(env) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mesh { kind, level, out } => {
            init_threads(cli.threads, None)?;
            commands::cmd_mesh(&kind, level, &out)
        }
        Command::Solve(a) => {
            let cfg = load(&a)?;
            init_threads(cli.threads, Some(&cfg))?;
            commands::cmd_solve(&cfg)
        }
        Command::Convergence(a) => {
            let cfg = load(&a)?;
            init_threads(cli.threads, Some(&cfg))?;
            commands::cmd_convergence(&cfg)
        }
        Command::Postprocess {
            cfg,
            solution,
            points,
            fft,
        } => {
            let mut c = load(&cfg)?;
            c.fft |= fft;
            init_threads(cli.threads, Some(&c))?;
            commands::cmd_postprocess(&c, &solution, &points)
        }
        Command::Validate { cfg, inject_fault } => {
            let c = load(&cfg)?;
            init_threads(cli.threads, Some(&c))?;
            commands::cmd_validate(&c, inject_fault)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<commands::ChecksFailed>().is_some() {
        return 2;
    }
    for cause in e.chain() {
        if cause.downcast_ref::<Invalid>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
