use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sgbem::kernels::{AdaptiveOptions, AssemblyOptions};
use sgbem::mesh::{import_mesh, ImportOptions, MeshFormat, SurfaceMesh};
use sgbem::solver::{builtin, AlphaSpec, ProblemKind, ProblemSpec, BUILTINS};
use sgbem::study::default_mesh;

/// A rejected configuration value, reported with its field path.
#[derive(Debug)]
pub struct Invalid {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(field: &str, message: impl Into<String>) -> anyhow::Error {
    Invalid {
        field: field.into(),
        message: message.into(),
    }
    .into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: String,
    pub level: usize,
    pub mesh_file: Option<PathBuf>,
    pub orient_mesh: bool,
    pub cfl: Option<f64>,
    pub horizon: Option<f64>,
    pub dim: Option<usize>,
    pub degree: usize,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,

    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_leaves: usize,
    pub angular_points: usize,
    pub angular_span: f64,
    pub fail_on_cap: bool,

    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,

    pub sweep: Option<String>,
    pub degrees: Vec<usize>,
    pub levels: Vec<usize>,
    pub benchmark_degree: Option<usize>,

    pub mc_samples: usize,
    pub kernel_pairs: usize,
    pub kernel_samples: usize,

    pub points: Vec<[f64; 3]>,
    pub time_samples: usize,
    pub fft: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = AssemblyOptions::default();
        RunConfig {
            problem: "dirichlet-sphere".into(),
            level: 1,
            mesh_file: None,
            orient_mesh: true,
            cfl: None,
            horizon: None,
            dim: None,
            degree: 2,
            alpha_min: None,
            alpha_max: None,
            rel_tol: q.outer.rel_tol,
            max_depth: q.outer.max_depth,
            max_leaves: q.outer.max_leaves,
            angular_points: q.angular_points,
            angular_span: q.angular_span,
            fail_on_cap: q.fail_on_cap,
            output_dir: PathBuf::from("run"),
            seed: 20240901,
            threads: None,
            sweep: None,
            degrees: Vec::new(),
            levels: Vec::new(),
            benchmark_degree: None,
            mc_samples: 200,
            kernel_pairs: 10,
            kernel_samples: 100_000,
            points: Vec::new(),
            time_samples: 200,
            fft: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "config".into());
            invalid(&field, msg)
        })
    }

    /// Applies `key=value` overrides by re-parsing them as TOML.
    pub fn with_overrides(self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut table = toml::Table::try_from(&self).context("serializing config")?;
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| invalid("--set", format!("expected key=value, got `{s}`")))?;
            let k = k.trim();
            let parsed: toml::Table = toml::from_str(&format!("v = {}", v.trim()))
                .or_else(|_| toml::from_str(&format!("v = {:?}", v.trim())))
                .map_err(|e| invalid(k, e.message().to_string()))?;
            table.insert(k.to_string(), parsed["v"].clone());
        }
        let text = toml::to_string(&table).context("serializing config")?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !BUILTINS.contains(&self.problem.as_str()) {
            return Err(invalid(
                "problem",
                format!("unknown builtin `{}` (known: {})", self.problem, BUILTINS.join(", ")),
            ));
        }
        if self.mesh_file.is_none() && !(1..=6).contains(&self.level) {
            return Err(invalid("level", format!("must be in 1..=6, got {}", self.level)));
        }
        if let Some(p) = &self.mesh_file {
            if MeshFormat::from_path(p).is_none() {
                return Err(invalid("mesh_file", format!("{}: expected .off or .obj", p.display())));
            }
        }
        let pos = |v: Option<f64>, f: &str| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(invalid(f, format!("must be positive, got {x}"))),
            _ => Ok(()),
        };
        pos(self.cfl, "cfl")?;
        pos(self.horizon, "horizon")?;
        pos(Some(self.rel_tol), "rel_tol")?;
        pos(Some(self.angular_span), "angular_span")?;
        if self.dim == Some(0) {
            return Err(invalid("dim", "must be at least 1"));
        }
        if self.degree > 12 {
            return Err(invalid("degree", format!("must be at most 12, got {}", self.degree)));
        }
        match (self.alpha_min, self.alpha_max) {
            (None, None) => {}
            (Some(lo), Some(hi)) => {
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(invalid("alpha_min", format!("need 0 < alpha_min <= alpha_max, got {lo}, {hi}")));
                }
            }
            _ => return Err(invalid("alpha_min", "alpha_min and alpha_max must be given together")),
        }
        if self.max_depth == 0 || self.max_leaves == 0 || self.angular_points == 0 {
            return Err(invalid("max_depth", "quadrature limits must be positive"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        if let Some(s) = &self.sweep {
            if s != "degrees" && s != "levels" {
                return Err(invalid("sweep", format!("expected `degrees` or `levels`, got `{s}`")));
            }
        }
        if self.levels.iter().any(|l| !(1..=6).contains(l)) {
            return Err(invalid("levels", "levels must be in 1..=6"));
        }
        if self.time_samples < 2 {
            return Err(invalid("time_samples", "need at least 2"));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid(&format!("points[{i}]"), "coordinates must be finite"));
            }
        }
        // Catches problem-level inconsistencies such as too few random variables.
        self.problem_spec()?;
        Ok(())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut spec = builtin(&self.problem, self.degree).map_err(|e| invalid("problem", e.to_string()))?;
        if let Some(c) = self.cfl {
            spec.cfl = c;
        }
        if let Some(t) = self.horizon {
            spec.horizon = t;
        }
        if let Some(d) = self.dim {
            spec.dim = d;
        }
        if let (Some(lo), Some(hi)) = (self.alpha_min, self.alpha_max) {
            spec.alpha = if lo == hi { AlphaSpec::constant(lo) } else { AlphaSpec::uniform(lo, hi, 0) };
        }
        spec.validate().map_err(|e| invalid("problem", e.to_string()))?;
        Ok(spec)
    }

    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions {
            outer: AdaptiveOptions {
                rel_tol: self.rel_tol,
                max_depth: self.max_depth,
                max_leaves: self.max_leaves,
            },
            angular_points: self.angular_points,
            angular_span: self.angular_span,
            fail_on_cap: self.fail_on_cap,
        }
    }

    pub fn kind(&self) -> Result<ProblemKind> {
        Ok(self.problem_spec()?.kind)
    }

    pub fn mesh(&self) -> Result<SurfaceMesh> {
        self.mesh_at(self.level)
    }

    pub fn mesh_at(&self, level: usize) -> Result<SurfaceMesh> {
        match &self.mesh_file {
            Some(p) => {
                let fmt = MeshFormat::from_path(p).ok_or_else(|| invalid("mesh_file", "expected .off or .obj"))?;
                let opts = ImportOptions {
                    orient: self.orient_mesh,
                    flip_components: Vec::new(),
                };
                let m = import_mesh(p, fmt, &opts)?;
                for w in &m.warnings {
                    eprintln!("warning: {w}");
                }
                Ok(m.mesh)
            }
            None => Ok(default_mesh(self.kind()?, level)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("problem = \"dirichlet-sphere\"\nbogus = 1\n").unwrap_err();
        let inv = err.downcast_ref::<Invalid>().unwrap();
        assert_eq!(inv.field, "line 2");
        assert!(inv.message.contains("bogus"), "{inv}");
    }

    #[test]
    fn bad_values_name_their_field() {
        for (text, field) in [
            ("cfl = 0.0", "cfl"),
            ("cfl = -1.0", "cfl"),
            ("problem = \"x\"", "problem"),
            ("dim = 2", "problem"),
            ("sweep = \"time\"", "sweep"),
            ("threads = 0", "threads"),
            ("alpha_min = 0.5", "alpha_min"),
            ("level = 0", "level"),
        ] {
            let cfg = RunConfig::parse(text).unwrap();
            let err = cfg.validate().unwrap_err();
            assert_eq!(err.downcast_ref::<Invalid>().unwrap().field, field, "{text}");
        }
    }

    #[test]
    fn overrides_apply_and_type_check() {
        let cfg = RunConfig::default()
            .with_overrides(&["degree=3".into(), "problem=acoustic-cube-2ndkind".into(), "levels=[1,2]".into()])
            .unwrap();
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.problem, "acoustic-cube-2ndkind");
        assert_eq!(cfg.levels, vec![1, 2]);
        assert!(RunConfig::default().with_overrides(&["degree=abc".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["nokey".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["unknown=1".into()]).is_err());
    }

    #[test]
    fn spec_overrides() {
        let cfg = RunConfig::parse("problem = \"acoustic-cube-2ndkind\"\nalpha_min = 0.5\nalpha_max = 0.5\ncfl = 0.5").unwrap();
        let spec = cfg.problem_spec().unwrap();
        assert!(spec.alpha.lower_bound() == 0.5);
        assert_eq!(spec.cfl, 0.5);
    }
}
