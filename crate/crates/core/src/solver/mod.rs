//! Problem descriptions, right-hand-side projection and marching-on-in-time
//! solvers for the stochastic Galerkin systems.

mod container;
mod mc;
mod mot;
mod rhs;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::kernels::{
    assemble_adjoint_double_layer, assemble_mass, assemble_single_layer, AssemblyOptions, ToeplitzBlockSequence,
};
use crate::mesh::{cfl_timegrid, SurfaceMesh, TimeGrid};
use crate::pc_basis::PcBasis;

pub use container::{mesh_hash, StochasticSolution};
pub use mc::{mc_reference_solve, sample_xi, McReference, MomentAccumulator};
pub use mot::{
    dense_dirichlet_solve, dense_space_time_matrix, mot_dirichlet, mot_second_kind, patch_grams,
    SecondKindOperators,
};
pub use rhs::{project_deterministic, project_rhs, project_rhs_time_integral, source_moments, TimeWeighting};

/// f(t, x, n_x, ξ).
pub type SourceFn = Arc<dyn Fn(f64, Vec3, Vec3, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    DirichletSingleLayer,
    AcousticSecondKind,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::DirichletSingleLayer => "dirichlet-single-layer",
            ProblemKind::AcousticSecondKind => "acoustic-second-kind",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dirichlet-single-layer" => Some(ProblemKind::DirichletSingleLayer),
            "acoustic-second-kind" => Some(ProblemKind::AcousticSecondKind),
            _ => None,
        }
    }
}

/// Distribution of the impedance coefficient on one patch.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// α = lo + (hi - lo)(ξ_k + 1)/2, i.e. α ~ U(lo, hi) driven by ξ_k.
    Uniform { lo: f64, hi: f64, component: usize },
}

impl Coefficient {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match *self {
            Coefficient::Constant(a) => a,
            Coefficient::Uniform { lo, hi, component } => lo + 0.5 * (hi - lo) * (xi[component] + 1.0),
        }
    }

    pub fn lower_bound(&self) -> f64 {
        match *self {
            Coefficient::Constant(a) => a,
            Coefficient::Uniform { lo, hi, .. } => lo.min(hi),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSpec {
    /// Used for patches without an explicit entry.
    pub default: Coefficient,
    pub patches: Vec<(String, Coefficient)>,
}

impl AlphaSpec {
    pub fn constant(a: f64) -> Self {
        AlphaSpec {
            default: Coefficient::Constant(a),
            patches: Vec::new(),
        }
    }

    pub fn uniform(lo: f64, hi: f64, component: usize) -> Self {
        AlphaSpec {
            default: Coefficient::Uniform { lo, hi, component },
            patches: Vec::new(),
        }
    }

    pub fn lower_bound(&self) -> f64 {
        self.patches
            .iter()
            .map(|(_, c)| c.lower_bound())
            .fold(self.default.lower_bound(), f64::min)
    }

    /// One coefficient per mesh patch, in patch index order.
    pub fn resolve(&self, mesh: &SurfaceMesh) -> Result<Vec<Coefficient>> {
        for (name, _) in &self.patches {
            if mesh.patch_index(name).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "alpha given for unknown patch '{name}' (mesh patches: {:?})",
                    mesh.patch_names()
                )));
            }
        }
        Ok(mesh
            .patch_names()
            .iter()
            .map(|p| {
                self.patches
                    .iter()
                    .find(|(n, _)| n == p)
                    .map_or_else(|| self.default.clone(), |(_, c)| c.clone())
            })
            .collect())
    }

    fn max_component(&self) -> Option<usize> {
        std::iter::once(&self.default)
            .chain(self.patches.iter().map(|(_, c)| c))
            .filter_map(|c| match c {
                Coefficient::Uniform { component, .. } => Some(*component),
                Coefficient::Constant(_) => None,
            })
            .max()
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub source: SourceFn,
    /// The source does not depend on ξ; only mode 0 of the right-hand side is nonzero.
    pub deterministic_source: bool,
    /// Number of ξ components the source reads.
    pub source_dim: usize,
    pub alpha: AlphaSpec,
    pub cfl: f64,
    pub horizon: f64,
    pub c: f64,
    /// Number of random variables n.
    pub dim: usize,
    /// Polynomial degree J per variable.
    pub degree: usize,
    /// Exponential time weight of the analysis; the computation uses σ = 0.
    pub sigma: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("deterministic_source", &self.deterministic_source)
            .field("source_dim", &self.source_dim)
            .field("alpha", &self.alpha)
            .field("cfl", &self.cfl)
            .field("horizon", &self.horizon)
            .field("c", &self.c)
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("sigma", &self.sigma)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.cfl, "cfl")?;
        positive(self.horizon, "horizon")?;
        positive(self.c, "wave speed")?;
        if self.dim == 0 {
            return Err(Error::InvalidArgument("need at least one random variable".into()));
        }
        if self.dim < self.source_dim {
            return Err(Error::InvalidArgument(format!(
                "the source reads {} random variables but the problem has {}",
                self.source_dim, self.dim
            )));
        }
        if self.sigma != 0.0 {
            return Err(Error::InvalidArgument("only sigma = 0 is supported".into()));
        }
        if let Some(k) = self.alpha.max_component() {
            if k >= self.dim {
                return Err(Error::InvalidArgument(format!(
                    "alpha uses xi_{} but the problem has {} random variables",
                    k + 1,
                    self.dim
                )));
            }
        }
        if self.kind == ProblemKind::AcousticSecondKind && !(self.alpha.lower_bound() > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be bounded below by a positive constant, lower bound is {}",
                self.alpha.lower_bound()
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<PcBasis> {
        PcBasis::new(self.dim, self.degree)
    }

    pub fn timegrid(&self, mesh: &SurfaceMesh) -> Result<TimeGrid> {
        cfl_timegrid(mesh.h(), self.cfl, self.horizon, self.c)
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn time_weighting(&self) -> TimeWeighting {
        match self.kind {
            ProblemKind::DirichletSingleLayer => TimeWeighting::Increment,
            ProblemKind::AcousticSecondKind => TimeWeighting::Integral,
        }
    }
}

pub const BUILTINS: &[&str] = &["dirichlet-sphere", "acoustic-cube-2ndkind"];

/// f(t, x, ξ) = exp(ξ_1 - 1/(10 t²)) cos(|k| t - k·x - ξ_2 - ξ_3), k = (0.2, 0.2, 0.2).
pub fn dirichlet_sphere_source(t: f64, x: Vec3, _n: Vec3, xi: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let k = [0.2, 0.2, 0.2];
    let kn = geom::norm(k);
    (xi[0] - 1.0 / (10.0 * t * t)).exp() * (kn * t - geom::dot(k, x) - xi[1] - xi[2]).cos()
}

/// Smooth incoming pulse on the cube, supported where |‖x‖ - t| < 0.9.
pub fn acoustic_cube_source(t: f64, x: Vec3, n: Vec3, _xi: &[f64]) -> f64 {
    let r = geom::norm(x);
    if (r - t).abs() >= 0.9 {
        return 0.0;
    }
    let u = PI * (r - t) / 0.9;
    let (s, c) = u.sin_cos();
    let a = (2.0 * PI * (t * r - r * r) * s + 0.9 * t * (1.0 + c)) * (1.0 + c) / (1.8 * r.powi(3)) * geom::dot(x, n);
    let b = ((1.0 + c) * 2.0 * PI * (t - r) * (-u).sin() - 0.9 * (1.0 + c)) / (1.8 * r);
    a - b
}

/// Built-in problem by name, with stochastic degree J.
pub fn builtin(name: &str, degree: usize) -> Result<ProblemSpec> {
    let spec = match name {
        "dirichlet-sphere" => ProblemSpec {
            name: name.into(),
            kind: ProblemKind::DirichletSingleLayer,
            source: Arc::new(dirichlet_sphere_source),
            deterministic_source: false,
            source_dim: 3,
            alpha: AlphaSpec::constant(1.0),
            cfl: 0.605,
            horizon: 2.0,
            c: 1.0,
            dim: 3,
            degree,
            sigma: 0.0,
        },
        "acoustic-cube-2ndkind" => ProblemSpec {
            name: name.into(),
            kind: ProblemKind::AcousticSecondKind,
            source: Arc::new(acoustic_cube_source),
            deterministic_source: true,
            source_dim: 0,
            alpha: AlphaSpec::uniform(0.1, 1.9, 0),
            cfl: 0.387,
            horizon: 3.0,
            c: 1.0,
            dim: 1,
            degree,
            sigma: 0.0,
        },
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown builtin problem '{name}' (known: {})",
                BUILTINS.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// Space-time operators of a problem on one mesh; independent of ξ and of J.
#[derive(Debug, Clone)]
pub struct Operators {
    pub grid: TimeGrid,
    pub v: ToeplitzBlockSequence,
    pub k: Option<ToeplitzBlockSequence>,
    pub mass: Option<Vec<f64>>,
}

pub fn assemble_operators(spec: &ProblemSpec, mesh: &SurfaceMesh, opts: &AssemblyOptions) -> Result<Operators> {
    spec.validate()?;
    let grid = spec.timegrid(mesh)?;
    let v = assemble_single_layer(mesh, &grid, opts)?;
    let (k, mass) = match spec.kind {
        ProblemKind::DirichletSingleLayer => (None, None),
        ProblemKind::AcousticSecondKind => (
            Some(assemble_adjoint_double_layer(mesh, &grid, opts)?),
            Some(assemble_mass(mesh, |_, _| 1.0)?),
        ),
    };
    Ok(Operators { grid, v, k, mass })
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: StochasticSolution,
    pub rhs: ModeTensor,
}

/// Projects the right-hand side and marches on in time.
pub fn solve(spec: &ProblemSpec, mesh: &SurfaceMesh, ops: &Operators) -> Result<SolveOutput> {
    spec.validate()?;
    let basis = spec.basis()?;
    let grid = &ops.grid;
    let f = &*spec.source;
    let (rhs, coeffs) = match spec.kind {
        ProblemKind::DirichletSingleLayer => {
            let rhs = if spec.deterministic_source {
                project_deterministic(f, &basis, mesh, grid, TimeWeighting::Increment)?
            } else {
                project_rhs(f, &basis, mesh, grid)?
            };
            let x = mot_dirichlet(&ops.v, &rhs)?;
            (rhs, x)
        }
        ProblemKind::AcousticSecondKind => {
            let rhs = if spec.deterministic_source {
                project_deterministic(f, &basis, mesh, grid, TimeWeighting::Integral)?
            } else {
                project_rhs_time_integral(f, &basis, mesh, grid)?
            };
            let k = ops
                .k
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("second-kind solve needs K' blocks".into()))?;
            let mass = ops
                .mass
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("second-kind solve needs the mass matrix".into()))?;
            let grams = patch_grams(&basis, &spec.alpha.resolve(mesh)?)?;
            let sk = SecondKindOperators {
                v: &ops.v,
                k,
                mass,
                patches: mesh.patches(),
                grams: &grams,
            };
            let x = mot_second_kind(&sk, &rhs)?;
            (rhs, x)
        }
    };
    let solution = StochasticSolution::new(coeffs, spec.dim, spec.degree, *grid, mesh)?;
    Ok(SolveOutput { solution, rhs })
}

/// Coefficients indexed by (mode i, step m, element s), mode-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTensor {
    pub modes: usize,
    pub steps: usize,
    pub elements: usize,
    pub data: Vec<f64>,
}

impl ModeTensor {
    pub fn zeros(modes: usize, steps: usize, elements: usize) -> Self {
        ModeTensor {
            modes,
            steps,
            elements,
            data: vec![0.0; modes * steps * elements],
        }
    }

    pub fn from_vec(modes: usize, steps: usize, elements: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != modes * steps * elements {
            return Err(Error::DimensionMismatch {
                expected: modes * steps * elements,
                got: data.len(),
            });
        }
        Ok(ModeTensor {
            modes,
            steps,
            elements,
            data,
        })
    }

    fn offset(&self, i: usize, m: usize) -> usize {
        (i * self.steps + m) * self.elements
    }

    pub fn get(&self, i: usize, m: usize, s: usize) -> f64 {
        self.data[self.offset(i, m) + s]
    }

    pub fn set(&mut self, i: usize, m: usize, s: usize, v: f64) {
        let o = self.offset(i, m);
        self.data[o + s] = v;
    }

    /// All steps of mode i, step-major.
    pub fn mode(&self, i: usize) -> &[f64] {
        let o = self.offset(i, 0);
        &self.data[o..o + self.steps * self.elements]
    }

    pub fn slice(&self, i: usize, m: usize) -> &[f64] {
        let o = self.offset(i, m);
        &self.data[o..o + self.elements]
    }

    pub fn slice_mut(&mut self, i: usize, m: usize) -> &mut [f64] {
        let o = self.offset(i, m);
        &mut self.data[o..o + self.elements]
    }

    /// Step m in element-major order: out[s * modes + i].
    pub fn step_element_major(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.modes * self.elements];
        for i in 0..self.modes {
            for (s, v) in self.slice(i, m).iter().enumerate() {
                out[s * self.modes + i] = *v;
            }
        }
        out
    }

    pub fn set_step_element_major(&mut self, m: usize, x: &[f64]) {
        for i in 0..self.modes {
            let modes = self.modes;
            for (s, v) in self.slice_mut(i, m).iter_mut().enumerate() {
                *v = x[s * modes + i];
            }
        }
    }

    /// Mean (mode 0) and variance (sum of squares of the other modes) at step m.
    pub fn mean_variance(&self, m: usize) -> (Vec<f64>, Vec<f64>) {
        let modes: Vec<&[f64]> = (0..self.modes).map(|i| self.slice(i, m)).collect();
        crate::pc_basis::mean_variance(&modes)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }
}
