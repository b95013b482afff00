//! Monte-Carlo reference solutions: sample ξ, solve the deterministic
//! problem, accumulate moments.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mot::{mot_dirichlet, mot_second_kind, SecondKindOperators};
use super::rhs::source_moments;
use super::{ModeTensor, ProblemKind, ProblemSpec};
use crate::error::{Error, Result};
use crate::kernels::{assemble_mass, ToeplitzBlockSequence};
use crate::mesh::{SurfaceMesh, TimeGrid};

/// Streaming central moments up to order four, one set per entry.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        MomentAccumulator {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            m3: vec![0.0; len],
            m4: vec![0.0; len],
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len());
        self.n += 1;
        let n = self.n as f64;
        for k in 0..x.len() {
            let delta = x[k] - self.mean[k];
            let dn = delta / n;
            let dn2 = dn * dn;
            let t1 = delta * dn * (n - 1.0);
            self.mean[k] += dn;
            self.m4[k] += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2[k] - 4.0 * dn * self.m3[k];
            self.m3[k] += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2[k];
            self.m2[k] += t1;
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.n as f64 - 1.0).max(1.0);
        self.m2.iter().map(|m| m / d).collect()
    }

    pub fn mean_std_err(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }

    /// Standard error of the sample variance from the fourth central moment:
    /// Var(s²) ≈ (μ4 - σ⁴ (n-3)/(n-1)) / n.
    pub fn variance_std_err(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.variance()
            .iter()
            .zip(&self.m4)
            .map(|(s2, m4)| {
                let mu4 = m4 / n;
                ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct McReference {
    pub samples: usize,
    pub steps: usize,
    pub elements: usize,
    /// Layout [m * elements + s].
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_std_err: Vec<f64>,
    pub variance_std_err: Vec<f64>,
}

/// ξ for sample `index`: an independent ChaCha stream per sample, so results
/// do not depend on the thread count.
pub fn sample_xi(seed: u64, index: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

const BATCH: usize = 64;

fn deterministic_rhs(spec: &ProblemSpec, mesh: &SurfaceMesh, grid: &TimeGrid, xi: &[f64]) -> Result<Vec<f64>> {
    let f = &*spec.source;
    source_moments(f, xi, mesh, grid, spec.time_weighting(), 0..mesh.len())
}

/// Monte-Carlo mean and variance of the density coefficients. V and K' are
/// independent of ξ and reused; only the right-hand side and the impedance
/// coefficient are resampled.
pub fn mc_reference_solve(
    spec: &ProblemSpec,
    mesh: &SurfaceMesh,
    grid: &TimeGrid,
    v: &ToeplitzBlockSequence,
    k: Option<&ToeplitzBlockSequence>,
    samples: usize,
    seed: u64,
) -> Result<McReference> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
    }
    spec.validate()?;
    let n = mesh.len();
    let steps = grid.steps;
    let mut acc = MomentAccumulator::new(n * steps);
    let mass = match spec.kind {
        ProblemKind::AcousticSecondKind => Some(assemble_mass(mesh, |_, _| 1.0)?),
        ProblemKind::DirichletSingleLayer => None,
    };
    let coefficients = spec.alpha.resolve(mesh)?;
    let mut start = 0;
    while start < samples {
        let end = (start + BATCH).min(samples);
        let batch: Vec<Vec<f64>> = match spec.kind {
            ProblemKind::DirichletSingleLayer => {
                // All samples of the batch share V^0; solve them as columns.
                let rhs: Vec<Vec<f64>> = (start..end)
                    .into_par_iter()
                    .map(|idx| {
                        let xi = sample_xi(seed, idx, spec.dim);
                        deterministic_rhs(spec, mesh, grid, &xi).map_err(|e| Error::Sample {
                            index: idx,
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<_>>()?;
                let width = end - start;
                let mut f = ModeTensor::zeros(width, steps, n);
                for (c, r) in rhs.iter().enumerate() {
                    for e in 0..n {
                        for l in 0..steps {
                            f.set(c, l, e, r[e * steps + l]);
                        }
                    }
                }
                let x = mot_dirichlet(v, &f).map_err(|e| Error::Sample {
                    index: start,
                    source: Box::new(e),
                })?;
                (0..width).map(|c| x.mode(c).to_vec()).collect()
            }
            ProblemKind::AcousticSecondKind => {
                let k = k.ok_or_else(|| {
                    Error::InvalidArgument("second-kind Monte Carlo needs the K' blocks".into())
                })?;
                let mass = mass.as_deref().expect("mass assembled");
                (start..end)
                    .into_par_iter()
                    .map(|idx| -> Result<Vec<f64>> {
                        let xi = sample_xi(seed, idx, spec.dim);
                        let run = || -> Result<Vec<f64>> {
                            let r = deterministic_rhs(spec, mesh, grid, &xi)?;
                            let mut f = ModeTensor::zeros(1, steps, n);
                            for e in 0..n {
                                for l in 0..steps {
                                    f.set(0, l, e, r[e * steps + l]);
                                }
                            }
                            let grams: Vec<DMatrix<f64>> = coefficients
                                .iter()
                                .map(|c| DMatrix::from_element(1, 1, c.eval(&xi)))
                                .collect();
                            let ops = SecondKindOperators {
                                v,
                                k,
                                mass,
                                patches: mesh.patches(),
                                grams: &grams,
                            };
                            Ok(mot_second_kind(&ops, &f)?.mode(0).to_vec())
                        };
                        run().map_err(|e| Error::Sample {
                            index: idx,
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        for x in &batch {
            acc.push(x);
        }
        start = end;
    }
    Ok(McReference {
        samples,
        steps,
        elements: n,
        mean: acc.mean().to_vec(),
        variance: acc.variance(),
        mean_std_err: acc.mean_std_err(),
        variance_std_err: acc.variance_std_err(),
    })
}
