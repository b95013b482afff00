//! Seeded Monte Carlo estimates of single pair integrals, used as
//! independent oracles for the assembled blocks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    /// Samples with a nonzero integrand.
    pub hits: usize,
    /// area_r · area_s · sup |g| over the support of the integrand.
    pub support_bound: f64,
}

impl McEstimate {
    /// |value - mean| in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (value - self.mean).abs();
        if self.std_err > 0.0 {
            diff / self.std_err
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Upper confidence limit at level `q` on |integral| when no sample hit
    /// the support: P(hit) <= -ln(1-q)/n.
    pub fn zero_hit_limit(&self, q: f64) -> f64 {
        self.support_bound * (-(1.0 - q).ln()) / self.samples as f64
    }
}

fn uniform_point<R: Rng>(rng: &mut R, t: &[Vec3; 3]) -> Vec3 {
    let mut u: f64 = rng.gen();
    let mut v: f64 = rng.gen();
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    geom::affine(t, u, v)
}

/// Mean and standard error of `area_r · area_s · g(x, y)` over uniform pairs.
fn estimate<G>(tr: &[Vec3; 3], ts: &[Vec3; 3], n: usize, seed: u64, sup: f64, g: G) -> McEstimate
where
    G: Fn(Vec3, Vec3) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = geom::triangle_area(tr) * geom::triangle_area(ts);
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut hits = 0;
    for k in 0..n {
        let x = uniform_point(&mut rng, tr);
        let y = uniform_point(&mut rng, ts);
        let v = scale * g(x, y);
        if v != 0.0 {
            hits += 1;
        }
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    McEstimate {
        mean,
        std_err: (var / n as f64).sqrt(),
        samples: n,
        hits,
        support_bound: scale * sup,
    }
}

/// ∬ χ(inner <= |x-y| < outer) / (4π|x-y|).
pub fn single_layer_shell(tr: &[Vec3; 3], ts: &[Vec3; 3], inner: f64, outer: f64, n: usize, seed: u64) -> McEstimate {
    let sup = 1.0 / (4.0 * PI * inner.max(geom::triangle_distance(tr, ts)));
    estimate(tr, ts, n, seed, sup, |x, y| {
        let r = geom::dist(x, y);
        if r >= inner && r < outer {
            1.0 / (4.0 * PI * r)
        } else {
            0.0
        }
    })
}

/// Single layer block entry V^j = B_j - B_{j-1}.
pub fn single_layer_block(tr: &[Vec3; 3], ts: &[Vec3; 3], j: usize, c: f64, dt: f64, n: usize, seed: u64) -> McEstimate {
    let cdt = c * dt;
    let r_lo = (j as f64 - 1.0).max(0.0) * cdt;
    let sup = 1.0 / (4.0 * PI * r_lo.max(geom::triangle_distance(tr, ts)));
    estimate(tr, ts, n, seed, sup, |x, y| {
        let r = geom::dist(x, y);
        let k = (r / cdt).floor();
        let w = if k == j as f64 {
            1.0
        } else if k + 1.0 == j as f64 {
            -1.0
        } else {
            0.0
        };
        w / (4.0 * PI * r)
    })
}

/// Adjoint double layer block entry from the time-integrated retarded kernel
/// -ν·(x-y)/(4π|x-y|) [Δt·hat(|x-y|/(cΔt) - j)/|x-y|^2 + (χ_j - χ_{j-1})/(c|x-y|)].
#[allow(clippy::too_many_arguments)]
pub fn adjoint_double_layer_block(
    tr: &[Vec3; 3],
    nu: Vec3,
    ts: &[Vec3; 3],
    j: usize,
    c: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> McEstimate {
    let cdt = c * dt;
    let r_lo = ((j as f64 - 1.0).max(0.0) * cdt).max(geom::triangle_distance(tr, ts));
    let sup = (dt / (r_lo * r_lo) + 1.0 / (c * r_lo)) / (4.0 * PI);
    estimate(tr, ts, n, seed, sup, |x, y| {
        let d = geom::sub(x, y);
        let r = geom::norm(d);
        let u = r / cdt - j as f64;
        let hat = (1.0 - u.abs()).max(0.0);
        let k = (r / cdt).floor();
        let jump = if k == j as f64 {
            1.0
        } else if k + 1.0 == j as f64 {
            -1.0
        } else {
            0.0
        };
        -geom::dot(nu, d) / (4.0 * PI * r) * (dt * hat / (r * r) + jump / (c * r))
    })
}
