//! Gauss–Legendre rules on [-1, 1] and quadrature rules on the reference
//! triangle {(u, v) : u, v >= 0, u + v <= 1}.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
///
/// Weights sum to 2. Nodes are returned in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

/// Legendre polynomial P_n(x) and its derivative via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature rule on the reference triangle. Weights sum to one, so a
/// rule applied to a physical triangle is `area * sum(w_i f(x_i))`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Reference coordinates (u, v); the physical point is
    /// `a + u (b - a) + v (c - a)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Seven-point degree-5 rule (Radon).
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let b1 = (9.0 + 2.0 * s15) / 21.0;
        let w1 = (155.0 - s15) / 1200.0;
        let a2 = (6.0 + s15) / 21.0;
        let b2 = (9.0 - 2.0 * s15) / 21.0;
        let w2 = (155.0 + s15) / 1200.0;
        let third = 1.0 / 3.0;
        // Barycentric (l1, l2, l3) -> reference (u, v) = (l2, l3).
        let points = vec![
            [third, third],
            [a1, a1],
            [b1, a1],
            [a1, b1],
            [a2, a2],
            [b2, a2],
            [a2, b2],
        ];
        let weights = vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2];
        TriangleRule { points, weights }
    }

    /// Collapsed (Duffy) tensor Gauss rule with `n * n` points; exact for
    /// polynomials of total degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let (x, w) = gauss_legendre_on(n, 0.0, 1.0);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&s, &ws) in x.iter().zip(&w) {
            for (&t, &wt) in x.iter().zip(&w) {
                points.push([s, t * (1.0 - s)]);
                // Jacobian (1 - s); reference area 1/2 normalised away.
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        TriangleRule { points, weights }
    }

    /// Rule of at least the requested polynomial degree.
    pub fn with_degree(degree: usize) -> Self {
        if degree <= 5 {
            Self::degree5()
        } else {
            Self::collapsed(degree.div_ceil(2) + 1)
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
