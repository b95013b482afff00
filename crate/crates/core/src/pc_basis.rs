//! Tensor Legendre polynomial chaos on Ξ = [-1, 1]^n with the uniform
//! product probability measure dπ = ∏ dξ_m / 2.
//!
//! The 1D factors are orthonormal, Ψ_k = √(2k+1) P_k, so that
//! ∫ Ψ_i Ψ_j dπ = δ_ij. Multivariate polynomials are products over the
//! dimensions, indexed by the full tensor set {κ : 0 <= κ_m <= J}.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Largest 1D degree accepted by the checked evaluators.
pub const MAX_DEGREE: usize = 64;

/// Ψ_n(ξ) = √(2n+1) P_n(ξ), evaluated by the three-term recurrence.
pub fn eval_legendre_orthonormal(degree: usize, xi: f64) -> Result<f64> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Legendre degree {degree} exceeds the maximum {MAX_DEGREE}"
        )));
    }
    if !(xi.abs() <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "stochastic coordinate {xi} outside [-1, 1]"
        )));
    }
    Ok(legendre_orthonormal(degree, xi))
}

/// Unchecked variant of [`eval_legendre_orthonormal`].
#[inline]
pub fn legendre_orthonormal(degree: usize, xi: f64) -> f64 {
    let mut p0 = 1.0;
    if degree == 0 {
        return 1.0;
    }
    let mut p1 = xi;
    for k in 2..=degree {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * xi * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (2.0 * degree as f64 + 1.0).sqrt() * p1
}

/// All orthonormal values Ψ_0(ξ) .. Ψ_J(ξ).
pub fn legendre_orthonormal_all(max_degree: usize, xi: f64, out: &mut [f64]) {
    debug_assert!(out.len() > max_degree);
    let mut p0 = 1.0;
    let mut p1 = xi;
    out[0] = 1.0;
    if max_degree >= 1 {
        out[1] = 3f64.sqrt() * xi;
    }
    for k in 2..=max_degree {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * xi * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
        out[k] = (2.0 * kf + 1.0).sqrt() * p2;
    }
}

/// The truncated tensor multi-index set {κ ∈ N_0^n : κ_m <= J}.
///
/// Linear index: i = κ_1 + κ_2 (J+1) + ... + κ_n (J+1)^(n-1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
}

impl MultiIndexSet {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "stochastic degree {degree} exceeds {MAX_DEGREE}"
            )));
        }
        let radix = degree + 1;
        let card = radix
            .checked_pow(dim as u32)
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| {
                Error::Resource(format!("(J+1)^n = {radix}^{dim} modes is too many"))
            })?;
        let indices = (0..card)
            .map(|mut i| {
                let mut kappa = vec![0; dim];
                for k in kappa.iter_mut() {
                    *k = i % radix;
                    i /= radix;
                }
                kappa
            })
            .collect();
        Ok(MultiIndexSet {
            dim,
            degree,
            indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.iter().map(|k| k.as_slice())
    }

    /// Linear position of κ, or `None` if κ is outside the set.
    pub fn index_of(&self, kappa: &[usize]) -> Option<usize> {
        if kappa.len() != self.dim || kappa.iter().any(|&k| k > self.degree) {
            return None;
        }
        let radix = self.degree + 1;
        Some(kappa.iter().rev().fold(0, |acc, &k| acc * radix + k))
    }
}

/// Orthonormal tensor Legendre basis plus its stochastic quadrature.
#[derive(Debug, Clone)]
pub struct PcBasis {
    set: MultiIndexSet,
    quad_order: usize,
    nodes: Vec<f64>,
    /// Probability weights (sum to one) of the 1D rule.
    weights: Vec<f64>,
}

impl PcBasis {
    /// Basis with the default stochastic quadrature of 2J + 4 points per dimension.
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        Self::with_quadrature(dim, degree, 2 * degree + 4)
    }

    pub fn with_quadrature(dim: usize, degree: usize, quad_order: usize) -> Result<Self> {
        if quad_order < degree + 1 {
            return Err(Error::InvalidArgument(format!(
                "stochastic quadrature order {quad_order} below J+1 = {}",
                degree + 1
            )));
        }
        let set = MultiIndexSet::new(dim, degree)?;
        let (nodes, w) = gauss_legendre(quad_order);
        let weights = w.into_iter().map(|wi| 0.5 * wi).collect();
        Ok(PcBasis {
            set,
            quad_order,
            nodes,
            weights,
        })
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim
    }

    pub fn degree(&self) -> usize {
        self.set.degree
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    /// 1D quadrature nodes and probability weights.
    pub fn rule_1d(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    /// Ψ_κ(ξ) = ∏ Ψ_{κ_m}(ξ_m).
    pub fn eval_basis(&self, kappa: &[usize], xi: &[f64]) -> Result<f64> {
        if kappa.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: kappa.len(),
            });
        }
        check_xi(self.dim(), xi)?;
        kappa
            .iter()
            .zip(xi)
            .map(|(&k, &x)| eval_legendre_orthonormal(k, x))
            .product()
    }

    /// Values of every basis polynomial at ξ, in linear index order.
    pub fn eval_all(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_xi(self.dim(), xi)?;
        Ok(self.eval_all_unchecked(xi))
    }

    fn eval_all_unchecked(&self, xi: &[f64]) -> Vec<f64> {
        let j = self.degree();
        let mut table = vec![0.0; (j + 1) * self.dim()];
        for (m, &x) in xi.iter().enumerate() {
            legendre_orthonormal_all(j, x, &mut table[m * (j + 1)..(m + 1) * (j + 1)]);
        }
        self.set
            .iter()
            .map(|kappa| {
                kappa
                    .iter()
                    .enumerate()
                    .map(|(m, &k)| table[m * (j + 1) + k])
                    .product()
            })
            .collect()
    }

    /// Tensor quadrature nodes in lexicographic order (first dimension fastest),
    /// with their probability weights.
    pub fn tensor_nodes(&self) -> Vec<(Vec<f64>, f64)> {
        let q = self.quad_order;
        let n = self.dim();
        let total = q.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut xi = vec![0.0; n];
                let mut w = 1.0;
                for x in xi.iter_mut() {
                    let k = idx % q;
                    idx /= q;
                    *x = self.nodes[k];
                    w *= self.weights[k];
                }
                (xi, w)
            })
            .collect()
    }

    /// Stochastic Gram matrix S(g)_ij = ∫ g Ψ_i Ψ_j dπ by tensor Gauss quadrature.
    pub fn gram_matrix<G>(&self, g: G) -> Result<DMatrix<f64>>
    where
        G: Fn(&[f64]) -> f64,
    {
        let nodes = self.tensor_nodes();
        let m = self.len();
        let mut weighted = DMatrix::<f64>::zeros(nodes.len(), m);
        let mut plain = DMatrix::<f64>::zeros(nodes.len(), m);
        for (q, (xi, w)) in nodes.iter().enumerate() {
            let gv = g(xi);
            if !gv.is_finite() {
                return Err(Error::Assembly(format!(
                    "weight function is {gv} at xi = {xi:?}"
                )));
            }
            let psi = self.eval_all_unchecked(xi);
            for (i, p) in psi.iter().enumerate() {
                plain[(q, i)] = *p;
                weighted[(q, i)] = w * gv * p;
            }
        }
        let mut s = plain.transpose() * weighted;
        // Symmetrise exactly: S is symmetric by construction up to roundoff.
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(s)
    }

    /// Projects samples of a function given at [`Self::tensor_nodes`] onto the
    /// basis: c_κ = Σ_q w_q g(ξ_q) Ψ_κ(ξ_q). Uses sum factorisation over the
    /// dimensions; `samples` may hold several functions back to back.
    pub fn project_tensor_samples(&self, samples: &[f64]) -> Vec<f64> {
        let q = self.quad_order;
        let r = self.degree() + 1;
        let n = self.dim();
        let per_fn = q.pow(n as u32);
        assert_eq!(samples.len() % per_fn, 0);
        let nfun = samples.len() / per_fn;
        // table[k * q + a] = w_a Ψ_k(x_a)
        let mut table = vec![0.0; r * q];
        let mut buf = vec![0.0; r];
        for a in 0..q {
            legendre_orthonormal_all(r - 1, self.nodes[a], &mut buf);
            for k in 0..r {
                table[k * q + a] = self.weights[a] * buf[k];
            }
        }
        let modes = r.pow(n as u32);
        let mut out = Vec::with_capacity(nfun * modes);
        for f in 0..nfun {
            // Contract dimensions one at a time; the fastest index is always
            // the next one to contract and the new index is appended last.
            let mut cur: Vec<f64> = samples[f * per_fn..(f + 1) * per_fn].to_vec();
            let mut rest = per_fn / q;
            let mut done = 1usize;
            for _ in 0..n {
                let mut next = vec![0.0; rest * done * r];
                // cur layout: [a (q)] [rest] [done]; next: [rest] [done] [k]
                for outer in 0..(rest * done) {
                    let base = outer * q;
                    let src = &cur[base..base + q];
                    for k in 0..r {
                        let row = &table[k * q..(k + 1) * q];
                        let s: f64 = src.iter().zip(row).map(|(x, y)| x * y).sum();
                        next[outer + k * rest * done] = s;
                    }
                }
                cur = next;
                done *= r;
                rest /= q;
            }
            out.extend_from_slice(&cur);
        }
        out
    }
}

fn check_xi(dim: usize, xi: &[f64]) -> Result<()> {
    if xi.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: xi.len(),
        });
    }
    if let Some(x) = xi.iter().find(|x| !(x.abs() <= 1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "stochastic coordinate {x} outside [-1, 1]"
        )));
    }
    Ok(())
}

/// Pointwise mean (mode 0) and variance (sum of squares of the other modes).
pub fn mean_variance<M: AsRef<[f64]>>(modes: &[M]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = modes.first() else {
        return (Vec::new(), Vec::new());
    };
    let mean = first.as_ref().to_vec();
    let mut var = vec![0.0; mean.len()];
    for m in &modes[1..] {
        for (v, x) in var.iter_mut().zip(m.as_ref()) {
            *v += x * x;
        }
    }
    (mean, var)
}

/// Evaluates the truncated expansion Σ_κ φ^κ Ψ_κ(ξ) coefficientwise.
pub fn sample_expansion<M: AsRef<[f64]>>(
    basis: &PcBasis,
    modes: &[M],
    xi: &[f64],
) -> Result<Vec<f64>> {
    if modes.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: modes.len(),
        });
    }
    let psi = basis.eval_all(xi)?;
    let len = modes.first().map_or(0, |m| m.as_ref().len());
    let mut out = vec![0.0; len];
    for (m, p) in modes.iter().zip(&psi) {
        let m = m.as_ref();
        if m.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: m.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(m) {
            *o += p * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: Legendre values from the explicit Rodrigues-type sum
    /// P_n(x) = 2^-n Σ_k C(n,k)^2 (x-1)^(n-k) (x+1)^k.
    fn legendre_explicit(n: usize, x: f64) -> f64 {
        let binom = |n: usize, k: usize| -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        };
        let s: f64 = (0..=n)
            .map(|k| binom(n, k).powi(2) * (x - 1.0).powi((n - k) as i32) * (x + 1.0).powi(k as i32))
            .sum();
        s / 2f64.powi(n as i32)
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(eval_legendre_orthonormal(0, 0.3).unwrap(), 1.0);
        assert!((eval_legendre_orthonormal(1, 0.5).unwrap() - 3f64.sqrt() * 0.5).abs() < 1e-15);
        let p2 = eval_legendre_orthonormal(2, 1.0).unwrap();
        assert!((p2 - 5f64.sqrt()).abs() < 1e-14);
        assert!((p2 - 5f64.sqrt() * legendre_explicit(2, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn recurrence_matches_explicit_sum() {
        for n in 0..12 {
            for &x in &[-1.0, -0.7, -0.1, 0.0, 0.33, 0.9, 1.0] {
                let a = legendre_orthonormal(n, x);
                let b = (2.0 * n as f64 + 1.0).sqrt() * legendre_explicit(n, x);
                assert!((a - b).abs() < 1e-11 * b.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn legendre_rejects_bad_input() {
        assert!(matches!(
            eval_legendre_orthonormal(MAX_DEGREE + 1, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(eval_legendre_orthonormal(2, 1.5).is_err());
    }

    #[test]
    fn multi_index_cardinality_and_radix() {
        let s = MultiIndexSet::new(3, 2).unwrap();
        assert_eq!(s.len(), 27);
        assert_eq!(s.multi_index(1), &[1, 0, 0]);
        assert_eq!(s.multi_index(3), &[0, 1, 0]);
        assert_eq!(s.multi_index(9), &[0, 0, 1]);
        for i in 0..s.len() {
            assert_eq!(s.index_of(s.multi_index(i)), Some(i));
        }
        assert_eq!(s.index_of(&[3, 0, 0]), None);
        assert_eq!(MultiIndexSet::new(0, 5).unwrap().len(), 1);
    }

    #[test]
    fn eval_basis_examples() {
        let b3 = PcBasis::new(3, 1).unwrap();
        assert_eq!(b3.eval_basis(&[0, 0, 0], &[0.1, -0.2, 0.9]).unwrap(), 1.0);
        let b2 = PcBasis::new(2, 1).unwrap();
        assert!((b2.eval_basis(&[1, 0], &[0.5, 0.7]).unwrap() - 0.8660254037844386).abs() < 1e-15);
        assert!((b2.eval_basis(&[1, 1], &[0.5, 0.5]).unwrap() - 0.75).abs() < 1e-14);
        assert!(matches!(
            b2.eval_basis(&[1, 1], &[0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_of_one_is_identity() {
        let b = PcBasis::new(2, 4).unwrap();
        let s = b.gram_matrix(|_| 1.0).unwrap();
        let id = DMatrix::<f64>::identity(b.len(), b.len());
        assert!((s - id).amax() < 1e-13);
    }

    #[test]
    fn gram_of_xi_matches_analytic_moments() {
        let b = PcBasis::new(1, 1).unwrap();
        let s = b.gram_matrix(|x| x[0]).unwrap();
        let c = 1.0 / 3f64.sqrt();
        assert!(s[(0, 0)].abs() < 1e-15 && s[(1, 1)].abs() < 1e-15);
        assert!((s[(0, 1)] - c).abs() < 1e-15 && (s[(1, 0)] - c).abs() < 1e-15);
    }

    #[test]
    fn gram_of_positive_weight_is_spd() {
        let b = PcBasis::new(1, 2).unwrap();
        let g = |x: &[f64]| 1.0 / (x[0] + 2.0);
        let s = b.gram_matrix(g).unwrap();
        // Oracle: 200-point Gauss rule, independent of the basis' own quadrature.
        let (x, w) = gauss_legendre(200);
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&t, &wt)| {
                        0.5 * wt * g(&[t]) * legendre_orthonormal(i, t) * legendre_orthonormal(j, t)
                    })
                    .sum();
                assert!((s[(i, j)] - q).abs() < 1e-6, "({i},{j}) {} vs {q}", s[(i, j)]);
                assert_eq!(s[(i, j)], s[(j, i)]);
            }
        }
        let eig = s.symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn gram_rejects_non_finite_weight() {
        let b = PcBasis::new(1, 1).unwrap();
        assert!(matches!(
            b.gram_matrix(|_| f64::NAN),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn mean_variance_examples() {
        let (m, v) = mean_variance(&[vec![2.0]]);
        assert_eq!((m[0], v[0]), (2.0, 0.0));
        let (m, v) = mean_variance(&[vec![1.0], vec![3.0]]);
        assert_eq!((m[0], v[0]), (1.0, 9.0));
        let (m, v) = mean_variance(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!((m, v), (vec![0.0, 0.0], vec![0.0, 0.0]));
    }

    #[test]
    fn sample_expansion_examples() {
        let b = PcBasis::new(1, 1).unwrap();
        let a = vec![1.5, -2.0];
        let bb = vec![0.25, 4.0];
        let modes = [a.clone(), bb.clone()];
        assert_eq!(sample_expansion(&b, &modes, &[0.0]).unwrap(), a);
        let at1 = sample_expansion(&b, &modes, &[1.0]).unwrap();
        for k in 0..2 {
            assert!((at1[k] - (a[k] + 3f64.sqrt() * bb[k])).abs() < 1e-14);
        }
        let only0 = [a.clone(), vec![0.0, 0.0]];
        assert_eq!(sample_expansion(&b, &only0, &[-0.37]).unwrap(), a);
    }

    #[test]
    fn projection_recovers_polynomial_coefficients() {
        let b = PcBasis::new(2, 3).unwrap();
        let coeffs: Vec<f64> = (0..b.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let samples: Vec<f64> = b
            .tensor_nodes()
            .iter()
            .map(|(xi, _)| {
                let psi = b.eval_all(xi).unwrap();
                psi.iter().zip(&coeffs).map(|(p, c)| p * c).sum()
            })
            .collect();
        let got = b.project_tensor_samples(&samples);
        for (g, c) in got.iter().zip(&coeffs) {
            assert!((g - c).abs() < 1e-13);
        }
    }

    #[test]
    fn monte_carlo_mean_converges_to_mode_zero() {
        use rand::{Rng, SeedableRng};
        let b = PcBasis::new(2, 2).unwrap();
        let modes: Vec<Vec<f64>> = (0..b.len()).map(|i| vec![1.0 / (1.0 + i as f64)]).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v = sample_expansion(&b, &modes, &xi).unwrap()[0];
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - modes[0][0]).abs() < 3.0 * sd, "{mean} vs 1 (se {sd})");
    }

    proptest! {
        #[test]
        fn linearization_round_trips(dim in 1usize..4, degree in 0usize..6, seed in 0usize..10_000) {
            let s = MultiIndexSet::new(dim, degree).unwrap();
            let i = seed % s.len();
            prop_assert_eq!(s.index_of(s.multi_index(i)), Some(i));
        }

        #[test]
        fn expansion_is_linear(a in -5.0f64..5.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let b = PcBasis::new(2, 2).unwrap();
            let m1: Vec<Vec<f64>> = (0..b.len()).map(|i| vec![i as f64]).collect();
            let m2: Vec<Vec<f64>> = (0..b.len()).map(|i| vec![(i as f64).cos()]).collect();
            let comb: Vec<Vec<f64>> = m1.iter().zip(&m2).map(|(p, q)| vec![a * p[0] + q[0]]).collect();
            let l = sample_expansion(&b, &comb, &[x, y]).unwrap()[0];
            let r = a * sample_expansion(&b, &m1, &[x, y]).unwrap()[0]
                + sample_expansion(&b, &m2, &[x, y]).unwrap()[0];
            prop_assert!((l - r).abs() < 1e-10 * (1.0 + r.abs()));
        }
    }
}
