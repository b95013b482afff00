//! Globally adaptive integration of vector-valued integrands over a triangle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::{self, Vec3};
use crate::quadrature::TriangleRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Target error relative to the largest component of the integral.
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Cap on the number of leaf triangles.
    pub max_leaves: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-8,
            max_depth: 16,
            max_leaves: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdaptiveReport {
    pub evaluations: usize,
    pub leaves: usize,
    pub error_estimate: f64,
    /// Stopped by the depth or leaf cap before reaching the tolerance.
    pub capped: bool,
}

struct Leaf {
    tri: [Vec3; 3],
    depth: u32,
    /// Sum over the four children.
    fine: Vec<f64>,
    err: f64,
}

impl PartialEq for Leaf {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Leaf {}
impl PartialOrd for Leaf {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Leaf {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn children(t: &[Vec3; 3]) -> [[Vec3; 3]; 4] {
    let m = |a: Vec3, b: Vec3| geom::scale(geom::add(a, b), 0.5);
    let [a, b, c] = *t;
    let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]
}

fn make_leaf<A>(apply: &mut A, t: [Vec3; 3], coarse: &[f64], depth: u32) -> Leaf
where
    A: FnMut(&[Vec3; 3], &mut [f64]),
{
    let m = coarse.len();
    let mut fine = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    for c in children(&t) {
        apply(&c, &mut tmp);
        for (a, b) in fine.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    let err = fine
        .iter()
        .zip(coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Leaf {
        tri: t,
        depth,
        fine,
        err,
    }
}

/// Integrates `f` (writing `m` values) over `tri`. The error of a triangle is
/// the max-norm difference between its own estimate and the sum of its
/// children; the triangle with the largest error is refined first.
pub fn integrate<F>(tri: [Vec3; 3], m: usize, rule: &TriangleRule, opts: &AdaptiveOptions, mut f: F) -> (Vec<f64>, AdaptiveReport)
where
    F: FnMut(Vec3, &mut [f64]),
{
    let mut buf = vec![0.0; m];
    let mut calls = 0usize;
    let mut apply = |t: &[Vec3; 3], out: &mut [f64]| {
        let area = geom::triangle_area(t);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            f(geom::affine(t, p[0], p[1]), &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += area * w * v;
            }
        }
        calls += 1;
    };

    let mut coarse = vec![0.0; m];
    apply(&tri, &mut coarse);
    let root = make_leaf(&mut apply, tri, &coarse, 0);
    let scale = root.fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let target = opts.rel_tol * scale;
    let mut total_err = root.err;
    let mut heap = BinaryHeap::new();
    heap.push(root);
    let mut capped = false;
    while total_err > target {
        if heap.len() + 3 > opts.max_leaves {
            capped = true;
            break;
        }
        let Some(top) = heap.peek() else { break };
        if top.depth >= opts.max_depth {
            capped = true;
            break;
        }
        let leaf = heap.pop().expect("peeked");
        total_err -= leaf.err;
        let mut own = vec![0.0; m];
        for c in children(&leaf.tri) {
            apply(&c, &mut own);
            let child = make_leaf(&mut apply, c, &own, leaf.depth + 1);
            total_err += child.err;
            heap.push(child);
        }
    }
    drop(apply);
    let evals = calls * rule.len();
    let leaves = heap.len();
    let all: Vec<Leaf> = heap.into_vec();
    let mut result = vec![0.0; m];
    for l in &all {
        for (r, v) in result.iter_mut().zip(&l.fine) {
            *r += v;
        }
    }
    let error_estimate = all.iter().map(|l| l.err).sum();
    (
        result,
        AdaptiveReport {
            evaluations: evals,
            leaves,
            error_estimate,
            capped,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact_without_refinement() {
        let t = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        let rule = TriangleRule::degree5();
        let (v, rep) = integrate(t, 2, &rule, &AdaptiveOptions::default(), |x, out| {
            out[0] = 1.0;
            out[1] = x[0] * x[0] * x[1];
        });
        let area = geom::triangle_area(&t);
        assert!((v[0] - area).abs() < 1e-14);
        assert_eq!(rep.leaves, 1);
        assert!(!rep.capped);
        // ∫ x^2 y over the triangle: affine map with x = 2u, y = v.
        let exact = area * 2.0 * (4.0 * 2.0 * 1.0 / 120.0);
        assert!((v[1] - exact).abs() < 1e-14, "{} vs {exact}", v[1]);
    }

    #[test]
    fn kink_converges_to_tolerance() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let rule = TriangleRule::degree5();
        let opts = AdaptiveOptions {
            rel_tol: 1e-9,
            max_leaves: 100_000,
            ..Default::default()
        };
        let (v, rep) = integrate(t, 1, &rule, &opts, |x, out| out[0] = (x[0] - 0.3).abs());
        assert!(!rep.capped);
        let exact = 0.212 - 0.343 / 3.0;
        assert!((v[0] - exact).abs() < 2e-9 * exact, "{} vs {exact}", v[0]);
    }

    #[test]
    fn reports_cap() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let rule = TriangleRule::degree5();
        let opts = AdaptiveOptions {
            rel_tol: 1e-14,
            max_leaves: 16,
            max_depth: 20,
        };
        let (_, rep) = integrate(t, 1, &rule, &opts, |x, out| out[0] = 1.0 / (x[0] + x[1] + 1e-6).sqrt());
        assert!(rep.capped);
        assert!(rep.leaves <= 16);
    }
}
