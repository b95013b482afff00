//! Inner surface integrals over one source triangle, restricted to a ball
//! {y : |x - y| < ρ} around the field point.
//!
//! The triangle is split into three signed sub-triangles spanned by the
//! projection p of x onto the triangle plane and each edge. On a
//! sub-triangle, polar coordinates about p reduce the radial integral to
//! closed form; the angular integral is closed form for the single layer and
//! Gauss–Legendre in v = asinh(s/h) for the adjoint double layer.

use std::f64::consts::PI;

use crate::geom::{self, Vec3};
use crate::quadrature::gauss_legendre;

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: Vec3,
    dir: Vec3,
    inward: Vec3,
    len: f64,
}

/// A source triangle with precomputed edge frames.
#[derive(Debug, Clone)]
pub struct SourceTriangle {
    pub vertices: [Vec3; 3],
    pub normal: Vec3,
    edges: [Edge; 3],
    scale: f64,
}

/// Edge of the sub-triangle decomposition seen from a projected point.
#[derive(Debug, Clone, Copy)]
struct SubTri {
    sign: f64,
    h: f64,
    s0: f64,
    s1: f64,
    /// Unit vector from p towards the foot of the edge line.
    u0: Vec3,
    dir: Vec3,
}

impl SourceTriangle {
    pub fn new(vertices: [Vec3; 3]) -> Self {
        let normal = geom::normalize(geom::cross(
            geom::sub(vertices[1], vertices[0]),
            geom::sub(vertices[2], vertices[0]),
        ));
        let edges = [0, 1, 2].map(|k| {
            let a = vertices[k];
            let b = vertices[(k + 1) % 3];
            let e = geom::sub(b, a);
            let len = geom::norm(e);
            let dir = geom::scale(e, 1.0 / len);
            Edge {
                a,
                dir,
                inward: geom::cross(normal, dir),
                len,
            }
        });
        let scale = edges.iter().map(|e| e.len).fold(0.0, f64::max);
        SourceTriangle {
            vertices,
            normal,
            edges,
            scale,
        }
    }

    /// Signed distance d of x from the plane and the three sub-triangles.
    fn decompose(&self, x: Vec3) -> (f64, [Option<SubTri>; 3]) {
        let d = geom::dot(geom::sub(x, self.vertices[0]), self.normal);
        let p = geom::sub(x, geom::scale(self.normal, d));
        let tiny = 1e-14 * self.scale;
        let subs = self.edges.map(|e| {
            let pa = geom::sub(p, e.a);
            let h = geom::dot(pa, e.inward);
            if h.abs() <= tiny {
                return None;
            }
            let t = geom::dot(pa, e.dir);
            Some(SubTri {
                sign: h.signum(),
                h: h.abs(),
                s0: -t,
                s1: e.len - t,
                u0: geom::scale(e.inward, -h.signum()),
                dir: e.dir,
            })
        });
        (d, subs)
    }

    /// C(x; ρ) = ∫_{T ∩ B(x, ρ)} 1 / (4π|x - y|) dy. `None` means ρ = ∞.
    pub fn single_layer(&self, x: Vec3, rho: Option<f64>) -> f64 {
        let (d, subs) = self.decompose(x);
        let ad = d.abs();
        if let Some(r) = rho {
            if r <= ad {
                return 0.0;
            }
        }
        let mut total = 0.0;
        for st in subs.iter().flatten() {
            total += st.sign * single_layer_piece(st.h, ad, st.s0, st.s1, rho);
        }
        total / FOUR_PI
    }

    /// Evaluates C(x; ρ_k) for every radius and the unrestricted value.
    pub fn single_layer_many(&self, x: Vec3, radii: &[f64], out: &mut [f64]) {
        let (d, subs) = self.decompose(x);
        let ad = d.abs();
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for st in subs.iter().flatten() {
            for (k, &r) in radii.iter().enumerate() {
                if r > ad {
                    out[k] += st.sign * single_layer_piece(st.h, ad, st.s0, st.s1, Some(r));
                }
            }
            out[radii.len()] += st.sign * single_layer_piece(st.h, ad, st.s0, st.s1, None);
        }
        for o in out.iter_mut() {
            *o /= FOUR_PI;
        }
    }

    /// Q(x; ρ) = ∫_{T ∩ B(x, ρ)} ν·(x - y) / |x - y|^3 dy for a unit vector ν.
    pub fn normal_derivative(&self, x: Vec3, nu: Vec3, rho: Option<f64>, rule: &AngularRule) -> f64 {
        let mut out = [0.0; 1];
        match rho {
            Some(r) => {
                let mut tmp = [0.0; 2];
                self.normal_derivative_many(x, nu, &[r], rule, &mut tmp);
                out[0] = tmp[0];
            }
            None => self.normal_derivative_many(x, nu, &[], rule, &mut out),
        }
        out[0]
    }

    /// Evaluates Q(x; ρ_k) for every radius and the unrestricted value.
    pub fn normal_derivative_many(
        &self,
        x: Vec3,
        nu: Vec3,
        radii: &[f64],
        rule: &AngularRule,
        out: &mut [f64],
    ) {
        let (d, subs) = self.decompose(x);
        let floor = 1e-12 * self.scale;
        let d = if d.abs() < floor { 0.0 } else { d };
        let ad = d.abs().max(floor);
        let nun = geom::dot(nu, self.normal);
        let mut tan = geom::sub(nu, geom::scale(self.normal, nun));
        if geom::norm(tan) < 1e-14 * geom::norm(nu) {
            tan = [0.0; 3];
        }
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for st in subs.iter().flatten() {
            let nu0 = geom::dot(tan, st.u0);
            let nud = geom::dot(tan, st.dir);
            let ctx = QPiece {
                h: st.h,
                d,
                ad,
                nun,
                nu0,
                nud,
            };
            for (k, &r) in radii.iter().enumerate() {
                if r > d.abs() {
                    let rc = (r * r - d * d).sqrt();
                    out[k] += st.sign * ctx.integrate(st.s0, st.s1, Some(rc), rule);
                }
            }
            out[radii.len()] += st.sign * ctx.integrate(st.s0, st.s1, None, rule);
        }
    }
}

/// ∫ over one sub-triangle (edge coordinate s in [s0, s1], distance h of the
/// edge line from p, plane offset |d|) of min(R_e, ρ) - |d| dθ.
fn single_layer_piece(h: f64, ad: f64, s0: f64, s1: f64, rho: Option<f64>) -> f64 {
    let w2 = h * h + ad * ad;
    let w = w2.sqrt();
    let theta = |s: f64| (s / h).atan();
    let phi = |s: f64| {
        let r = (s * s + w2).sqrt();
        h * (s / w).asinh() + ad * (ad * s / (h * r)).atan() - ad * (s / h).atan()
    };
    let Some(rho) = rho else {
        return phi(s1) - phi(s0);
    };
    let sig2 = rho * rho - w2;
    let cap = rho - ad;
    if sig2 <= 0.0 {
        return cap * (theta(s1) - theta(s0));
    }
    let sig = sig2.sqrt();
    let lo = s0.max(-sig);
    let hi = s1.min(sig);
    let mut total = 0.0;
    if hi > lo {
        total += phi(hi) - phi(lo);
        if s0 < lo {
            total += cap * (theta(lo) - theta(s0));
        }
        if s1 > hi {
            total += cap * (theta(s1) - theta(hi));
        }
    } else {
        total += cap * (theta(s1) - theta(s0));
    }
    total
}

/// Gauss–Legendre nodes on [-1, 1] for the angular integrals.
#[derive(Debug, Clone)]
pub struct AngularRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Longest v-interval integrated with one rule application.
    max_span: f64,
}

impl AngularRule {
    pub fn new(points: usize, max_span: f64) -> Self {
        let (nodes, weights) = gauss_legendre(points);
        AngularRule {
            nodes,
            weights,
            max_span,
        }
    }
}

impl Default for AngularRule {
    fn default() -> Self {
        AngularRule::new(12, 1.5)
    }
}

struct QPiece {
    h: f64,
    d: f64,
    ad: f64,
    nun: f64,
    nu0: f64,
    nud: f64,
}

impl QPiece {
    #[inline]
    fn integrand(&self, v: f64, rc: Option<f64>) -> f64 {
        let ch = v.cosh();
        let th = v.tanh();
        let re = self.h * ch;
        let rt = match rc {
            Some(rc) => re.min(rc),
            None => re,
        };
        let big_r = (rt * rt + self.d * self.d).sqrt();
        let nue = self.nu0 / ch + self.nud * th;
        let radial_n = self.d * self.nun * (1.0 / self.ad - 1.0 / big_r);
        let radial_t = (rt / self.ad).asinh() - rt / big_r;
        (radial_n - nue * radial_t) / ch
    }

    fn integrate(&self, s0: f64, s1: f64, rc: Option<f64>, rule: &AngularRule) -> f64 {
        let v0 = (s0 / self.h).asinh();
        let v1 = (s1 / self.h).asinh();
        let mut cuts = [v0, v1, v1, v1];
        let mut n = 1;
        if let Some(rc) = rc {
            if rc > self.h {
                let vb = (rc / self.h).acosh();
                for b in [-vb, vb] {
                    if b > v0 && b < v1 {
                        cuts[n] = b;
                        n += 1;
                    }
                }
            }
        }
        cuts[n] = v1;
        let mut total = 0.0;
        for k in 0..n {
            let (a, b) = (cuts[k], cuts[k + 1]);
            let pieces = ((b - a) / rule.max_span).ceil().max(1.0) as usize;
            let step = (b - a) / pieces as f64;
            for p in 0..pieces {
                let lo = a + p as f64 * step;
                let half = 0.5 * step;
                let mid = lo + half;
                let mut acc = 0.0;
                for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                    acc += w * self.integrand(mid + half * t, rc);
                }
                total += half * acc;
            }
        }
        total
    }
}
