//! Small fixed-size vector helpers and exact triangle distance queries.

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Point `a + u (b - a) + v (c - a)`.
#[inline]
pub fn affine(tri: &[Vec3; 3], u: f64, v: f64) -> Vec3 {
    let [a, b, c] = *tri;
    [
        a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
        a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
        a[2] + u * (b[2] - a[2]) + v * (c[2] - a[2]),
    ]
}

pub fn triangle_area(tri: &[Vec3; 3]) -> f64 {
    0.5 * norm(cross(sub(tri[1], tri[0]), sub(tri[2], tri[0])))
}

/// Closest point of a triangle to `p`.
pub fn closest_point_on_triangle(p: Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *tri;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return add(a, scale(ab, d1 / (d1 - d3)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return add(a, scale(ac, d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

pub fn point_triangle_distance(p: Vec3, tri: &[Vec3; 3]) -> f64 {
    dist(p, closest_point_on_triangle(p, tri))
}

/// Distance between segments [p1, q1] and [p2, q2].
pub fn segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let eps = 1e-300;
    let (s, t);
    if a <= eps && e <= eps {
        return norm(r);
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = add(p1, scale(d1, s));
    let c2 = add(p2, scale(d2, t));
    dist(c1, c2)
}

/// Whether segment [p, q] crosses the interior of a triangle.
fn segment_hits_triangle(p: Vec3, q: Vec3, tri: &[Vec3; 3]) -> bool {
    let n = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    let dp = dot(n, sub(p, tri[0]));
    let dq = dot(n, sub(q, tri[0]));
    if dp * dq > 0.0 || dp == dq {
        return false;
    }
    let t = dp / (dp - dq);
    let x = add(p, scale(sub(q, p), t));
    (0..3).all(|k| {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        dot(cross(sub(b, a), sub(x, a)), n) >= 0.0
    })
}

/// Minimum distance between two triangles.
pub fn triangle_distance(s: &[Vec3; 3], t: &[Vec3; 3]) -> f64 {
    for i in 0..3 {
        let (p, q) = (s[i], s[(i + 1) % 3]);
        if segment_hits_triangle(p, q, t) {
            return 0.0;
        }
        let (p, q) = (t[i], t[(i + 1) % 3]);
        if segment_hits_triangle(p, q, s) {
            return 0.0;
        }
    }
    let mut d = f64::INFINITY;
    for i in 0..3 {
        d = d.min(point_triangle_distance(s[i], t));
        d = d.min(point_triangle_distance(t[i], s));
        for j in 0..3 {
            d = d.min(segment_distance(s[i], s[(i + 1) % 3], t[j], t[(j + 1) % 3]));
        }
    }
    d
}

/// Maximum distance between points of two triangles (attained at vertices).
pub fn triangle_max_distance(s: &[Vec3; 3], t: &[Vec3; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for a in s {
        for b in t {
            d = d.max(dist(*a, *b));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIT: [Vec3; 3] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

    fn brute_distance(s: &[Vec3; 3], t: &[Vec3; 3]) -> f64 {
        let n = 60;
        let mut best = f64::INFINITY;
        let pts = |tri: &[Vec3; 3]| {
            let mut v = Vec::new();
            for i in 0..=n {
                for j in 0..=(n - i) {
                    v.push(affine(tri, i as f64 / n as f64, j as f64 / n as f64));
                }
            }
            v
        };
        let ps = pts(s);
        let pt = pts(t);
        for a in &ps {
            for b in &pt {
                best = best.min(dist(*a, *b));
            }
        }
        best
    }

    #[test]
    fn distance_examples() {
        let lifted = UNIT.map(|p| [p[0], p[1], p[2] + 2.0]);
        assert!((triangle_distance(&UNIT, &lifted) - 2.0).abs() < 1e-15);
        let shared = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.3]];
        assert_eq!(triangle_distance(&UNIT, &shared), 0.0);
        let piercing = [[0.2, 0.2, -1.0], [0.3, 0.2, 1.0], [5.0, 5.0, 5.0]];
        assert_eq!(triangle_distance(&UNIT, &piercing), 0.0);
        assert!((triangle_max_distance(&UNIT, &lifted) - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn point_distance_regions() {
        assert!((point_triangle_distance([0.2, 0.2, 3.0], &UNIT) - 3.0).abs() < 1e-15);
        assert!((point_triangle_distance([-1.0, -1.0, 0.0], &UNIT) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance([1.0, 1.0, 0.0], &UNIT) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn distance_bounded_by_sampling(c in prop::array::uniform9(-2.0f64..2.0)) {
            let t = [[c[0], c[1], c[2] + 0.5], [c[3], c[4], c[5]], [c[6], c[7], c[8]]];
            prop_assume!(triangle_area(&t) > 1e-3);
            let exact = triangle_distance(&UNIT, &t);
            let brute = brute_distance(&UNIT, &t);
            prop_assert!(exact <= brute + 1e-12);
            prop_assert!(brute - exact < 0.1);
        }
    }
}
