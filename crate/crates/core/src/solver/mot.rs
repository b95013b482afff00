use nalgebra::DMatrix;

use super::{Coefficient, ModeTensor};
use crate::error::{Error, Result};
use crate::kernels::ToeplitzBlockSequence;
use crate::pc_basis::PcBasis;

fn check_rhs(n: usize, rhs: &ModeTensor) -> Result<()> {
    if rhs.elements != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.elements,
        });
    }
    Ok(())
}

/// max |u_ii| / min |u_ii| of an LU factor; a cheap lower bound on the condition number.
fn pivot_ratio(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let d = u.diagonal();
    let max = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    max / min
}

fn factorize(a: DMatrix<f64>, what: &str) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = a.lu();
    let ratio = pivot_ratio(&lu);
    if !lu.is_invertible() || !ratio.is_finite() || ratio > 1e15 {
        return Err(Error::Singular(format!("{what}: pivot ratio {ratio:e}")));
    }
    Ok(lu)
}

fn solve_element_major(
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    b: &mut [f64],
    n: usize,
    width: usize,
) -> Result<()> {
    let mut m = DMatrix::from_fn(n, width, |r, i| b[r * width + i]);
    if !lu.solve_mut(&mut m) {
        return Err(Error::Singular("step solve failed".into()));
    }
    for r in 0..n {
        for i in 0..width {
            b[r * width + i] = m[(r, i)];
        }
    }
    Ok(())
}

/// Marching on in time for the Dirichlet single layer system, all modes at
/// once: V^0 φ^l = F^l - Σ_{j=1}^{l} V^j φ^{l-j}. V^0 is factorized once.
pub fn mot_dirichlet(v: &ToeplitzBlockSequence, rhs: &ModeTensor) -> Result<ModeTensor> {
    let n = v.dim();
    check_rhs(n, rhs)?;
    let lu = factorize(v.dense(0), "V^0")?;
    let width = rhs.modes;
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(rhs.steps);
    let mut out = ModeTensor::zeros(rhs.modes, rhs.steps, n);
    for l in 0..rhs.steps {
        let mut b = rhs.step_element_major(l);
        for j in 1..=l.min(v.truncation()) {
            if let Some(blk) = v.block(j) {
                blk.mul_add_rows(-1.0, &hist[l - j], &mut b, width);
            }
        }
        solve_element_major(&lu, &mut b, n, width)?;
        out.set_step_element_major(l, &b);
        hist.push(b);
    }
    Ok(out)
}

/// The full block lower-triangular space-time matrix for `steps` steps.
pub fn dense_space_time_matrix(v: &ToeplitzBlockSequence, steps: usize) -> DMatrix<f64> {
    let n = v.dim();
    let mut a = DMatrix::zeros(n * steps, n * steps);
    for j in 0..steps.min(v.truncation() + 1) {
        if v.block(j).is_none() {
            continue;
        }
        let blk = v.dense(j);
        for m in 0..steps - j {
            let l = m + j;
            a.view_mut((l * n, m * n), (n, n)).copy_from(&blk);
        }
    }
    a
}

/// Solves every mode against the assembled space-time matrix with one dense LU.
pub fn dense_dirichlet_solve(v: &ToeplitzBlockSequence, rhs: &ModeTensor) -> Result<ModeTensor> {
    let n = v.dim();
    check_rhs(n, rhs)?;
    let a = dense_space_time_matrix(v, rhs.steps);
    let lu = factorize(a, "space-time matrix")?;
    let mut out = ModeTensor::zeros(rhs.modes, rhs.steps, n);
    for i in 0..rhs.modes {
        let b = nalgebra::DVector::from_column_slice(rhs.mode(i));
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Singular("space-time matrix".into()))?;
        let o = i * rhs.steps * n;
        out.data[o..o + rhs.steps * n].copy_from_slice(x.as_slice());
    }
    Ok(out)
}

/// Stochastic Gram matrices S(α_p), one per patch.
pub fn patch_grams(basis: &PcBasis, coefficients: &[Coefficient]) -> Result<Vec<DMatrix<f64>>> {
    coefficients
        .iter()
        .map(|c| match c {
            Coefficient::Constant(a) => Ok(DMatrix::identity(basis.len(), basis.len()) * *a),
            _ => basis.gram_matrix(|xi| c.eval(xi)),
        })
        .collect()
}

pub struct SecondKindOperators<'a> {
    pub v: &'a ToeplitzBlockSequence,
    pub k: &'a ToeplitzBlockSequence,
    /// Diagonal mass matrix (element areas for piecewise constants).
    pub mass: &'a [f64],
    /// Patch index of every element.
    pub patches: &'a [usize],
    /// S(α_p) per patch.
    pub grams: &'a [DMatrix<f64>],
}

impl SecondKindOperators<'_> {
    fn check(&self) -> Result<(usize, usize)> {
        let n = self.v.dim();
        for got in [self.k.dim(), self.mass.len(), self.patches.len()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        let width = self.grams.first().map_or(0, |g| g.nrows());
        if width == 0 {
            return Err(Error::InvalidArgument("no stochastic Gram matrices".into()));
        }
        if let Some(&p) = self.patches.iter().find(|&&p| p >= self.grams.len()) {
            return Err(Error::InvalidArgument(format!("element patch {p} has no Gram matrix")));
        }
        for g in self.grams {
            if g.nrows() != width || g.ncols() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: g.nrows(),
                });
            }
        }
        Ok((n, width))
    }

    /// [I ⊗ (-Δt/2 M + K'^0) - Σ_p S(α_p) ⊗ P_p V^0], index s·modes + i.
    pub fn step_matrix(&self) -> Result<DMatrix<f64>> {
        let (n, w) = self.check()?;
        let dt = self.v.dt;
        let k0 = self.k.block(0);
        let v0 = self.v.block(0);
        let mut a = DMatrix::zeros(n * w, n * w);
        for r in 0..n {
            for i in 0..w {
                a[(r * w + i, r * w + i)] -= 0.5 * dt * self.mass[r];
            }
            if let Some(k0) = k0 {
                for (s, kv) in k0.row(r) {
                    for i in 0..w {
                        a[(r * w + i, s * w + i)] += kv;
                    }
                }
            }
            if let Some(v0) = v0 {
                let g = &self.grams[self.patches[r]];
                for (s, vv) in v0.row(r) {
                    for i in 0..w {
                        for k in 0..w {
                            a[(r * w + i, s * w + k)] -= g[(i, k)] * vv;
                        }
                    }
                }
            }
        }
        Ok(a)
    }
}

/// Marching on in time for the Kronecker-coupled second-kind system. The
/// step matrix is factorized once; history terms are applied blockwise.
pub fn mot_second_kind(ops: &SecondKindOperators<'_>, rhs: &ModeTensor) -> Result<ModeTensor> {
    let (n, w) = ops.check()?;
    check_rhs(n, rhs)?;
    if rhs.modes != w {
        return Err(Error::DimensionMismatch {
            expected: w,
            got: rhs.modes,
        });
    }
    let lu = factorize(ops.step_matrix()?, "second-kind step matrix")?;
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(rhs.steps);
    let mut out = ModeTensor::zeros(w, rhs.steps, n);
    let mut tmp = vec![0.0; n * w];
    for l in 0..rhs.steps {
        let mut b = rhs.step_element_major(l);
        for j in 1..=l {
            let x = &hist[l - j];
            if let Some(kj) = ops.k.block(j) {
                kj.mul_add_rows(-1.0, x, &mut b, w);
            }
            if let Some(vj) = ops.v.block(j) {
                tmp.iter_mut().for_each(|t| *t = 0.0);
                vj.mul_add_rows(1.0, x, &mut tmp, w);
                for r in 0..n {
                    let g = &ops.grams[ops.patches[r]];
                    let row = &tmp[r * w..(r + 1) * w];
                    for i in 0..w {
                        let mut acc = 0.0;
                        for (k, t) in row.iter().enumerate() {
                            acc += g[(i, k)] * t;
                        }
                        b[r * w + i] += acc;
                    }
                }
            }
        }
        solve_element_major_flat(&lu, &mut b)?;
        out.set_step_element_major(l, &b);
        hist.push(b);
    }
    Ok(out)
}

fn solve_element_major_flat(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, b: &mut [f64]) -> Result<()> {
    let mut v = nalgebra::DVector::from_column_slice(b);
    if !lu.solve_mut(&mut v) {
        return Err(Error::Singular("step solve failed".into()));
    }
    b.copy_from_slice(v.as_slice());
    Ok(())
}
