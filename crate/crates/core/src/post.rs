//! Error functionals, rate fits, spectra and exporters.

use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kernels::{eval_single_layer_potential, ToeplitzBlockSequence};
use crate::mesh::{self, SurfaceMesh, TimeGrid};
use crate::solver::{ModeTensor, StochasticSolution};

pub const P_REF: f64 = 20e-6;
pub const DB_FLOOR: f64 = -300.0;

fn same_shape(a: &ModeTensor, b: &ModeTensor) -> Result<()> {
    for (x, y) in [(a.modes, b.modes), (a.steps, b.steps), (a.elements, b.elements)] {
        if x != y {
            return Err(Error::DimensionMismatch { expected: x, got: y });
        }
    }
    Ok(())
}

/// Σ_l Σ_{j≤l} V^j φ^{l-j}, all modes, in mode-major layout.
pub fn apply_space_time(v: &ToeplitzBlockSequence, phi: &ModeTensor) -> Result<ModeTensor> {
    let n = v.dim();
    if phi.elements != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phi.elements,
        });
    }
    let w = phi.modes;
    let hist: Vec<Vec<f64>> = (0..phi.steps).map(|l| phi.step_element_major(l)).collect();
    let mut out = ModeTensor::zeros(w, phi.steps, n);
    for l in 0..phi.steps {
        let mut y = vec![0.0; n * w];
        for j in 0..=l.min(v.truncation()) {
            if let Some(blk) = v.block(j) {
                blk.mul_add_rows(1.0, &hist[l - j], &mut y, w);
            }
        }
        out.set_step_element_major(l, &y);
    }
    Ok(out)
}

/// E(φ) = Σ_κ (½ φ_κᵀ 𝒱 φ_κ - F_κᵀ φ_κ).
pub fn energy_functional(phi: &ModeTensor, v: &ToeplitzBlockSequence, f: &ModeTensor) -> Result<f64> {
    same_shape(phi, f)?;
    let vphi = apply_space_time(v, phi)?;
    Ok(phi
        .data
        .iter()
        .zip(&vphi.data)
        .zip(&f.data)
        .map(|((p, vp), f)| 0.5 * p * vp - f * p)
        .sum())
}

/// -½ Σ_κ F_κᵀ φ_κ, equal to the energy of a Galerkin solution.
pub fn galerkin_energy(phi: &ModeTensor, f: &ModeTensor) -> Result<f64> {
    same_shape(phi, f)?;
    Ok(-0.5 * phi.data.iter().zip(&f.data).map(|(p, f)| p * f).sum::<f64>())
}

pub fn relative_error(value: f64, reference: f64) -> Result<f64> {
    if !(reference.abs() > 0.0) || !value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "relative error needs a nonzero finite reference (value {value}, reference {reference})"
        )));
    }
    Ok((value - reference).abs() / reference.abs())
}

/// √(Σ_κ Σ_m Σ_s (φ_κ^{m,s})² |Γ_s| Δt) for piecewise constants.
pub fn l2_space_time_norm(field: &ModeTensor, mesh: &SurfaceMesh, grid: &TimeGrid) -> Result<f64> {
    if field.elements != mesh.len() {
        return Err(Error::DimensionMismatch {
            expected: mesh.len(),
            got: field.elements,
        });
    }
    if field.steps != grid.steps {
        return Err(Error::DimensionMismatch {
            expected: grid.steps,
            got: field.steps,
        });
    }
    let areas = mesh.areas();
    let mut acc = 0.0;
    for i in 0..field.modes {
        for m in 0..field.steps {
            for (x, a) in field.slice(i, m).iter().zip(areas) {
                acc += x * x * a;
            }
        }
    }
    Ok((acc * grid.dt).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub label: String,
    /// SG degree or space-time DOF.
    pub abscissa: f64,
    pub error: f64,
    pub level: Option<usize>,
    pub cfl: Option<f64>,
}

impl ConvergenceRecord {
    pub fn new(label: impl Into<String>, abscissa: f64, error: f64) -> Result<Self> {
        let r = ConvergenceRecord {
            label: label.into(),
            abscissa,
            error,
            level: None,
            cfl: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = Some(cfl);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abscissa > 0.0) || !self.abscissa.is_finite() {
            return Err(Error::InvalidArgument(format!("abscissa must be positive, got {}", self.abscissa)));
        }
        if !(self.error >= 0.0) || !self.error.is_finite() {
            return Err(Error::InvalidArgument(format!("error must be nonnegative, got {}", self.error)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through (log abscissa, log error).
pub fn fit_rate(records: &[ConvergenceRecord]) -> Result<RateFit> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 2 records, got {}",
            records.len()
        )));
    }
    for r in records {
        r.validate()?;
        if r.error == 0.0 {
            return Err(Error::InvalidArgument(format!("record `{}` has zero error", r.label)));
        }
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.abscissa.ln(), r.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-24 * (1.0 + mx * mx)) {
        return Err(Error::InvalidArgument("degenerate abscissae: all equal".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Richardson {
    pub limit: f64,
    pub constant: f64,
    pub order: f64,
}

/// Fits E_h = E_∞ + C h^p through three levels.
pub fn richardson_extrapolate(h: [f64; 3], e: [f64; 3]) -> Result<Richardson> {
    if h.iter().any(|x| !(*x > 0.0)) || !(h[0] > h[1] && h[1] > h[2]) {
        return Err(Error::InvalidArgument(format!("mesh widths must be positive and decreasing: {h:?}")));
    }
    let (d1, d2) = (e[0] - e[1], e[1] - e[2]);
    let ratio = d1 / d2;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "energies are not in the asymptotic range: {e:?}"
        )));
    }
    // (h0^p - h1^p) / (h1^p - h2^p) is increasing in p.
    let g = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p)) - ratio;
    let (mut lo, mut hi) = (1e-3, 20.0);
    if g(lo) > 0.0 || g(hi) < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no convergence order in [{lo}, {hi}] fits the energies {e:?}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d2 / (h[1].powf(p) - h[2].powf(p));
    Ok(Richardson {
        limit: e[2] - c * h[2].powf(p),
        constant: c,
        order: p,
    })
}

/// Writes records as CSV with a header row.
pub fn write_records_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(["label", "abscissa", "error", "level", "cfl"])
        .map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rd.deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Per-element fields as VTK CELL_DATA.
pub fn export_vtk(path: &Path, mesh: &SurfaceMesh, fields: &[(&str, &[f64])]) -> Result<()> {
    mesh::write_vtk(path, mesh, fields)
}

/// IEC 61672 A-weighting in dB.
pub fn a_weighting_db(f: f64) -> f64 {
    if f <= 0.0 {
        return DB_FLOOR;
    }
    let f2 = f * f;
    let ra = 12194.0f64.powi(2) * f2 * f2
        / ((f2 + 20.6f64.powi(2))
            * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
            * (f2 + 12194.0f64.powi(2)));
    (20.0 * ra.log10() + 2.0).max(DB_FLOOR)
}

/// Sound pressure level of an RMS pressure, re 20 µPa, floored.
pub fn spl_db(p_rms: f64, floor: f64) -> f64 {
    if p_rms > 0.0 {
        (20.0 * (p_rms / P_REF).log10()).max(floor)
    } else {
        floor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    /// Peak amplitude per one-sided bin.
    pub amplitude: Vec<f64>,
    pub spl: Vec<f64>,
    pub spl_a: Vec<f64>,
}

/// Spacing of uniformly sampled times.
pub fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(f64::MIN_POSITIVE) || !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "non-uniform sampling at sample {}: spacing {} vs {dt}",
                k + 1,
                w[1] - w[0]
            )));
        }
    }
    Ok(dt)
}

/// One-sided FFT magnitude of a real series, SPL re 20 µPa and A-weighted SPL.
pub fn fft_spl_a_weighted(series: &[f64], dt: f64, floor_db: f64) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("spectrum needs at least 2 samples, got {n}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("sample spacing must be positive, got {dt}")));
    }
    if let Some(x) = series.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample {x}")));
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let mut out = Spectrum {
        freqs: Vec::with_capacity(bins),
        amplitude: Vec::with_capacity(bins),
        spl: Vec::with_capacity(bins),
        spl_a: Vec::with_capacity(bins),
    };
    for (k, z) in buf.iter().take(bins).enumerate() {
        let edge = k == 0 || (n % 2 == 0 && k == n / 2);
        let amp = z.norm() / n as f64 * if edge { 1.0 } else { 2.0 };
        let rms = if edge { amp } else { amp / 2f64.sqrt() };
        let f = k as f64 / (n as f64 * dt);
        let l = spl_db(rms, floor_db);
        out.freqs.push(f);
        out.amplitude.push(amp);
        out.spl.push(l);
        out.spl_a.push(if l <= floor_db { floor_db } else { (l + a_weighting_db(f)).max(floor_db) });
    }
    Ok(out)
}

/// Energetic average 10 log10(mean 10^(L/10)) of levels in dB.
pub fn energetic_mean_db(levels: &[f64]) -> f64 {
    if levels.is_empty() {
        return DB_FLOOR;
    }
    let m = levels.iter().map(|l| 10f64.powf(l / 10.0)).sum::<f64>() / levels.len() as f64;
    if m > 0.0 {
        (10.0 * m.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSeries {
    pub times: Vec<f64>,
    pub points: usize,
    pub modes: usize,
    /// `[(mode * points + p) * times + t]`.
    pub values: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PressureSeries {
    pub fn mode_series(&self, mode: usize, point: usize) -> &[f64] {
        let nt = self.times.len();
        let o = (mode * self.points + point) * nt;
        &self.values[o..o + nt]
    }

    pub fn mean_series(&self, point: usize) -> &[f64] {
        let nt = self.times.len();
        &self.mean[point * nt..(point + 1) * nt]
    }

    pub fn std_series(&self, point: usize) -> &[f64] {
        let nt = self.times.len();
        &self.std[point * nt..(point + 1) * nt]
    }
}

/// Field pressure u = S φ at exterior points, per mode, with mean and standard deviation.
pub fn field_pressure(
    sol: &StochasticSolution,
    mesh: &SurfaceMesh,
    points: &[Vec3],
    times: &[f64],
) -> Result<PressureSeries> {
    if !sol.matches_mesh(mesh) {
        return Err(Error::InvalidArgument("solution was computed on a different mesh".into()));
    }
    let c = &sol.coeffs;
    let samples = eval_single_layer_potential(mesh, &sol.grid, c.modes, |i, m, s| c.get(i, m, s), points, times)?;
    let nt = times.len();
    let np = points.len();
    let mut mean = vec![0.0; np * nt];
    let mut var = vec![0.0; np * nt];
    for p in 0..np {
        mean[p * nt..(p + 1) * nt].copy_from_slice(samples.series(0, p));
        for i in 1..c.modes {
            for (v, x) in var[p * nt..(p + 1) * nt].iter_mut().zip(samples.series(i, p)) {
                *v += x * x;
            }
        }
    }
    Ok(PressureSeries {
        times: times.to_vec(),
        points: np,
        modes: c.modes,
        values: samples.values,
        mean,
        std: var.into_iter().map(f64::sqrt).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CsrMatrix, OperatorTag};
    use proptest::prelude::*;

    fn toeplitz(blocks: Vec<Vec<(u32, u32, f64)>>, n: usize) -> ToeplitzBlockSequence {
        let blocks = blocks
            .into_iter()
            .map(|t| Some(CsrMatrix::from_triplets(n, n, t)))
            .collect();
        ToeplitzBlockSequence::from_blocks(OperatorTag::SingleLayer, 1.0, 1.0, n, blocks)
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let v = toeplitz(vec![vec![(0, 0, 2.0), (1, 1, 3.0)]], 2);
        let phi = ModeTensor::zeros(2, 3, 2);
        let f = ModeTensor::from_vec(2, 3, 2, (0..12).map(|k| k as f64).collect()).unwrap();
        assert_eq!(energy_functional(&phi, &v, &f).unwrap(), 0.0);
        assert!(energy_functional(&phi, &v, &ModeTensor::zeros(1, 3, 2)).is_err());
    }

    #[test]
    fn energy_matches_dense_quadratic_form() {
        let v = toeplitz(
            vec![
                vec![(0, 0, 2.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 3.0)],
                vec![(0, 1, -0.25), (1, 1, 0.125)],
            ],
            2,
        );
        let phi = ModeTensor::from_vec(1, 3, 2, vec![1.0, -2.0, 0.5, 4.0, -1.0, 3.0]).unwrap();
        let f = ModeTensor::from_vec(1, 3, 2, vec![0.3, 0.1, -0.2, 0.7, 0.4, -0.6]).unwrap();
        // Hand expansion of the block lower-triangular form.
        let a = crate::solver::dense_space_time_matrix(&v, 3);
        let x = nalgebra::DVector::from_column_slice(&phi.data);
        let b = nalgebra::DVector::from_column_slice(&f.data);
        let expect = 0.5 * x.dot(&(&a * &x)) - b.dot(&x);
        assert!((energy_functional(&phi, &v, &f).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn l2_norm_examples() {
        let mesh = crate::mesh::gen_icosphere(1).unwrap();
        let area = mesh.total_area();
        let grid = TimeGrid::new(0.25, 4, 1.0).unwrap();
        assert_eq!(l2_space_time_norm(&ModeTensor::zeros(2, 4, mesh.len()), &mesh, &grid).unwrap(), 0.0);
        let mut one = ModeTensor::zeros(1, 4, mesh.len());
        one.data.iter_mut().for_each(|x| *x = 1.0 / area.sqrt());
        assert!((l2_space_time_norm(&one, &mesh, &grid).unwrap() - 1.0).abs() < 1e-14);
        let a = -0.7;
        let two = ModeTensor::from_vec(2, 4, mesh.len(), vec![a; 2 * 4 * mesh.len()]).unwrap();
        let want = 2f64.sqrt() * a.abs() * area.sqrt();
        assert!((l2_space_time_norm(&two, &mesh, &grid).unwrap() - want).abs() < 1e-13);
        assert!(l2_space_time_norm(&two, &mesh, &TimeGrid::new(0.5, 2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn l2_norm_matches_stochastic_quadrature() {
        // Parseval: Σ_κ c_κ² = ∫ (Σ_κ c_κ Ψ_κ)² dπ.
        let basis = crate::pc_basis::PcBasis::new(2, 3).unwrap();
        let mesh = crate::mesh::gen_icosphere(1).unwrap();
        let grid = TimeGrid::new(0.5, 2, 1.0).unwrap();
        let n = mesh.len();
        let data: Vec<f64> = (0..basis.len() * 2 * n).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let field = ModeTensor::from_vec(basis.len(), 2, n, data).unwrap();
        let modes: Vec<Vec<f64>> = (0..basis.len()).map(|i| field.mode(i).to_vec()).collect();
        let mut acc = 0.0;
        for (xi, w) in basis.tensor_nodes() {
            let u = crate::pc_basis::sample_expansion(&basis, &modes, &xi).unwrap();
            for m in 0..2 {
                for s in 0..n {
                    acc += w * u[m * n + s].powi(2) * mesh.areas()[s] * grid.dt;
                }
            }
        }
        let norm = l2_space_time_norm(&field, &mesh, &grid).unwrap();
        assert!((norm - acc.sqrt()).abs() < 1e-12 * norm);
    }

    fn rec(x: f64, e: f64) -> ConvergenceRecord {
        ConvergenceRecord::new("r", x, e).unwrap()
    }

    #[test]
    fn fit_rate_examples() {
        let recs: Vec<_> = [80.0 * 5.0, 320.0 * 10.0, 1280.0 * 20.0, 5120.0 * 40.0]
            .iter()
            .map(|&d: &f64| rec(d, 3.0 * d.powf(-0.5)))
            .collect();
        let fit = fit_rate(&recs).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(fit_rate(&recs[..1]).is_err());
        assert!(fit_rate(&[rec(2.0, 1.0), rec(2.0, 0.5)]).is_err());
        assert!(fit_rate(&[rec(2.0, 1.0), rec(4.0, 0.0)]).is_err());
        assert!(ConvergenceRecord::new("bad", 0.0, 1.0).is_err());
        assert!(ConvergenceRecord::new("bad", 1.0, -1.0).is_err());
    }

    #[test]
    fn richardson_recovers_power_law() {
        let (einf, c, p) = (-1.25, 0.8, 1.5);
        let h = [0.6, 0.3, 0.15];
        let e = h.map(|h: f64| einf + c * h.powf(p));
        let r = richardson_extrapolate(h, e).unwrap();
        assert!((r.order - p).abs() < 1e-10);
        assert!((r.limit - einf).abs() < 1e-12);
        assert!((r.constant - c).abs() < 1e-10);
        // Non-geometric widths.
        let h = [0.55, 0.31, 0.14];
        let e = h.map(|h: f64| einf + c * h.powf(p));
        let r = richardson_extrapolate(h, e).unwrap();
        assert!((r.limit - einf).abs() < 1e-11);
        assert!(richardson_extrapolate(h, [1.0, 2.0, 1.5]).is_err());
        assert!(richardson_extrapolate([0.1, 0.2, 0.3], e).is_err());
    }

    #[test]
    fn records_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "label,abscissa,error,level,cfl\n");
        assert!(read_records_csv(&path).unwrap().is_empty());
        let recs = vec![
            rec(1.0, 0.1617).with_level(4),
            ConvergenceRecord::new("degree, J=2", 2.0, 1.0 / 3.0).unwrap().with_cfl(0.605),
            rec(400.0, std::f64::consts::PI * 1e-7).with_level(1).with_cfl(0.1 + 0.2),
        ];
        write_records_csv(&path, &recs).unwrap();
        assert_eq!(read_records_csv(&path).unwrap(), recs);
    }

    #[test]
    fn vtk_has_two_cell_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vtk");
        let mesh = crate::mesh::gen_cube(1).unwrap();
        let a = vec![1.0; mesh.len()];
        export_vtk(&path, &mesh, &[("mean", &a), ("variance", &a)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert_eq!(text.matches("CELL_DATA").count(), 1);
        assert_eq!(text.matches("SCALARS").count(), 2);
        assert!(export_vtk(&path, &mesh, &[("short", &a[1..])]).is_err());
    }

    #[test]
    fn a_weighting_reference_values() {
        assert!(a_weighting_db(1000.0).abs() < 0.01);
        // Tabulated IEC 61672 values.
        for (f, a) in [(100.0, -19.1), (500.0, -3.2), (2000.0, 1.2), (10000.0, -2.5), (10f64.powf(1.5), -39.4)] {
            assert!((a_weighting_db(f) - a).abs() < 0.1, "{f}: {}", a_weighting_db(f));
        }
    }

    #[test]
    fn spectrum_of_sinusoid_has_one_peak() {
        let n = 256;
        let dt = 1.0 / 8000.0;
        let k = 32;
        let f0 = k as f64 / (n as f64 * dt);
        let amp = 2.0;
        let x: Vec<f64> = (0..n).map(|i| amp * (2.0 * std::f64::consts::PI * f0 * i as f64 * dt).sin()).collect();
        let s = fft_spl_a_weighted(&x, dt, DB_FLOOR).unwrap();
        assert_eq!(s.freqs.len(), n / 2 + 1);
        assert!((s.freqs[k] - f0).abs() < 1e-9);
        assert!((s.amplitude[k] - amp).abs() < 1e-12);
        for (j, a) in s.amplitude.iter().enumerate() {
            if j != k {
                assert!(*a < 1e-12, "bin {j}: {a}");
            }
        }
        let want = 20.0 * (amp / 2f64.sqrt() / P_REF).log10();
        assert!((s.spl[k] - want).abs() < 1e-9);
        assert!((s.spl_a[k] - want - a_weighting_db(f0)).abs() < 1e-9);
    }

    #[test]
    fn spectrum_guards() {
        let s = fft_spl_a_weighted(&[0.0; 16], 0.1, DB_FLOOR).unwrap();
        assert!(s.spl.iter().chain(&s.spl_a).all(|&l| l == DB_FLOOR));
        assert!(fft_spl_a_weighted(&[1.0], 0.1, DB_FLOOR).is_err());
        assert!(fft_spl_a_weighted(&[1.0, 2.0], 0.0, DB_FLOOR).is_err());
        assert!(uniform_spacing(&[0.0, 0.1, 0.2, 0.35]).is_err());
        assert!((uniform_spacing(&[0.0, 0.1, 0.2, 0.3]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(energetic_mean_db(&[60.0, 60.0]), 60.0);
        assert!((energetic_mean_db(&[60.0, DB_FLOOR]) - (60.0 - 10.0 * 2f64.log10())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn fit_rate_exact_on_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0, x0 in 0.5f64..10.0) {
            let recs: Vec<_> = (0..5).map(|k| {
                let x = x0 * 1.7f64.powi(k);
                rec(x, c * x.powf(p))
            }).collect();
            let fit = fit_rate(&recs).unwrap();
            prop_assert!((fit.slope - p).abs() < 1e-10);
        }

        #[test]
        fn energy_is_galerkin_at_solution(seed in 0u64..1000) {
            // For φ solving the space-time system exactly, E = -½ Fᵀφ.
            let v = toeplitz(
                vec![
                    vec![(0, 0, 2.0 + (seed % 7) as f64), (0, 1, 0.3), (1, 0, 0.3), (1, 1, 1.5)],
                    vec![(0, 0, -0.2), (1, 0, 0.1 * (seed % 3) as f64)],
                ],
                2,
            );
            let f = ModeTensor::from_vec(2, 4, 2, (0..16).map(|k| ((k as u64 * 31 + seed) % 17) as f64 - 8.0).collect()).unwrap();
            let phi = crate::solver::mot_dirichlet(&v, &f).unwrap();
            let e = energy_functional(&phi, &v, &f).unwrap();
            let g = galerkin_energy(&phi, &f).unwrap();
            prop_assert!((e - g).abs() <= 1e-10 * e.abs().max(1e-300));
        }
    }
}
