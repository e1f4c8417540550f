//! Momentum-resolved spectra, decay and oscillation fits, and the comparison
//! between an interface zero mode and an isolated low-loss defect.

use std::f64::consts::PI;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, OMatrix, OVector, U2, U5};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{Cell, Csv};
use crate::lattice::{
    defect_lattice, interface_lattice, real_space_hamiltonian, LatticeSpec, LossPattern, C64,
};
use crate::propagation::FieldEvolution;
use crate::spectral::{eig_full, linear_fit, ComplexSpectrum};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    #[default]
    Hann,
}

pub const DEFAULT_PAD_FACTOR: usize = 4;

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// `|A(kx, kz)|²` of the zero-padded 2D transform
/// `A = Σ w(z) a_j(z) exp(-i kz z - i kx x_j)`, normalized so that the full
/// grid sums to `Σ |w a|²`. Only rows with kz inside `kz_range` are stored.
#[derive(Clone, Debug, Serialize)]
pub struct MomentumSpectrum {
    /// Ascending, covering [-π/d, π/d).
    pub kx_grid: Vec<f64>,
    /// Ascending, restricted to the stored kz window.
    pub kz_grid: Vec<f64>,
    /// Row-major `[kz][kx]`.
    pub power: Vec<f64>,
    pub window: Window,
    pub pad_factor: usize,
    /// Sum of power over the full (uncropped) grid.
    pub total_power: f64,
    /// `Σ |w(z) a_j(z)|²` of the input.
    pub windowed_norm: f64,
    pub spacing_d: f64,
}

fn shifted_freqs(n: usize, step: f64) -> Vec<f64> {
    let half = (n / 2) as i64;
    (0..n as i64)
        .map(|i| 2.0 * PI * (i - half) as f64 / (n as f64 * step))
        .collect()
}

pub fn momentum_spectrum(
    field: &FieldEvolution,
    window: Window,
    pad_factor: usize,
    kz_range: Option<(f64, f64)>,
) -> Result<MomentumSpectrum> {
    if !field.has_phase {
        return Err(Error::PhaseRequired);
    }
    let (nz, nx) = (field.z.len(), field.n_sites);
    if nx < 8 || nz < 64 {
        return Err(Error::Domain(format!(
            "momentum spectrum needs >= 8 sites and >= 64 z samples, got {nx} x {nz}"
        )));
    }
    if pad_factor == 0 {
        return Err(Error::Config("pad_factor must be >= 1".into()));
    }
    let d = field.spec.spacing_d;
    let (pz, px) = (nz * pad_factor, nx * pad_factor);
    let w = match window {
        Window::None => vec![1.0; nz],
        Window::Hann => hann(nz),
    };
    let mut planner = FftPlanner::<f64>::new();
    let fz = planner.plan_fft_forward(pz);
    let fx = planner.plan_fft_forward(px);

    // transform along z for every occupied site column
    let mut windowed_norm = 0.0;
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(nx);
    for j in 0..nx {
        let mut col = vec![C64::new(0.0, 0.0); pz];
        for iz in 0..nz {
            col[iz] = field.amplitude(iz, j) * w[iz];
            windowed_norm += col[iz].norm_sqr();
        }
        fz.process(&mut col);
        cols.push(col);
    }

    let kz_all = shifted_freqs(pz, field.dz);
    let kx_grid = shifted_freqs(px, d);
    let norm = (pz * px) as f64;
    let (mut kz_grid, mut power, mut total_power) = (Vec::new(), Vec::new(), 0.0);
    let mut row = vec![C64::new(0.0, 0.0); px];
    for (i, &kz) in kz_all.iter().enumerate() {
        let src = (i + pz - pz / 2) % pz;
        row.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        for j in 0..nx {
            row[j] = cols[j][src];
        }
        fx.process(&mut row);
        let keep = kz_range.is_none_or(|(lo, hi)| kz >= lo && kz <= hi);
        for m in 0..px {
            let p = row[(m + px - px / 2) % px].norm_sqr() / norm;
            total_power += p;
            if keep {
                power.push(p);
            }
        }
        if keep {
            kz_grid.push(kz);
        }
    }
    Ok(MomentumSpectrum {
        kx_grid,
        kz_grid,
        power,
        window,
        pad_factor,
        total_power,
        windowed_norm,
        spacing_d: d,
    })
}

/// Maximum along kz in each kx column.
#[derive(Clone, Debug, Serialize)]
pub struct Ridge {
    pub kx: Vec<f64>,
    pub kz: Vec<f64>,
    /// Power summed over kz in each column.
    pub weight: Vec<f64>,
}

impl Ridge {
    /// Column-weight-averaged ridge position.
    pub fn centroid(&self) -> f64 {
        let total: f64 = self.weight.iter().sum();
        self.kz
            .iter()
            .zip(&self.weight)
            .map(|(k, w)| k * w)
            .sum::<f64>()
            / total
    }

    /// max - min of the ridge over columns carrying more than `rel` of the
    /// strongest column weight.
    pub fn spread(&self, rel: f64) -> f64 {
        let wmax = self.weight.iter().cloned().fold(0.0, f64::max);
        let ks: Vec<f64> = self
            .kz
            .iter()
            .zip(&self.weight)
            .filter(|(_, &w)| w > rel * wmax)
            .map(|(&k, _)| k)
            .collect();
        ks.iter().cloned().fold(f64::MIN, f64::max) - ks.iter().cloned().fold(f64::MAX, f64::min)
    }
}

impl MomentumSpectrum {
    pub fn at(&self, ikz: usize, ikx: usize) -> f64 {
        self.power[ikz * self.kx_grid.len() + ikx]
    }

    fn rows_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.kz_grid.len())
            .filter(|&i| self.kz_grid[i] >= lo && self.kz_grid[i] <= hi)
            .collect()
    }

    pub fn ridge(&self, kz_lo: f64, kz_hi: f64) -> Ridge {
        let rows = self.rows_in(kz_lo, kz_hi);
        let nx = self.kx_grid.len();
        let mut ridge = Ridge {
            kx: self.kx_grid.clone(),
            kz: vec![f64::NAN; nx],
            weight: vec![0.0; nx],
        };
        for c in 0..nx {
            let mut best = (f64::NEG_INFINITY, f64::NAN);
            for &r in &rows {
                let p = self.at(r, c);
                ridge.weight[c] += p;
                if p > best.0 {
                    best = (p, self.kz_grid[r]);
                }
            }
            ridge.kz[c] = best.1;
        }
        ridge
    }

    pub fn nearest_column(&self, kx: f64) -> usize {
        (0..self.kx_grid.len())
            .min_by(|&a, &b| {
                (self.kx_grid[a] - kx)
                    .abs()
                    .total_cmp(&(self.kx_grid[b] - kx).abs())
            })
            .unwrap_or(0)
    }

    /// Local maxima of the kz profile in the column nearest `kx` that exceed
    /// `rel` of the profile maximum.
    pub fn column_peaks(&self, kx: f64, kz_lo: f64, kz_hi: f64, rel: f64) -> Vec<f64> {
        let c = self.nearest_column(kx);
        let rows = self.rows_in(kz_lo, kz_hi);
        let prof: Vec<f64> = rows.iter().map(|&r| self.at(r, c)).collect();
        let pmax = prof.iter().cloned().fold(0.0, f64::max);
        (1..prof.len().saturating_sub(1))
            .filter(|&i| prof[i] > prof[i - 1] && prof[i] > prof[i + 1] && prof[i] > rel * pmax)
            .map(|i| self.kz_grid[rows[i]])
            .collect()
    }

    /// Full width at half maximum of the kx-integrated kz profile.
    pub fn kz_fwhm(&self, kz_lo: f64, kz_hi: f64) -> f64 {
        let rows = self.rows_in(kz_lo, kz_hi);
        let prof: Vec<f64> = rows
            .iter()
            .map(|&r| (0..self.kx_grid.len()).map(|c| self.at(r, c)).sum())
            .collect();
        let kz: Vec<f64> = rows.iter().map(|&r| self.kz_grid[r]).collect();
        let (imax, &pmax) = prof
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("empty kz window");
        let half = pmax / 2.0;
        let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> f64 {
            for i in range {
                let j = (i as isize + step) as usize;
                if prof[j] <= half {
                    return kz[i] + (kz[j] - kz[i]) * (prof[i] - half) / (prof[i] - prof[j]);
                }
            }
            f64::NAN
        };
        let right = cross(&mut (imax..prof.len() - 1), 1);
        let left = cross(&mut (1..=imax).rev(), -1);
        right - left
    }

    /// Long-format CSV `kx,kz,power`. With `two_zones` the kx axis is
    /// repeated periodically over [-2π/d, 2π/d).
    pub fn to_csv(&self, two_zones: bool) -> String {
        let g = 2.0 * PI / self.spacing_d;
        let mut kx: Vec<(f64, usize)> = self.kx_grid.iter().cloned().zip(0..).collect();
        if two_zones {
            let below = kx
                .iter()
                .filter(|(k, _)| *k >= 0.0)
                .map(|&(k, c)| (k - g, c));
            let above = kx
                .iter()
                .filter(|(k, _)| *k < 0.0)
                .map(|&(k, c)| (k + g, c));
            kx = below.chain(kx.iter().cloned()).chain(above).collect();
        }
        let mut csv = Csv::new(&["kx", "kz", "power"]);
        for (r, &kz) in self.kz_grid.iter().enumerate() {
            for &(k, c) in &kx {
                csv.floats(&[k, kz, self.at(r, c)]);
            }
        }
        csv.finish()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Nonlinear least squares of `a0 exp(-z/ℓ)` on I itself.
    #[default]
    Direct,
    /// Linear least squares on ln I.
    LogLinear,
}

/// Fit ranges [s, 80] µm for s = 4..=10.
pub fn default_fit_ranges() -> Vec<(f64, f64)> {
    (4..=10).map(|s| (s as f64, 80.0)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RangeFit {
    pub z_lo: f64,
    pub z_hi: f64,
    pub ell: f64,
    pub a0: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub ell: f64,
    pub a0: f64,
    pub ell_error: f64,
    pub fit_ranges: Vec<(f64, f64)>,
    pub r_squared: Vec<f64>,
    pub per_range: Vec<RangeFit>,
    /// Ranges dropped, with the reason.
    pub rejected: Vec<(f64, f64, String)>,
    pub method: FitMethod,
}

struct ExpProblem<'a> {
    z: &'a [f64],
    y: &'a [f64],
    p: OVector<f64, U2>,
}

impl LeastSquaresProblem<f64, Dyn, U2> for ExpProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U2>;
    type ParameterStorage = Owned<f64, U2>;

    fn set_params(&mut self, p: &OVector<f64, U2>) {
        self.p = *p;
    }

    fn params(&self) -> OVector<f64, U2> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (a, l) = (self.p[0], self.p[1]);
        Some(DVector::from_iterator(
            self.z.len(),
            self.z
                .iter()
                .zip(self.y)
                .map(|(&z, &y)| a * (-z / l).exp() - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U2>> {
        let (a, l) = (self.p[0], self.p[1]);
        let mut j = OMatrix::<f64, Dyn, U2>::zeros(self.z.len());
        for (r, &z) in self.z.iter().enumerate() {
            let e = (-z / l).exp();
            j[(r, 0)] = e;
            j[(r, 1)] = a * e * z / (l * l);
        }
        Some(j)
    }
}

fn r_squared(y: &[f64], model: impl Fn(usize) -> f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - model(i)).powi(2))
        .sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

fn fit_range(
    z: &[f64],
    y: &[f64],
    method: FitMethod,
) -> std::result::Result<(f64, f64, f64), String> {
    if z.len() < 10 {
        return Err(format!("{} samples, need >= 10", z.len()));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(format!("non-positive intensity {v}"));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let pts: Vec<(f64, f64)> = z.iter().cloned().zip(logs).collect();
    let (slope, icpt, r2_log) = linear_fit(&pts).ok_or("degenerate log-linear fit")?;
    if !(slope < 0.0) {
        return Err(format!("log-linear slope {slope} is not decaying"));
    }
    let (a0, ell) = (icpt.exp(), -1.0 / slope);
    match method {
        FitMethod::LogLinear => Ok((ell, a0, r2_log)),
        FitMethod::Direct => {
            let problem = ExpProblem {
                z,
                y,
                p: OVector::<f64, U2>::new(a0, ell),
            };
            let (res, report) = LevenbergMarquardt::new()
                .with_patience(200)
                .minimize(problem);
            let (a, l) = (res.p[0], res.p[1]);
            if !report.termination.was_successful() {
                return Err(format!("no convergence: {:?}", report.termination));
            }
            if !(l > 0.0) || !l.is_finite() {
                return Err(format!("fitted decay length {l} is not positive"));
            }
            Ok((l, a, r_squared(y, |i| a * (-z[i] / l).exp())))
        }
    }
}

/// `I(z) ≈ a0 exp(-z/ℓ)` fitted separately on every range; ℓ and a0 are
/// averaged over accepted ranges and `ell_error` is their standard deviation.
pub fn fit_decay(
    z: &[f64],
    intensity: &[f64],
    fit_ranges: &[(f64, f64)],
    method: FitMethod,
) -> Result<DecayFit> {
    if z.len() != intensity.len() {
        return Err(Error::Domain("z and intensity lengths differ".into()));
    }
    if fit_ranges.is_empty() {
        return Err(Error::Config("no fit ranges".into()));
    }
    let mut per_range = Vec::new();
    let mut rejected = Vec::new();
    for &(lo, hi) in fit_ranges {
        let idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] >= lo && z[i] <= hi).collect();
        let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| intensity[i]).collect();
        match fit_range(&zs, &ys, method) {
            Ok((ell, a0, r2)) => per_range.push(RangeFit {
                z_lo: lo,
                z_hi: hi,
                ell,
                a0,
                r_squared: r2,
            }),
            Err(why) => rejected.push((lo, hi, why)),
        }
    }
    if per_range.is_empty() {
        let why: Vec<String> = rejected
            .iter()
            .map(|(lo, hi, w)| format!("[{lo}, {hi}]: {w}"))
            .collect();
        return Err(Error::Fit(format!(
            "all fit ranges rejected ({})",
            why.join("; ")
        )));
    }
    let n = per_range.len() as f64;
    let ell = per_range.iter().map(|r| r.ell).sum::<f64>() / n;
    let a0 = per_range.iter().map(|r| r.a0).sum::<f64>() / n;
    let ell_error = (per_range.iter().map(|r| (r.ell - ell).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit {
        ell,
        a0,
        ell_error,
        fit_ranges: per_range.iter().map(|r| (r.z_lo, r.z_hi)).collect(),
        r_squared: per_range.iter().map(|r| r.r_squared).collect(),
        per_range,
        rejected,
        method,
    })
}

/// `I(z) = a1 cos(kz z + φ) exp(-z/ℓ) + a0`.
#[derive(Clone, Debug, Serialize)]
pub struct OscillationFit {
    pub kz_osc: f64,
    pub phi: f64,
    pub ell: f64,
    pub a0: f64,
    pub a1: f64,
    /// Initial kz from the discrete-Fourier peak of the detrended trace.
    pub kz_initial: f64,
    /// Standard errors of (a1, kz, φ, ℓ, a0) from `σ² (JᵀJ)⁻¹`; `None` if
    /// the normal matrix is singular.
    pub std_errors: Option<[f64; 5]>,
    pub residual_rms: f64,
    pub evaluations: usize,
}

struct OscProblem<'a> {
    z: &'a [f64],
    y: &'a [f64],
    p: OVector<f64, U5>,
}

impl OscProblem<'_> {
    fn model(p: &OVector<f64, U5>, z: f64) -> f64 {
        p[0] * (p[1] * z + p[2]).cos() * (-z / p[3]).exp() + p[4]
    }
}

impl LeastSquaresProblem<f64, Dyn, U5> for OscProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U5>;
    type ParameterStorage = Owned<f64, U5>;

    fn set_params(&mut self, p: &OVector<f64, U5>) {
        self.p = *p;
    }

    fn params(&self) -> OVector<f64, U5> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.z.len(),
            self.z
                .iter()
                .zip(self.y)
                .map(|(&z, &y)| Self::model(&self.p, z) - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U5>> {
        let p = &self.p;
        let mut j = OMatrix::<f64, Dyn, U5>::zeros(self.z.len());
        for (r, &z) in self.z.iter().enumerate() {
            let e = (-z / p[3]).exp();
            let (s, c) = (p[1] * z + p[2]).sin_cos();
            j[(r, 0)] = c * e;
            j[(r, 1)] = -p[0] * s * e * z;
            j[(r, 2)] = -p[0] * s * e;
            j[(r, 3)] = p[0] * c * e * z / (p[3] * p[3]);
            j[(r, 4)] = 1.0;
        }
        Some(j)
    }
}

/// Dominant angular frequency of the mean-subtracted, Hann-windowed trace,
/// zero-padded eightfold. The DC bin is skipped.
pub fn dominant_frequency(z: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let w = hann(n);
    let m = 8 * n;
    let mut buf: Vec<C64> = (0..m)
        .map(|i| C64::new(if i < n { (y[i] - mean) * w[i] } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::<f64>::new()
        .plan_fft_forward(m)
        .process(&mut buf);
    let dz = z[1] - z[0];
    let best = (1..=m / 2)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .unwrap_or(1);
    2.0 * PI * best as f64 / (m as f64 * dz)
}

/// Seed decay lengths tried besides the one from the decay fit.
pub const OSC_ELL_SEEDS: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

/// Five-parameter fit over the samples with z in [z_lo, z_hi]. Several
/// starting decay lengths are tried and the lowest residual wins.
pub fn fit_oscillation(
    z: &[f64],
    intensity: &[f64],
    z_lo: f64,
    z_hi: f64,
) -> Result<OscillationFit> {
    let idx: Vec<usize> = (0..z.len())
        .filter(|&i| z[i] >= z_lo && z[i] <= z_hi)
        .collect();
    let zs: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| intensity[i]).collect();
    if zs.len() < 10 {
        return Err(Error::Fit(format!(
            "{} samples in range, need >= 10",
            zs.len()
        )));
    }
    if let Some(v) = ys.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Fit(format!("non-positive intensity {v}")));
    }
    let kz0 = dominant_frequency(&zs, &ys);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut seeds: Vec<f64> = fit_range(&zs, &ys, FitMethod::Direct)
        .map(|(l, _, _)| vec![l])
        .unwrap_or_default();
    seeds.extend(OSC_ELL_SEEDS);

    let mut best: Option<(f64, OVector<f64, U5>, usize)> = None;
    let mut last = (f64::NAN, OVector::<f64, U5>::zeros());
    for ell0 in seeds {
        let p0 = OVector::<f64, U5>::from([ys[0] / 2.0, kz0, 0.0, ell0, mean]);
        let (res, report) = LevenbergMarquardt::new()
            .with_patience(400)
            .minimize(OscProblem {
                z: &zs,
                y: &ys,
                p: p0,
            });
        let p = res.p;
        last = (2.0 * report.objective_function, p);
        if !report.termination.was_successful() || !(p[3] > 0.0) || p.iter().any(|v| !v.is_finite())
        {
            continue;
        }
        if best
            .as_ref()
            .is_none_or(|b| report.objective_function < b.0)
        {
            best = Some((report.objective_function, p, report.number_of_evaluations));
        }
    }
    let (obj, mut p, evaluations) = best.ok_or_else(|| {
        let q = last.1;
        Error::Fit(format!(
            "oscillation fit did not converge: last sum of squares {:e} at a1={}, kz={}, phi={}, ell={}, a0={}",
            last.0, q[0], q[1], q[2], q[3], q[4]
        ))
    })?;
    // cos(kz z + φ) = cos(-kz z - φ); a1 < 0 is a phase shift by π
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] = -p[2];
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[2] += PI;
    }
    p[2] = (p[2] + PI).rem_euclid(2.0 * PI) - PI;

    let n = zs.len();
    let ssr = 2.0 * obj;
    let jac = OscProblem { z: &zs, y: &ys, p }
        .jacobian()
        .expect("analytic jacobian");
    let std_errors = (jac.transpose() * &jac).try_inverse().map(|cov| {
        let s2 = ssr / (n as f64 - 5.0).max(1.0);
        [0, 1, 2, 3, 4].map(|i| (s2 * cov[(i, i)]).max(0.0).sqrt())
    });
    Ok(OscillationFit {
        kz_osc: p[1],
        phi: p[2],
        ell: p[3],
        a0: p[4],
        a1: p[0],
        kz_initial: kz0,
        std_errors,
        residual_rms: (ssr / n as f64).sqrt(),
        evaluations,
    })
}

/// Im E (units of J) of the interface zero mode and of the isolated-defect
/// mode at one g2.
#[derive(Clone, Debug, Serialize)]
pub struct DefectComparison {
    pub g2: f64,
    pub im_e_interface: f64,
    pub im_e_defect: f64,
    pub weight_interface: f64,
    pub weight_defect: f64,
    /// Another mode came within 1% of the selected weight.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSetup {
    pub hopping_j: f64,
    pub spacing_d: f64,
    pub n_left_cells: usize,
    pub n_right_cells: usize,
    pub defect_sites: usize,
}

impl Default for DefectSetup {
    fn default() -> Self {
        Self {
            hopping_j: 0.045,
            spacing_d: 1.4,
            n_left_cells: 6,
            n_right_cells: 6,
            defect_sites: 40,
        }
    }
}

/// Mode with the largest right-vector weight on `site`, and whether the
/// runner-up is within 1% of it.
fn select_mode(sp: &ComplexSpectrum, site: usize) -> (usize, f64, bool) {
    let mut w: Vec<(usize, f64)> = (0..sp.len()).map(|n| (n, sp.intensity(n)[site])).collect();
    w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let ambiguous = w.len() > 1 && w[1].1 >= 0.99 * w[0].1;
    (w[0].0, w[0].1, ambiguous)
}

/// For each g2 (symmetric convention g0 = g1 = g2): a II⊕III interface
/// lattice against a chain with on-site loss 2·g2·J everywhere except its
/// centre site.
pub fn interface_vs_defect(
    g2_values: &[f64],
    setup: &DefectSetup,
) -> Result<Vec<DefectComparison>> {
    if !(setup.hopping_j > 0.0) {
        return Err(Error::Domain(format!(
            "hopping must be positive, got {}",
            setup.hopping_j
        )));
    }
    g2_values
        .par_iter()
        .map(|&g2| {
            if !(g2 > 0.0) {
                return Err(Error::Domain(format!("g2 must be positive, got {g2}")));
            }
            let base = LatticeSpec::uniform(
                LossPattern::lossless(),
                4,
                setup.hopping_j,
                setup.spacing_d,
                0.0,
            )?;
            let iface = interface_lattice(
                &LossPattern::trivial(g2),
                &LossPattern::topological(g2),
                setup.n_left_cells,
                setup.n_right_cells,
                &base,
            )?;
            let centre = setup.defect_sites / 2;
            let defect = defect_lattice(setup.defect_sites, centre, 2.0 * g2, &base)?;
            let (sa, sb) = (
                eig_full(&real_space_hamiltonian(&iface))?,
                eig_full(&real_space_hamiltonian(&defect))?,
            );
            let (ia, wa, amb_a) =
                select_mode(&sa, iface.interface_site.expect("interface lattice"));
            let (ib, wb, amb_b) = select_mode(&sb, centre);
            let j = setup.hopping_j;
            Ok(DefectComparison {
                g2,
                im_e_interface: sa.eigenvalues[ia].im / j,
                im_e_defect: sb.eigenvalues[ib].im / j,
                weight_interface: wa,
                weight_defect: wb,
                ambiguous: amb_a || amb_b,
            })
        })
        .collect()
}

pub fn defect_comparison_csv(rows: &[DefectComparison]) -> String {
    let mut csv = Csv::new(&[
        "g2",
        "im_e_interface",
        "im_e_defect",
        "weight_interface",
        "weight_defect",
        "ambiguous",
    ]);
    for r in rows {
        csv.row(&[
            Cell::F(r.g2),
            Cell::F(r.im_e_interface),
            Cell::F(r.im_e_defect),
            Cell::F(r.weight_interface),
            Cell::F(r.weight_defect),
            Cell::S(r.ambiguous.to_string()),
        ]);
    }
    csv.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{propagate, Excitation, ExcitationKind, Method};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, dz: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dz).collect()
    }

    #[test]
    fn exact_exponential() {
        let z = grid(1001, 0.1);
        let y: Vec<f64> = z.iter().map(|z| (-z / 5.0f64).exp()).collect();
        for method in [FitMethod::Direct, FitMethod::LogLinear] {
            let f = fit_decay(&z, &y, &default_fit_ranges(), method).unwrap();
            assert_abs_diff_eq!(f.ell, 5.0, epsilon = 1e-9);
            assert!(f.ell_error < 1e-9);
            assert_eq!(f.per_range.len(), 7);
        }
    }

    #[test]
    fn bad_ranges_rejected() {
        let z = grid(101, 1.0);
        let mut y: Vec<f64> = z.iter().map(|z| (-z / 20.0f64).exp()).collect();
        y[50] = 0.0;
        let f = fit_decay(
            &z,
            &y,
            &[(0.0, 40.0), (45.0, 60.0), (90.0, 95.0)],
            FitMethod::Direct,
        )
        .unwrap();
        assert_eq!(f.fit_ranges, vec![(0.0, 40.0)]);
        assert_eq!(f.rejected.len(), 2);
        assert!(matches!(
            fit_decay(&z, &y, &[(45.0, 60.0)], FitMethod::Direct),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn two_site_beat() {
        let j = 0.05;
        let z = grid(1000, 0.1);
        let y: Vec<f64> = z.iter().map(|z| (j * z).cos().powi(2)).collect();
        let o = fit_oscillation(&z, &y, 0.0, 100.0).unwrap();
        assert_abs_diff_eq!(o.kz_osc, 2.0 * j, epsilon = 1e-8);
    }

    #[test]
    fn spectrum_of_lossless_bulk() {
        let spec = LatticeSpec::uniform(LossPattern::lossless(), 16, 0.05, 1.4, 6.6).unwrap();
        let f = propagate(
            &spec,
            &Excitation::new(ExcitationKind::Site { index: 8 }),
            40.0,
            0.05,
            Method::Expm,
        )
        .unwrap();
        let m = momentum_spectrum(&f, Window::Hann, 4, None).unwrap();
        assert!(m.power.iter().all(|&p| p >= 0.0));
        assert_abs_diff_eq!(m.total_power / m.windowed_norm, 1.0, epsilon = 1e-9);
        let cropped = momentum_spectrum(&f, Window::Hann, 4, Some((6.3, 6.9))).unwrap();
        assert!(cropped.kz_grid.iter().all(|&k| (6.3..=6.9).contains(&k)));
        assert_eq!(cropped.total_power, m.total_power);
        let csv = cropped.to_csv(true);
        assert_eq!(
            csv.lines().count(),
            1 + cropped.kz_grid.len() * 2 * cropped.kx_grid.len()
        );
    }

    #[test]
    fn intensities_only_rejected() {
        let spec = LatticeSpec::uniform(LossPattern::lossless(), 8, 0.05, 1.4, 0.0).unwrap();
        let rows = vec![vec![0.125; 8]; 64];
        let f = FieldEvolution::from_intensities(spec, grid(64, 0.1), &rows, 0).unwrap();
        assert!(matches!(
            momentum_spectrum(&f, Window::None, 1, None),
            Err(Error::PhaseRequired)
        ));
    }

    #[test]
    fn strong_loss_curves_meet() {
        let rows = interface_vs_defect(&[3.0], &DefectSetup::default()).unwrap();
        let r = &rows[0];
        assert!((r.im_e_interface - r.im_e_defect).abs() < 0.05 * r.im_e_defect.abs());
    }
}
