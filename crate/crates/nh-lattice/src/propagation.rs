//! Coupled-mode propagation `da/dz = i M a` along the waveguides.
//!
//! `M` is the complex conjugate of the real-space Hamiltonian, so absorbing
//! sites carry `Im β_j > 0` and intensity decays as `e^{-2 Im β z}`. The
//! common `Re β` is split off analytically (`a = b e^{i Re β z}`) and only
//! the slowly varying envelope `b` is integrated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{Cell, Csv};
use crate::lattice::{real_space_hamiltonian, CMat, LatticeSpec, C64};
use crate::spectral::{biorthonormalize, eig_full, DEFAULT_DEFECT_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcitationKind {
    /// Site 0.
    Edge,
    /// First site of the central unit cell.
    BulkCellStart,
    /// The lattice's recorded interface site.
    Interface,
    Site {
        index: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub kind: ExcitationKind,
    pub amplitude: C64,
}

impl Excitation {
    pub fn new(kind: ExcitationKind) -> Self {
        Self {
            kind,
            amplitude: C64::new(1.0, 0.0),
        }
    }

    pub fn resolve(&self, spec: &LatticeSpec) -> Result<usize> {
        let n = spec.n_sites;
        let site = match self.kind {
            ExcitationKind::Edge => 0,
            ExcitationKind::BulkCellStart => {
                let cells = n / 4;
                let cell = cells / 2;
                if cell < 2 || cells < cell + 3 {
                    return Err(Error::Config(format!(
                        "a {n}-site lattice has no bulk cell two cells away from both ends"
                    )));
                }
                4 * cell
            }
            ExcitationKind::Interface => spec.interface_site.ok_or_else(|| {
                Error::Config("interface excitation on a lattice without interface".into())
            })?,
            ExcitationKind::Site { index } => index,
        };
        if site >= n {
            return Err(Error::Config(format!(
                "excitation site {site} outside a {n}-site lattice"
            )));
        }
        Ok(site)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Expm,
}

#[derive(Clone, Debug)]
pub struct FieldEvolution {
    pub z: Vec<f64>,
    pub dz: f64,
    pub n_sites: usize,
    /// Row-major `[z][site]`. Holds `sqrt(I)` with zero phase when
    /// `has_phase` is false.
    amplitudes: Vec<C64>,
    pub has_phase: bool,
    pub spec: LatticeSpec,
    pub source_site: usize,
}

impl FieldEvolution {
    /// Field known only through intensities, e.g. read back from disk.
    pub fn from_intensities(
        spec: LatticeSpec,
        z: Vec<f64>,
        intensities: &[Vec<f64>],
        source_site: usize,
    ) -> Result<Self> {
        let n = spec.n_sites;
        if intensities.len() != z.len() || intensities.iter().any(|r| r.len() != n) {
            return Err(Error::Domain(
                "intensity grid does not match z grid and lattice size".into(),
            ));
        }
        let dz = if z.len() > 1 { z[1] - z[0] } else { 0.0 };
        let amplitudes = intensities
            .iter()
            .flatten()
            .map(|&i| C64::new(i.max(0.0).sqrt(), 0.0))
            .collect();
        Ok(Self {
            z,
            dz,
            n_sites: n,
            amplitudes,
            has_phase: false,
            spec,
            source_site,
        })
    }

    pub fn amplitude(&self, iz: usize, site: usize) -> C64 {
        self.amplitudes[iz * self.n_sites + site]
    }

    pub fn row(&self, iz: usize) -> &[C64] {
        &self.amplitudes[iz * self.n_sites..(iz + 1) * self.n_sites]
    }

    pub fn intensity(&self, iz: usize, site: usize) -> f64 {
        self.amplitude(iz, site).norm_sqr()
    }

    pub fn total_intensity(&self, iz: usize) -> f64 {
        self.row(iz).iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn trace(&self, site: usize) -> Vec<f64> {
        (0..self.z.len())
            .map(|iz| self.intensity(iz, site))
            .collect()
    }

    /// `I_site / Σ I` along z.
    pub fn fraction(&self, site: usize) -> Vec<f64> {
        (0..self.z.len())
            .map(|iz| self.intensity(iz, site) / self.total_intensity(iz))
            .collect()
    }

    /// Intensity grid, one row per `every`-th z sample.
    pub fn intensity_csv(&self, every: usize) -> String {
        let mut header = vec!["z".to_string()];
        header.extend((0..self.n_sites).map(|s| format!("s{s}")));
        let mut csv = Csv::with_header(header);
        for iz in (0..self.z.len()).step_by(every.max(1)) {
            let mut row = vec![self.z[iz]];
            row.extend(self.row(iz).iter().map(|a| a.norm_sqr()));
            csv.floats(&row);
        }
        csv.finish()
    }

    /// Complex amplitudes, "re,im" pair per site.
    pub fn amplitude_csv(&self, every: usize) -> Result<String> {
        if !self.has_phase {
            return Err(Error::PhaseRequired);
        }
        let mut header = vec!["z".to_string()];
        header.extend((0..self.n_sites).flat_map(|s| [format!("s{s}_re"), format!("s{s}_im")]));
        let mut csv = Csv::with_header(header);
        for iz in (0..self.z.len()).step_by(every.max(1)) {
            let mut row = vec![self.z[iz]];
            row.extend(self.row(iz).iter().flat_map(|a| [a.re, a.im]));
            csv.floats(&row);
        }
        Ok(csv.finish())
    }
}

fn envelope_matrix(spec: &LatticeSpec) -> CMat {
    let h = real_space_hamiltonian(spec).data;
    let n = h.nrows();
    h.conjugate() - CMat::identity(n, n) * C64::new(spec.re_beta, 0.0)
}

/// Fixed-step propagation from a single excited site over [0, z_max].
pub fn propagate(
    spec: &LatticeSpec,
    exc: &Excitation,
    z_max: f64,
    dz: f64,
    method: Method,
) -> Result<FieldEvolution> {
    spec.validate()?;
    if !(z_max > 0.0 && dz > 0.0 && dz <= z_max) || !z_max.is_finite() {
        return Err(Error::Config(format!(
            "need 0 < dz <= z_max, got dz={dz}, z_max={z_max}"
        )));
    }
    let site = exc.resolve(spec)?;
    let n = spec.n_sites;
    let m = envelope_matrix(spec);
    let norm1 = (0..n)
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if dz * norm1 > 2.5 {
        return Err(Error::Config(format!(
            "dz = {dz} exceeds the step-size bound 2.5/||M||_1 = {}",
            2.5 / norm1
        )));
    }
    let steps = (z_max / dz).round() as usize;
    let z: Vec<f64> = (0..=steps).map(|i| i as f64 * dz).collect();
    let mut b0 = nalgebra::DVector::<C64>::zeros(n);
    b0[site] = exc.amplitude;

    let envelopes = match method {
        Method::Rk4 => rk4(&m, &b0, steps, dz)?,
        Method::Expm => expm_path(&m, &b0, &z, dz)?,
    };

    let lossy_only = m.diagonal().iter().all(|d| d.im >= 0.0);
    let mut amplitudes = Vec::with_capacity(n * z.len());
    let mut prev_total = f64::INFINITY;
    for (iz, b) in envelopes.iter().enumerate() {
        let total: f64 = b.iter().map(|x| x.norm_sqr()).sum();
        if lossy_only && total > prev_total * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Unstable {
                z: z[iz],
                growth: total / prev_total - 1.0,
            });
        }
        prev_total = total;
        let carrier = C64::from_polar(1.0, spec.re_beta * z[iz]);
        amplitudes.extend(b.iter().map(|x| x * carrier));
    }
    Ok(FieldEvolution {
        z,
        dz,
        n_sites: n,
        amplitudes,
        has_phase: true,
        spec: spec.clone(),
        source_site: site,
    })
}

fn rk4(
    m: &CMat,
    b0: &nalgebra::DVector<C64>,
    steps: usize,
    dz: f64,
) -> Result<Vec<nalgebra::DVector<C64>>> {
    let a = m * C64::new(0.0, 1.0);
    let h = C64::new(dz, 0.0);
    let half = C64::new(0.5 * dz, 0.0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut b = b0.clone();
    out.push(b.clone());
    for _ in 0..steps {
        let k1 = &a * &b;
        let k2 = &a * (&b + &k1 * half);
        let k3 = &a * (&b + &k2 * half);
        let k4 = &a * (&b + &k3 * h);
        b += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dz / 6.0, 0.0);
        out.push(b.clone());
    }
    Ok(out)
}

/// Exact modal evolution `V e^{iΛz} V^-1 b0`, or repeated application of
/// the one-step propagator near exceptional points.
fn expm_path(
    m: &CMat,
    b0: &nalgebra::DVector<C64>,
    z: &[f64],
    dz: f64,
) -> Result<Vec<nalgebra::DVector<C64>>> {
    let sp = eig_full(m)?;
    match biorthonormalize(&sp, DEFAULT_DEFECT_THRESHOLD) {
        Ok(bi) => {
            let coeff = bi.left.adjoint() * b0;
            Ok(z.iter()
                .map(|&zz| {
                    let phases = nalgebra::DVector::from_iterator(
                        coeff.len(),
                        coeff
                            .iter()
                            .zip(&bi.eigenvalues)
                            .map(|(c, e)| c * (C64::new(0.0, 1.0) * e * zz).exp()),
                    );
                    &bi.right * phases
                })
                .collect())
        }
        Err(Error::Defective { .. }) => {
            let step = expm(&(m * C64::new(0.0, dz)));
            let mut b = b0.clone();
            let mut out = Vec::with_capacity(z.len());
            out.push(b.clone());
            for _ in 1..z.len() {
                b = &step * b;
                out.push(b.clone());
            }
            Ok(out)
        }
        Err(e) => Err(e),
    }
}

/// Matrix exponential by scaling and squaring a truncated Taylor series.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|c| a.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * C64::new(0.5f64.powi(s), 0.0);
    let mut term = CMat::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `(z, x_com)` in µm; stops where the total intensity underflows.
pub fn center_of_mass(field: &FieldEvolution) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = (0..field.n_sites).map(|s| field.spec.position(s)).collect();
    let mut out = Vec::with_capacity(field.z.len());
    for iz in 0..field.z.len() {
        let row = field.row(iz);
        let total: f64 = row.iter().map(|a| a.norm_sqr()).sum();
        if total < 1e-300 {
            break;
        }
        let first: f64 = row.iter().zip(&xs).map(|(a, x)| a.norm_sqr() * x).sum();
        out.push((field.z[iz], first / total));
    }
    out
}

pub fn center_of_mass_csv(com: &[(f64, f64)]) -> String {
    let mut csv = Csv::new(&["z", "x_com"]);
    for &(z, x) in com {
        csv.row(&[Cell::F(z), Cell::F(x)]);
    }
    csv.finish()
}

/// Minimum rise and fall of the intensity fraction that counts as a beat.
pub const BEAT_PROMINENCE: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct Beating {
    /// `2π/Δk_z` with Δk_z the gap between the mean Re E of the upper and
    /// lower bands, µm. `None` if one side of Re E = 0 is empty.
    pub predicted: Option<f64>,
    /// First revival of `I_site / Σ I`, µm. `None` means no beating.
    pub simulated: Option<f64>,
}

pub fn beating_period(
    spec: &LatticeSpec,
    exc: &Excitation,
    z_max: f64,
    dz: f64,
) -> Result<Beating> {
    let sp = eig_full(&real_space_hamiltonian(spec).data)?;
    let rel: Vec<f64> = sp.eigenvalues.iter().map(|e| e.re - spec.re_beta).collect();
    let mean = |f: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = rel.iter().copied().filter(|&x| f(x)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let predicted = match (mean(&|x| x > 0.0), mean(&|x| x < 0.0)) {
        (Some(up), Some(down)) => Some(2.0 * PI / (up - down)),
        _ => None,
    };
    let field = propagate(spec, exc, z_max, dz, Method::Expm)?;
    let f = field.fraction(field.source_site);
    let simulated = first_revival(&f, BEAT_PROMINENCE).map(|i| field.z[i]);
    Ok(Beating {
        predicted,
        simulated,
    })
}

/// Index of the first local maximum that follows a dip of at least
/// `prominence` below the start and rises at least `prominence` above it.
pub fn first_revival(f: &[f64], prominence: f64) -> Option<usize> {
    let n = f.len();
    let mut dip: Option<f64> = None;
    for i in 1..n.saturating_sub(1) {
        match dip {
            None => {
                if f[i] <= f[i - 1] && f[i] <= f[i + 1] && f[0] - f[i] >= prominence {
                    dip = Some(f[i]);
                }
            }
            Some(lo) => {
                let lo = lo.min(f[i]);
                dip = Some(lo);
                if f[i] >= f[i - 1] && f[i] >= f[i + 1] && f[i] - lo >= prominence {
                    return Some(i);
                }
            }
        }
    }
    None
}
