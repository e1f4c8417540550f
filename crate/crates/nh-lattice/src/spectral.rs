//! Dense non-Hermitian eigenproblems with paired left/right vectors, zero-mode
//! detection and exceptional-point sweeps.
//!
//! Eigenvectors come from a complex Schur form `H = Q T Q^H`: right vectors by
//! back substitution on `T`, left vectors as rows of the inverse right basis.
//! This pairs every left vector with its right partner by construction, with
//! no eigenvalue matching step.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::{Cell, Csv};
use crate::lattice::{
    interface_lattice, real_space_hamiltonian, CMat, LatticeSpec, LossPattern, C64,
};
use crate::schur::complex_schur;

pub const DEFAULT_DEFECT_THRESHOLD: f64 = 1e8;
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as unit-norm columns.
    pub right: CMat,
    /// Left eigenvectors as columns: `H^H l_n = conj(E_n) l_n`.
    pub left: CMat,
    pub biorthonormal: bool,
    /// `1 / |<l_n|r_n>|` for unit-norm `l_n`, `r_n`.
    pub condition_numbers: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Normalized intensity profile `|r_n|^2` of the right vector.
    pub fn intensity(&self, n: usize) -> Vec<f64> {
        let col = self.right.column(n);
        let total: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        col.iter().map(|z| z.norm_sqr() / total).collect()
    }

    /// CSV with columns index, re_e, im_e, condition_number.
    pub fn to_csv(&self) -> String {
        let mut csv = Csv::new(&["index", "re_e", "im_e", "condition_number"]);
        for (n, (e, c)) in self
            .eigenvalues
            .iter()
            .zip(&self.condition_numbers)
            .enumerate()
        {
            csv.row(&[Cell::U(n), Cell::F(e.re), Cell::F(e.im), Cell::F(*c)]);
        }
        csv.finish()
    }

    /// One row per site with `|r_n|^2` for every mode.
    pub fn intensities_csv(&self) -> String {
        let n = self.len();
        let mut header = vec!["site".to_string()];
        header.extend((0..n).map(|m| format!("mode{m}")));
        let mut csv = Csv::with_header(header);
        let profiles: Vec<Vec<f64>> = (0..n).map(|m| self.intensity(m)).collect();
        for s in 0..self.right.nrows() {
            let mut row = vec![Cell::U(s)];
            row.extend(profiles.iter().map(|p| Cell::F(p[s])));
            csv.row(&row);
        }
        csv.finish()
    }
}

/// Full eigendecomposition with unit-norm right and left vectors, sorted by
/// (Re E, Im E).
pub fn eig_full(h: &CMat) -> Result<ComplexSpectrum> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::Domain(format!(
            "eig_full needs a square matrix, got {}x{}",
            n,
            h.ncols()
        )));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let (q, t) = complex_schur(h)?;

    let y = triangular_eigenvectors(&t);
    let mut right = &q * &y;
    let mut scale = vec![0.0; n];
    for (k, mut col) in right.column_iter_mut().enumerate() {
        let nrm = col.norm();
        scale[k] = nrm;
        col /= C64::new(nrm, 0.0);
    }

    // rows of V^-1 = diag(scale) Y^-1 Q^H give the left vectors
    let y_inv = y
        .solve_upper_triangular(&CMat::identity(n, n))
        .ok_or_else(|| Error::Domain("singular triangular eigenvector basis".into()))?;
    let w = y_inv * q.adjoint();
    let mut left = CMat::zeros(n, n);
    let mut cond = vec![0.0; n];
    for k in 0..n {
        let mut l = w.row(k).adjoint() * C64::new(scale[k], 0.0);
        let nrm = l.norm();
        l /= C64::new(nrm, 0.0);
        cond[k] = nrm;
        left.set_column(k, &l);
    }

    let eig: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig[a]
            .re
            .total_cmp(&eig[b].re)
            .then(eig[a].im.total_cmp(&eig[b].im))
    });

    Ok(ComplexSpectrum {
        eigenvalues: order.iter().map(|&k| eig[k]).collect(),
        right: CMat::from_fn(n, n, |r, c| right[(r, order[c])]),
        left: CMat::from_fn(n, n, |r, c| left[(r, order[c])]),
        biorthonormal: false,
        condition_numbers: order.iter().map(|&k| cond[k]).collect(),
    })
}

/// Unit upper-triangular `Y` with `T Y = Y diag(T)`. Near-zero denominators
/// are clamped to `eps * ||T||` so that repeated eigenvalues still give a
/// finite, invertible basis.
fn triangular_eigenvectors(t: &CMat) -> CMat {
    let n = t.nrows();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let mut y = CMat::identity(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < smin {
                den = C64::new(smin, 0.0);
            }
            y[(i, k)] = -s / den;
        }
    }
    y
}

/// Rescale left vectors so that `<l_m|r_n> = delta_mn`; right vectors keep
/// unit norm.
pub fn biorthonormalize(spectrum: &ComplexSpectrum, threshold: f64) -> Result<ComplexSpectrum> {
    if let Some((index, &condition)) = spectrum
        .condition_numbers
        .iter()
        .enumerate()
        .find(|(_, c)| !(**c <= threshold))
    {
        return Err(Error::Defective {
            index,
            condition,
            threshold,
        });
    }
    let s = spectrum.left.adjoint() * &spectrum.right;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular left/right overlap matrix".into()))?;
    Ok(ComplexSpectrum {
        left: &spectrum.left * s_inv.adjoint(),
        biorthonormal: true,
        ..spectrum.clone()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroMode {
    pub index: usize,
    /// Eigenvalue minus re_beta, 1/µm.
    pub energy: C64,
    /// 1/e length of |Ψ|² on the dominant sublattice, µm.
    pub localization_length: f64,
    pub r_squared: f64,
    /// Fraction of |Ψ|² on the outermost cell at either end.
    pub edge_weight: f64,
    pub peak_site: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroModeReport {
    /// Units of J.
    pub tol: f64,
    pub modes: Vec<ZeroMode>,
}

impl ZeroModeReport {
    pub fn indices(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.index).collect()
    }
}

/// Modes with `|Re E - re_beta| < tol * J`, sorted by `|Re E|`.
pub fn find_zero_modes(spectrum: &ComplexSpectrum, spec: &LatticeSpec, tol: f64) -> ZeroModeReport {
    let j = spec.hopping_j;
    let mut modes: Vec<ZeroMode> = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, e)| (e.re - spec.re_beta).abs() < tol * j)
        .map(|(index, e)| {
            let p = spectrum.intensity(index);
            let fit = sublattice_decay(&p, spec.spacing_d);
            let n = p.len();
            let cell = 4.min(n / 2);
            let edge_weight = p[..cell].iter().chain(&p[n - cell..]).sum();
            ZeroMode {
                index,
                energy: e - spec.re_beta,
                localization_length: fit.0,
                r_squared: fit.1,
                edge_weight,
                peak_site: fit.2,
            }
        })
        .collect();
    modes.sort_by(|a, b| a.energy.re.abs().total_cmp(&b.energy.re.abs()));
    ZeroModeReport { tol, modes }
}

/// Line fit of ln p against distance from the peak, using only sites in the
/// peak's sublattice (same index mod 4) and above a relative noise floor.
/// Returns (length, R², peak site).
fn sublattice_decay(p: &[f64], d: f64) -> (f64, f64, usize) {
    let (peak, &pmax) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty profile");
    let floor = 1e-24 * pmax;
    let pts: Vec<(f64, f64)> = (0..p.len())
        .filter(|s| s % 4 == peak % 4 && p[*s] > floor)
        .map(|s| (s.abs_diff(peak) as f64 * d, p[s].ln()))
        .collect();
    match linear_fit(&pts) {
        Some((slope, _, r2)) => (-1.0 / slope, r2, peak),
        None => (f64::NAN, f64::NAN, peak),
    }
}

/// Ordinary least squares y = a x + b. Returns (a, b, R²).
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some((a, b, r2))
}

/// II ⊕ III chain whose loss is fixed through Im β while J varies, so that
/// g = Im β / (2J).
#[derive(Clone, Debug, Serialize)]
pub struct EpSetup {
    /// 1/µm
    pub im_beta: f64,
    pub spacing_d: f64,
    pub re_beta: f64,
    pub n_left_cells: usize,
    pub n_right_cells: usize,
}

impl EpSetup {
    pub fn lattice(&self, hopping_j: f64) -> Result<LatticeSpec> {
        if !(hopping_j > 0.0) {
            return Err(Error::Domain(format!(
                "J must be positive, got {hopping_j}"
            )));
        }
        let g = self.im_beta / (2.0 * hopping_j);
        let base = LatticeSpec::uniform(
            LossPattern::lossless(),
            4,
            hopping_j,
            self.spacing_d,
            self.re_beta,
        )?;
        let (left, right) = if g > 0.0 {
            (LossPattern::trivial(g), LossPattern::topological(g))
        } else {
            (LossPattern::lossless(), LossPattern::lossless())
        };
        interface_lattice(&left, &right, self.n_left_cells, self.n_right_cells, &base)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpPoint {
    pub hopping_j: f64,
    /// Interface-born mode, relative to re_beta.
    pub e_a: C64,
    /// Edge-born mode, relative to re_beta.
    pub e_b: C64,
    pub separation: f64,
    pub re_split: f64,
    pub im_split: f64,
    /// Smallest continuation overlap used to reach this point.
    pub overlap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpSweepResult {
    pub points: Vec<EpPoint>,
    /// Grid point with the smallest separation.
    pub j_ep_estimate: f64,
    pub min_separation: f64,
    /// Bisection on the sign of Re (E_a - E_b)² inside the bracketing grid cell.
    pub j_ep_refined: f64,
    /// Largest condition number of the pair at `j_ep_refined`.
    pub coalescence_condition: f64,
}

impl EpSweepResult {
    pub fn to_csv(&self) -> String {
        let mut csv = Csv::new(&[
            "hopping_j",
            "re_e_a",
            "im_e_a",
            "re_e_b",
            "im_e_b",
            "separation",
            "re_split",
            "im_split",
        ]);
        for p in &self.points {
            csv.floats(&[
                p.hopping_j,
                p.e_a.re,
                p.e_a.im,
                p.e_b.re,
                p.e_b.im,
                p.separation,
                p.re_split,
                p.im_split,
            ]);
        }
        csv.finish()
    }
}

const TRACK_MIN_OVERLAP: f64 = 0.5;

/// Follow the interface mode and the far-edge mode of an II ⊕ III chain over
/// `j_values` (sorted ascending) and locate where they coalesce.
pub fn ep_sweep(setup: &EpSetup, j_values: &[f64]) -> Result<EpSweepResult> {
    if j_values.len() < 2 {
        return Err(Error::Config("EP sweep needs at least two J values".into()));
    }
    if j_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "EP sweep J values must be strictly increasing".into(),
        ));
    }
    let spectra: Vec<ComplexSpectrum> = j_values
        .par_iter()
        .map(|&j| eig_full(&real_space_hamiltonian(&setup.lattice(j)?)))
        .collect::<Result<_>>()?;

    let first = &spectra[0];
    let spec0 = setup.lattice(j_values[0])?;
    let iface = spec0.interface_site.expect("interface lattice");
    let last = spec0.n_sites - 1;
    let weight = |n: usize, s: usize| first.right[(s, n)].norm_sqr();
    let a = (0..first.len())
        .max_by(|&x, &y| weight(x, iface).total_cmp(&weight(y, iface)))
        .unwrap();
    let b = (0..first.len())
        .filter(|&n| n != a)
        .max_by(|&x, &y| weight(x, last).total_cmp(&weight(y, last)))
        .unwrap();

    let mut pair = (a, b);
    let mut pairs = Vec::with_capacity(j_values.len());
    let mut points = Vec::with_capacity(j_values.len());
    let mut overlap = 1.0;
    for (i, sp) in spectra.iter().enumerate() {
        if i > 0 {
            let (na, nb, ov) = continue_pair(&spectra[i - 1], pair, sp);
            if ov < TRACK_MIN_OVERLAP {
                return Err(Error::Tracking {
                    j: j_values[i],
                    overlap: ov,
                });
            }
            pair = (na, nb);
            overlap = ov;
        }
        pairs.push(pair);
        let ea = sp.eigenvalues[pair.0] - setup.re_beta;
        let eb = sp.eigenvalues[pair.1] - setup.re_beta;
        points.push(EpPoint {
            hopping_j: j_values[i],
            e_a: ea,
            e_b: eb,
            separation: (ea - eb).norm(),
            re_split: (ea.re - eb.re).abs(),
            im_split: (ea.im - eb.im).abs(),
            overlap,
        });
    }

    let (imin, pmin) = points
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.separation.total_cmp(&y.1.separation))
        .unwrap();
    let j_ep_estimate = pmin.hopping_j;
    let min_separation = pmin.separation;

    // bracket: last point still split in Im, next point split in Re
    let disc = |p: &EpPoint| ((p.e_a - p.e_b) * (p.e_a - p.e_b)).re;
    let bracket =
        (0..points.len() - 1).find(|&i| disc(&points[i]) < 0.0 && disc(&points[i + 1]) >= 0.0);
    let (j_ep_refined, coalescence_condition) = match bracket {
        Some(i) => refine_ep(setup, &spectra[i], pairs[i], j_values[i], j_values[i + 1])?,
        None => {
            let sp = &spectra[imin];
            let pr = pairs[imin];
            (
                j_ep_estimate,
                sp.condition_numbers[pr.0].max(sp.condition_numbers[pr.1]),
            )
        }
    };

    Ok(EpSweepResult {
        points,
        j_ep_estimate,
        min_separation,
        j_ep_refined,
        coalescence_condition,
    })
}

/// Indices in `next` continuing `pair` from `prev`, chosen to maximize the
/// summed overlap with distinct targets. Returns the smaller of the two
/// overlaps.
fn continue_pair(
    prev: &ComplexSpectrum,
    pair: (usize, usize),
    next: &ComplexSpectrum,
) -> (usize, usize, f64) {
    let ov = |m: usize, n: usize| prev.right.column(m).dotc(&next.right.column(n)).norm();
    let best = |m: usize, skip: Option<usize>| {
        (0..next.len())
            .filter(|n| Some(*n) != skip)
            .map(|n| (n, ov(m, n)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
    };
    let (a1, oa1) = best(pair.0, None);
    let (b1, ob1) = best(pair.1, Some(a1));
    let (b2, ob2) = best(pair.1, None);
    let (a2, oa2) = best(pair.0, Some(b2));
    if oa1 + ob1 >= oa2 + ob2 {
        (a1, b1, oa1.min(ob1))
    } else {
        (a2, b2, oa2.min(ob2))
    }
}

fn refine_ep(
    setup: &EpSetup,
    lo_spec: &ComplexSpectrum,
    lo_pair: (usize, usize),
    mut lo: f64,
    mut hi: f64,
) -> Result<(f64, f64)> {
    let mut prev = lo_spec.clone();
    let mut pair = lo_pair;
    let mut cond = prev.condition_numbers[pair.0].max(prev.condition_numbers[pair.1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sp = eig_full(&real_space_hamiltonian(&setup.lattice(mid)?))?;
        let (a, b, _) = continue_pair(&prev, pair, &sp);
        let diff = sp.eigenvalues[a] - sp.eigenvalues[b];
        if (diff * diff).re < 0.0 {
            lo = mid;
            prev = sp.clone();
            pair = (a, b);
        } else {
            hi = mid;
        }
        cond = sp.condition_numbers[a].max(sp.condition_numbers[b]);
    }
    Ok((0.5 * (lo + hi), cond))
}
