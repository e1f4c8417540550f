//! Winding number from biorthogonal Wilson loops over the reduced zone
//! [0, π/(2d)).
//!
//! The four bands split into two groups across the line Re E = 0. Each group
//! contributes a gauge-invariant determinant loop built from its right and
//! left subspaces. Spectral projectors come from the matrix sign function,
//! so eigenvalue degeneracies inside a group, including exceptional points,
//! are harmless. Per-band phases are reported too when every band is
//! non-degenerate along the loop.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::{Cell, Csv};
use crate::lattice::{bloch_hamiltonian, CMat, LossPattern, C64};
use crate::spectral::{biorthonormalize, eig_full, ComplexSpectrum, DEFAULT_DEFECT_THRESHOLD};

/// Bands closer than this to Re E = 0 (units of J) count as gapless.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct WindingResult {
    pub w: f64,
    pub quantization_residual: f64,
    /// Loop phases of the Re E < 0 and Re E > 0 groups, in [-π/2, 3π/2).
    pub group_phases: [f64; 2],
    /// Per-band loop phases, when bands can be followed individually.
    pub per_band_phase: Option<Vec<f64>>,
    pub k_grid_size: usize,
    /// Smallest |Re E| on the grid, units of J.
    pub min_gap: f64,
}

fn branch(phi: f64) -> f64 {
    // [-π/2, 3π/2)
    (phi + PI / 2.0).rem_euclid(2.0 * PI) - PI / 2.0
}

/// W over one reduced zone sampled at `k_grid_size` points.
pub fn winding_number(pattern: &LossPattern, d: f64, k_grid_size: usize) -> Result<WindingResult> {
    if k_grid_size < 16 {
        return Err(Error::Config(format!(
            "k_grid_size must be >= 16, got {k_grid_size}"
        )));
    }
    let span = PI / (2.0 * d);
    let ks: Vec<f64> = (0..k_grid_size)
        .map(|m| m as f64 * span / k_grid_size as f64)
        .collect();
    let hs: Vec<CMat> = ks
        .iter()
        .map(|&k| bloch_hamiltonian(k, pattern, d).map(|h| h.data))
        .collect::<Result<_>>()?;

    let spectra: Vec<ComplexSpectrum> = hs.par_iter().map(eig_full).collect::<Result<_>>()?;
    let (mut min_gap, mut k_min) = (f64::INFINITY, 0.0);
    for (sp, &k) in spectra.iter().zip(&ks) {
        let g = sp
            .eigenvalues
            .iter()
            .map(|e| e.re.abs())
            .fold(f64::INFINITY, f64::min);
        if g < min_gap {
            min_gap = g;
            k_min = k;
        }
    }
    if min_gap < GAP_TOL {
        return Err(Error::Gapless { k: k_min, min_gap });
    }

    let bases: Vec<[(CMat, CMat); 2]> = hs.par_iter().map(group_bases).collect::<Result<_>>()?;
    let group_phases = [
        branch(loop_phase(
            &bases.iter().map(|b| b[0].clone()).collect::<Vec<_>>(),
        )),
        branch(loop_phase(
            &bases.iter().map(|b| b[1].clone()).collect::<Vec<_>>(),
        )),
    ];
    let w = (group_phases[0] + group_phases[1]) / (2.0 * PI);
    Ok(WindingResult {
        w,
        quantization_residual: (w - w.round()).abs(),
        group_phases,
        per_band_phase: per_band_phases(&spectra),
        k_grid_size,
        min_gap,
    })
}

/// Principal Wilson-loop phases of both groups for a loop of `n_points`
/// samples across `span` (1/µm) starting at k = 0.
pub fn group_wilson_phases(
    pattern: &LossPattern,
    d: f64,
    n_points: usize,
    span: f64,
) -> Result<[f64; 2]> {
    let bases: Vec<[(CMat, CMat); 2]> = (0..n_points)
        .map(|m| {
            group_bases(&bloch_hamiltonian(m as f64 * span / n_points as f64, pattern, d)?.data)
        })
        .collect::<Result<_>>()?;
    Ok([0, 1].map(|g| loop_phase(&bases.iter().map(|b| b[g].clone()).collect::<Vec<_>>())))
}

/// `-arg Π_m det(L_m^H R_{m+1}) / det(L_m^H R_m)` around a closed loop of
/// (right, left) subspace bases.
pub fn loop_phase(bases: &[(CMat, CMat)]) -> f64 {
    let n = bases.len();
    let mut prod = C64::new(1.0, 0.0);
    for m in 0..n {
        let (r0, l0) = &bases[m];
        let (r1, _) = &bases[(m + 1) % n];
        let link = (l0.adjoint() * r1).determinant() / (l0.adjoint() * r0).determinant();
        prod *= link / link.norm();
    }
    -prod.arg()
}

/// Right and left bases of the spectral subspaces with Re E < 0 and Re E > 0.
pub fn group_bases(h: &CMat) -> Result<[(CMat, CMat); 2]> {
    let n = h.nrows();
    let s = matrix_sign(h)?;
    let id = CMat::identity(n, n);
    let half = C64::new(0.5, 0.0);
    let p_neg = (&id - &s) * half;
    let p_pos = (&id + &s) * half;
    Ok([subspace_pair(&p_neg), subspace_pair(&p_pos)])
}

fn subspace_pair(p: &CMat) -> (CMat, CMat) {
    let rank = p.trace().re.round().max(0.0) as usize;
    let svd = p.clone().svd(true, true);
    // singular values come sorted in descending order
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let r = u.columns(0, rank).into_owned();
    let l = v_t.rows(0, rank).adjoint();
    (r, l)
}

/// Newton iteration S <- (μS + (μS)^-1)/2 with determinant scaling.
pub fn matrix_sign(h: &CMat) -> Result<CMat> {
    let n = h.nrows();
    let mut s = h.clone();
    let mut residual = f64::INFINITY;
    for it in 0..100 {
        let inv = s.clone().try_inverse().ok_or(Error::SignIteration {
            iterations: it,
            residual,
        })?;
        let mu = if residual > 1e-2 {
            C64::new(s.determinant().norm().powf(-1.0 / n as f64), 0.0)
        } else {
            C64::new(1.0, 0.0)
        };
        let next = (&s * mu + inv / mu) * C64::new(0.5, 0.0);
        residual = (&next - &s).norm() / next.norm();
        s = next;
        if residual < 1e-14 {
            return Ok(s);
        }
    }
    Err(Error::SignIteration {
        iterations: 100,
        residual,
    })
}

/// Follow each band by right-vector overlap; `None` if bands cannot be told
/// apart somewhere on the grid or the loop permutes them.
fn per_band_phases(spectra: &[ComplexSpectrum]) -> Option<Vec<f64>> {
    let bi: Vec<ComplexSpectrum> = spectra
        .iter()
        .map(|s| biorthonormalize(s, DEFAULT_DEFECT_THRESHOLD).ok())
        .collect::<Option<_>>()?;
    let nb = bi[0].len();
    let mut perm: Vec<usize> = (0..nb).collect();
    let mut prods = vec![C64::new(1.0, 0.0); nb];
    for m in 0..bi.len() {
        let (a, b) = (&bi[m], &bi[(m + 1) % bi.len()]);
        let mut next = Vec::with_capacity(nb);
        for (j, &pj) in perm.iter().enumerate() {
            let (best, ov) = (0..nb)
                .map(|n| (n, a.right.column(pj).dotc(&b.right.column(n)).norm()))
                .max_by(|x, y| x.1.total_cmp(&y.1))?;
            if ov < 0.5 || next.contains(&best) {
                return None;
            }
            prods[j] *= a.left.column(pj).dotc(&b.right.column(best));
            next.push(best);
        }
        perm = next;
    }
    if perm.iter().enumerate().any(|(j, &p)| j != p) {
        return None;
    }
    Some(prods.iter().map(|z| branch(-z.arg())).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseDiagramRow {
    pub g2: f64,
    pub w: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// W(g2) in the symmetric convention g0 = g1 = |g2|, skipping |g2| < exclusion.
pub fn winding_phase_diagram(
    g2_values: &[f64],
    d: f64,
    k_grid_size: usize,
    exclusion: f64,
) -> Vec<PhaseDiagramRow> {
    g2_values
        .par_iter()
        .filter(|g| g.abs() >= exclusion)
        .map(
            |&g2| match winding_number(&LossPattern::symmetric(g2), d, k_grid_size) {
                Ok(r) => PhaseDiagramRow {
                    g2,
                    w: Some(r.w),
                    residual: Some(r.quantization_residual),
                    error: None,
                },
                Err(e) => PhaseDiagramRow {
                    g2,
                    w: None,
                    residual: None,
                    error: Some(e.class().to_string()),
                },
            },
        )
        .collect()
}

pub fn phase_diagram_csv(rows: &[PhaseDiagramRow]) -> String {
    let mut csv = Csv::new(&["g2", "w", "residual", "error"]);
    let opt = |x: Option<f64>| x.map_or(Cell::S(String::new()), Cell::F);
    for r in rows {
        csv.row(&[
            Cell::F(r.g2),
            opt(r.w),
            opt(r.residual),
            Cell::S(r.error.clone().unwrap_or_default()),
        ]);
    }
    csv.finish()
}
