//! Lattice construction: the four-site loss cell, its Bloch matrix, and finite
//! open chains built from one or more domains.
//!
//! Site indices are 0-based throughout. On-site constants are stored in units
//! of J with non-positive imaginary parts for absorbing sites.

use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::float;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    I,
    II,
    III,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossPattern {
    pub phase: Phase,
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_cell: Option<[C64; 4]>,
}

impl LossPattern {
    pub fn lossless() -> Self {
        Self {
            phase: Phase::I,
            g0: 0.0,
            g1: 0.0,
            g2: 0.0,
            custom_cell: None,
        }
    }

    /// g0 = g1 = g, g2 = -g.
    pub fn trivial(g: f64) -> Self {
        Self {
            phase: Phase::II,
            g0: g,
            g1: g,
            g2: -g,
            custom_cell: None,
        }
    }

    /// g0 = g1 = g2 = g.
    pub fn topological(g: f64) -> Self {
        Self {
            phase: Phase::III,
            g0: g,
            g1: g,
            g2: g,
            custom_cell: None,
        }
    }

    /// Symmetric convention g0 = g1 = |g2|; the sign of g2 selects the phase.
    pub fn symmetric(g2: f64) -> Self {
        if g2 > 0.0 {
            Self::topological(g2)
        } else if g2 < 0.0 {
            Self::trivial(-g2)
        } else {
            Self::lossless()
        }
    }

    pub fn custom(cell: [C64; 4]) -> Self {
        Self {
            phase: Phase::Custom,
            g0: 0.0,
            g1: 0.0,
            g2: 0.0,
            custom_cell: Some(cell),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gs = [self.g0, self.g1, self.g2];
        if gs.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("loss parameters must be finite".into()));
        }
        if self.g0 < 0.0 {
            return Err(Error::Config(format!("g0 must be >= 0, got {}", self.g0)));
        }
        match self.phase {
            Phase::Custom => match &self.custom_cell {
                None => Err(Error::Config("Custom pattern requires custom_cell".into())),
                Some(c) if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) => {
                    Err(Error::Config("custom_cell entries must be finite".into()))
                }
                Some(_) => Ok(()),
            },
            _ if self.custom_cell.is_some() => Err(Error::Config(
                "custom_cell is only allowed with phase Custom".into(),
            )),
            Phase::I if gs.iter().any(|&g| g != 0.0) => {
                Err(Error::Config("phase I requires g0 = g1 = g2 = 0".into()))
            }
            Phase::II if self.g1 * self.g2 >= 0.0 => {
                Err(Error::Config("phase II requires g1*g2 < 0".into()))
            }
            Phase::III if self.g1 * self.g2 <= 0.0 => {
                Err(Error::Config("phase III requires g1*g2 > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// On-site values of one cell in units of J:
/// (i g1 - i g0, -i g2 - i g0, -i g1 - i g0, i g2 - i g0).
pub fn cell_diagonal(pattern: &LossPattern) -> Result<[C64; 4]> {
    pattern.validate()?;
    if let Some(cell) = pattern.custom_cell {
        return Ok(cell);
    }
    let LossPattern { g0, g1, g2, .. } = *pattern;
    Ok([I * (g1 - g0), I * (-g2 - g0), I * (-g1 - g0), I * (g2 - g0)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    /// Entries in 1/µm.
    PerMicron,
    /// Entries in units of the hopping J.
    Hopping,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub data: CMat,
    pub units: Units,
}

impl Deref for ComplexMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.data
    }
}

impl ComplexMatrix {
    /// Row-major CSV, one "re,im" pair per entry.
    pub fn to_csv(&self) -> String {
        let n = self.data.ncols();
        let mut out = String::new();
        let header: Vec<String> = (0..n)
            .flat_map(|c| [format!("c{c}_re"), format!("c{c}_im")])
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in 0..self.data.nrows() {
            let row: Vec<String> = (0..n)
                .flat_map(|c| {
                    let z = self.data[(r, c)];
                    [float(z.re), float(z.im)]
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Bloch matrix of the four-site cell in units of J. `k` in 1/µm, `d` in µm.
pub fn bloch_hamiltonian(k: f64, pattern: &LossPattern, d: f64) -> Result<ComplexMatrix> {
    let diag = cell_diagonal(pattern)?;
    let one = C64::new(1.0, 0.0);
    let mut h = CMat::zeros(4, 4);
    for (j, v) in diag.iter().enumerate() {
        h[(j, j)] = *v;
    }
    for j in 0..3 {
        h[(j, j + 1)] = one;
        h[(j + 1, j)] = one;
    }
    h[(0, 3)] = C64::from_polar(1.0, -4.0 * k * d);
    h[(3, 0)] = C64::from_polar(1.0, 4.0 * k * d);
    Ok(ComplexMatrix {
        data: h,
        units: Units::Hopping,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    /// First site of the domain; its cell pattern restarts here.
    pub start: usize,
    pub pattern: LossPattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub n_sites: usize,
    /// 1/µm
    pub hopping_j: f64,
    /// µm
    pub spacing_d: f64,
    /// 1/µm
    pub re_beta: f64,
    pub domains: Vec<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_site: Option<usize>,
}

impl LatticeSpec {
    pub fn uniform(
        pattern: LossPattern,
        n_sites: usize,
        hopping_j: f64,
        spacing_d: f64,
        re_beta: f64,
    ) -> Result<Self> {
        let spec = Self {
            n_sites,
            hopping_j,
            spacing_d,
            re_beta,
            domains: vec![Domain { start: 0, pattern }],
            interface_site: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 4 {
            return Err(Error::Config(format!(
                "n_sites must be >= 4, got {}",
                self.n_sites
            )));
        }
        if !(self.hopping_j > 0.0 && self.hopping_j.is_finite()) {
            return Err(Error::Config(format!(
                "hopping_j must be positive, got {}",
                self.hopping_j
            )));
        }
        if !(self.spacing_d > 0.0 && self.spacing_d.is_finite()) {
            return Err(Error::Config(format!(
                "spacing_d must be positive, got {}",
                self.spacing_d
            )));
        }
        if !self.re_beta.is_finite() {
            return Err(Error::Config("re_beta must be finite".into()));
        }
        match self.domains.first() {
            None => return Err(Error::Config("at least one domain is required".into())),
            Some(d) if d.start != 0 => {
                return Err(Error::Config(
                    "the first domain must start at site 0".into(),
                ))
            }
            _ => {}
        }
        for w in self.domains.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::Config(
                    "domain starts must be strictly increasing".into(),
                ));
            }
        }
        if self.domains.last().is_some_and(|d| d.start >= self.n_sites) {
            return Err(Error::Config("domain starts beyond the last site".into()));
        }
        if let Some(s) = self.interface_site {
            if s >= self.n_sites {
                return Err(Error::Config(format!("interface site {s} outside lattice")));
            }
        }
        for d in &self.domains {
            d.pattern.validate()?;
        }
        Ok(())
    }

    /// Per-site on-site constants in units of J. Domains that do not fill
    /// whole cells are truncated site by site.
    pub fn onsite(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.n_sites);
        for (i, dom) in self.domains.iter().enumerate() {
            let end = self.domains.get(i + 1).map_or(self.n_sites, |d| d.start);
            let cell = cell_diagonal(&dom.pattern).expect("validated pattern");
            out.extend((dom.start..end).map(|j| cell[(j - dom.start) % 4]));
        }
        out
    }

    /// Transverse position of a site in µm.
    pub fn position(&self, site: usize) -> f64 {
        site as f64 * self.spacing_d
    }

    /// Same geometry and loss pattern at a different hopping rate.
    pub fn with_hopping(&self, hopping_j: f64) -> Self {
        Self {
            hopping_j,
            ..self.clone()
        }
    }
}

/// Open-chain Hamiltonian in 1/µm: off-diagonals J, diagonal
/// re_beta + J * on-site.
pub fn real_space_hamiltonian(spec: &LatticeSpec) -> ComplexMatrix {
    let n = spec.n_sites;
    let j = spec.hopping_j;
    let mut h = CMat::zeros(n, n);
    for (s, v) in spec.onsite().into_iter().enumerate() {
        h[(s, s)] = C64::new(spec.re_beta, 0.0) + v * j;
    }
    for s in 0..n - 1 {
        h[(s, s + 1)] = C64::new(j, 0.0);
        h[(s + 1, s)] = C64::new(j, 0.0);
    }
    ComplexMatrix {
        data: h,
        units: Units::PerMicron,
    }
}

/// Two domains joined at the first site of the right domain, which is
/// recorded as `interface_site`.
pub fn interface_lattice(
    left: &LossPattern,
    right: &LossPattern,
    n_left_cells: usize,
    n_right_cells: usize,
    base: &LatticeSpec,
) -> Result<LatticeSpec> {
    if n_left_cells == 0 || n_right_cells == 0 {
        return Err(Error::Config(
            "interface lattice needs at least one cell per side".into(),
        ));
    }
    let split = 4 * n_left_cells;
    let spec = LatticeSpec {
        n_sites: split + 4 * n_right_cells,
        hopping_j: base.hopping_j,
        spacing_d: base.spacing_d,
        re_beta: base.re_beta,
        domains: vec![
            Domain {
                start: 0,
                pattern: left.clone(),
            },
            Domain {
                start: split,
                pattern: right.clone(),
            },
        ],
        interface_site: Some(split),
    };
    spec.validate()?;
    Ok(spec)
}

/// A single lossless site embedded in a chain whose every other site carries
/// the on-site value `-i*loss` (units of J). The lossless site is recorded as
/// `interface_site`.
pub fn defect_lattice(
    n_sites: usize,
    defect: usize,
    loss: f64,
    base: &LatticeSpec,
) -> Result<LatticeSpec> {
    if defect >= n_sites {
        return Err(Error::Config(format!(
            "defect site {defect} outside a {n_sites}-site chain"
        )));
    }
    let lossy = LossPattern::custom([C64::new(0.0, -loss); 4]);
    let mut domains = Vec::new();
    if defect > 0 {
        domains.push(Domain {
            start: 0,
            pattern: lossy.clone(),
        });
    }
    domains.push(Domain {
        start: defect,
        pattern: LossPattern::lossless(),
    });
    if defect + 1 < n_sites {
        domains.push(Domain {
            start: defect + 1,
            pattern: lossy,
        });
    }
    let spec = LatticeSpec {
        n_sites,
        hopping_j: base.hopping_j,
        spacing_d: base.spacing_d,
        re_beta: base.re_beta,
        domains,
        interface_site: Some(defect),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base() -> LatticeSpec {
        LatticeSpec::uniform(LossPattern::lossless(), 4, 0.045, 1.4, 0.0).unwrap()
    }

    #[test]
    fn phase_diagonals() {
        let z = cell_diagonal(&LossPattern::lossless()).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));

        let iii = cell_diagonal(&LossPattern::topological(1.1)).unwrap();
        let want = [0.0, -2.2, -2.2, 0.0];
        for (v, w) in iii.iter().zip(want) {
            assert_abs_diff_eq!(v.re, 0.0);
            assert_abs_diff_eq!(v.im, w, epsilon = 1e-15);
        }

        let ii = cell_diagonal(&LossPattern::trivial(1.1)).unwrap();
        let want = [0.0, 0.0, -2.2, -2.2];
        for (v, w) in ii.iter().zip(want) {
            assert_abs_diff_eq!(v.im, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn custom_requires_cell() {
        let mut p = LossPattern::lossless();
        p.phase = Phase::Custom;
        assert!(matches!(cell_diagonal(&p), Err(Error::Config(_))));
        let mut q = LossPattern::topological(1.0);
        q.custom_cell = Some([C64::new(0.0, 0.0); 4]);
        assert!(q.validate().is_err());
    }

    #[test]
    fn bloch_at_origin_lossless() {
        let h = bloch_hamiltonian(0.0, &LossPattern::lossless(), 1.0).unwrap();
        let mut want = CMat::zeros(4, 4);
        for (r, c) in [(0, 1), (1, 2), (2, 3), (0, 3)] {
            want[(r, c)] = C64::new(1.0, 0.0);
            want[(c, r)] = C64::new(1.0, 0.0);
        }
        assert!((h.data.clone() - want).norm() < 1e-15);
    }

    #[test]
    fn two_site_chain() {
        let mut spec = base();
        spec.n_sites = 2;
        // below the validated minimum, built directly
        let h = real_space_hamiltonian(&spec);
        assert_eq!(h.nrows(), 2);
        assert_eq!(h[(0, 1)], C64::new(0.045, 0.0));
        assert_eq!(h[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn phase_iii_diagonal_tiles() {
        let spec =
            LatticeSpec::uniform(LossPattern::topological(1.1), 40, 0.045, 1.4, 0.0).unwrap();
        let h = real_space_hamiltonian(&spec);
        for s in 0..40 {
            let want = if matches!(s % 4, 1 | 2) {
                -2.0 * 1.1 * 0.045
            } else {
                0.0
            };
            assert_abs_diff_eq!(h[(s, s)].im, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn truncated_chain() {
        let spec = LatticeSpec::uniform(LossPattern::topological(1.0), 6, 1.0, 1.0, 0.0).unwrap();
        let im: Vec<f64> = spec.onsite().iter().map(|v| v.im).collect();
        assert_eq!(im, vec![0.0, -2.0, -2.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn interface_geometry() {
        let spec = interface_lattice(
            &LossPattern::trivial(1.1),
            &LossPattern::topological(1.1),
            6,
            6,
            &base(),
        )
        .unwrap();
        assert_eq!(spec.n_sites, 48);
        assert_eq!(spec.interface_site, Some(24));
        let im: Vec<f64> = spec.onsite().iter().map(|v| v.im).collect();
        // II cell (0,0,1,1) meets III cell (0,1,1,0): sites 22,23 lossy, 24 low-loss
        assert!(im[22] < 0.0 && im[23] < 0.0 && im[24] == 0.0 && im[25] < 0.0);
        assert!(interface_lattice(
            &LossPattern::lossless(),
            &LossPattern::lossless(),
            0,
            2,
            &base()
        )
        .is_err());
    }

    #[test]
    fn lossless_interface_is_uniform_chain() {
        let b = LatticeSpec::uniform(LossPattern::lossless(), 16, 0.045, 1.4, 6.6).unwrap();
        let joined =
            interface_lattice(&LossPattern::lossless(), &LossPattern::lossless(), 2, 2, &b)
                .unwrap();
        assert_eq!(
            real_space_hamiltonian(&joined).data,
            real_space_hamiltonian(&b).data
        );
    }

    #[test]
    fn interface_g07_values() {
        let g = 0.7;
        let spec = interface_lattice(
            &LossPattern::trivial(g),
            &LossPattern::topological(g),
            6,
            6,
            &base(),
        )
        .unwrap();
        for v in spec.onsite() {
            assert!(v.im == 0.0 || (v.im + 2.0 * g).abs() < 1e-15);
        }
    }

    #[test]
    fn defect_chain() {
        let spec = defect_lattice(40, 20, 2.2, &base()).unwrap();
        let on = spec.onsite();
        assert_eq!(on.len(), 40);
        assert_eq!(on[20], C64::new(0.0, 0.0));
        assert!(on.iter().enumerate().all(|(j, v)| j == 20 || v.im == -2.2));
    }

    #[test]
    fn matrix_csv_shape() {
        let h = bloch_hamiltonian(0.3, &LossPattern::topological(0.5), 1.4).unwrap();
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }
}
