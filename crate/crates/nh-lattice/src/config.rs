//! Strict JSON experiment configs and their resolution into lattices and
//! run parameters.
//!
//! Relative `anchors_file` paths are resolved against the config file's
//! directory; `output_dir` is taken as given (relative to the working
//! directory).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{default_fit_ranges, FitMethod, Window, DEFAULT_PAD_FACTOR};
use crate::calibration::{
    exponential_through, fit_curve, g2_of, load_anchors, paper_anchors, CalibrationCurve,
    CurveKind, ModelKind,
};
use crate::error::{Error, Result};
use crate::lattice::{defect_lattice, interface_lattice, LatticeSpec, LossPattern};
use crate::propagation::{ExcitationKind, Method};
use crate::spectral::{DEFAULT_DEFECT_THRESHOLD, DEFAULT_ZERO_TOL};
use crate::symmetry::LossCase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Spectrum,
    Propagate,
    Momentum,
    Winding,
    Symmetry,
    EpSweep,
    InterfaceCompare,
    Fit,
    Calibrate,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Spectrum => "spectrum",
            RunKind::Propagate => "propagate",
            RunKind::Momentum => "momentum",
            RunKind::Winding => "winding",
            RunKind::Symmetry => "symmetry",
            RunKind::EpSweep => "ep-sweep",
            RunKind::InterfaceCompare => "interface-compare",
            RunKind::Fit => "fit",
            RunKind::Calibrate => "calibrate",
        }
    }

    fn uses_lattice(self) -> bool {
        matches!(
            self,
            RunKind::Spectrum
                | RunKind::Propagate
                | RunKind::Momentum
                | RunKind::Winding
                | RunKind::Fit
        )
    }

    fn uses_excitation(self) -> bool {
        matches!(self, RunKind::Propagate | RunKind::Momentum | RunKind::Fit)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub run: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation: Option<ExcitationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn empty_object() -> Value {
    json!({})
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub layout: Layout,
    /// µm
    pub spacing_d: f64,
    /// 1/µm; taken from the `j_vs_d` calibration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hopping_j: Option<f64>,
    /// 1/µm
    #[serde(default = "default_re_beta")]
    pub re_beta: f64,
}

fn default_re_beta() -> f64 {
    6.6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    Uniform {
        n_sites: usize,
        loss: LossConfig,
    },
    Interface {
        n_left_cells: usize,
        n_right_cells: usize,
        left: LossConfig,
        right: LossConfig,
    },
    /// One lossless site in a chain with on-site loss `2·g·J`.
    Defect {
        n_sites: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        defect_site: Option<usize>,
        g: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseName {
    I,
    II,
    III,
}

/// Loss of one domain. Give `g2` alone (symmetric convention, the sign
/// picks phase II or III), or `phase` with at most one of `g`, `im_beta`
/// (1/µm) or `w` (µm, through the `imbeta_vs_w` calibration).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_vs_d: Option<CurveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbeta_vs_w: Option<CurveConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    /// JSON anchor list; the built-in publication anchors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors_file: Option<PathBuf>,
    pub model: ModelKind,
    /// Fixed decay constant for a single-anchor exponential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_range: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

/// Every value is written to all `paths` (dotted, e.g.
/// `lattice.layout.loss.g2`) before the point is resolved.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub paths: Vec<String>,
    pub values: Vec<Value>,
}

// ---- run parameters -------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    /// Zero-mode threshold on |Re E| in units of J.
    pub zero_tol: f64,
    pub defect_threshold: f64,
    pub write_intensities: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            zero_tol: DEFAULT_ZERO_TOL,
            defect_threshold: DEFAULT_DEFECT_THRESHOLD,
            write_intensities: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagateParams {
    pub z_max: f64,
    pub dz: f64,
    pub method: Method,
    /// Keep every n-th z sample in the written grids.
    pub save_every: usize,
    pub save_amplitudes: bool,
}

impl Default for PropagateParams {
    fn default() -> Self {
        Self {
            z_max: 100.0,
            dz: 0.01,
            method: Method::Rk4,
            save_every: 10,
            save_amplitudes: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumParams {
    pub z_max: f64,
    pub dz: f64,
    pub method: Method,
    pub window: Window,
    pub pad_factor: usize,
    /// Stored kz window, 1/µm.
    pub kz_range: (f64, f64),
    /// kz window searched for the ridge and its peaks.
    pub ridge_range: (f64, f64),
    /// Column for peak detection; -π/(2d) when absent.
    pub peak_kx: Option<f64>,
    pub peak_rel: f64,
    pub two_zones: bool,
}

impl Default for MomentumParams {
    fn default() -> Self {
        Self {
            z_max: 100.0,
            dz: 0.01,
            method: Method::Expm,
            window: Window::Hann,
            pad_factor: DEFAULT_PAD_FACTOR,
            kz_range: (6.0, 7.2),
            ridge_range: (6.3, 6.9),
            peak_kx: None,
            peak_rel: 0.05,
            two_zones: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindingParams {
    pub k_grid: usize,
    /// When set, a phase diagram over these g2 in the symmetric convention
    /// replaces the single evaluation of the lattice's loss pattern.
    pub g2_values: Option<Vec<f64>>,
    pub exclusion: f64,
}

impl Default for WindingParams {
    fn default() -> Self {
        Self {
            k_grid: 128,
            g2_values: None,
            exclusion: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetryParams {
    pub case: LossCase,
    pub g: f64,
    pub k_samples: usize,
    /// Scale of the Hermitian noise added to H for the control run.
    pub perturbation: f64,
}

impl Default for SymmetryParams {
    fn default() -> Self {
        Self {
            case: LossCase::Nontrivial,
            g: 1.0,
            k_samples: 32,
            perturbation: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpParams {
    pub im_beta: f64,
    pub spacing_d: f64,
    pub re_beta: f64,
    pub n_left_cells: usize,
    pub n_right_cells: usize,
    pub j_min: f64,
    pub j_max: f64,
    pub n_points: usize,
}

impl Default for EpParams {
    fn default() -> Self {
        Self {
            im_beta: 0.1,
            spacing_d: 1.4,
            re_beta: 6.6,
            n_left_cells: 6,
            n_right_cells: 6,
            j_min: 0.04,
            j_max: 0.12,
            n_points: 81,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfaceCompareParams {
    pub g2_min: f64,
    pub g2_max: f64,
    pub g2_step: f64,
    pub hopping_j: f64,
    pub spacing_d: f64,
    pub n_left_cells: usize,
    pub n_right_cells: usize,
    pub defect_sites: usize,
}

impl Default for InterfaceCompareParams {
    fn default() -> Self {
        Self {
            g2_min: 0.2,
            g2_max: 3.0,
            g2_step: 0.1,
            hopping_j: 0.045,
            spacing_d: 1.4,
            n_left_cells: 6,
            n_right_cells: 6,
            defect_sites: 40,
        }
    }
}

impl InterfaceCompareParams {
    pub fn g2_values(&self) -> Vec<f64> {
        let n = ((self.g2_max - self.g2_min) / self.g2_step).round() as usize;
        (0..=n)
            .map(|i| ((self.g2_min + i as f64 * self.g2_step) * 1e12).round() / 1e12)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Decay,
    Oscillation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    pub fit: FitKind,
    #[serde(default = "fit_z_max")]
    pub z_max: f64,
    #[serde(default = "fit_dz")]
    pub dz: f64,
    #[serde(default = "fit_method_prop")]
    pub method: Method,
    /// Site whose trace is fitted; the excited site when absent.
    #[serde(default)]
    pub site: Option<usize>,
    #[serde(default = "default_fit_ranges")]
    pub fit_ranges: Vec<(f64, f64)>,
    #[serde(default)]
    pub fit_method: FitMethod,
    /// Oscillation fit range; [0, z_max] when absent.
    #[serde(default)]
    pub z_range: Option<(f64, f64)>,
}

fn fit_z_max() -> f64 {
    100.0
}
fn fit_dz() -> f64 {
    0.1
}
fn fit_method_prop() -> Method {
    Method::Expm
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateParams {
    pub predict_d: Vec<f64>,
    pub predict_w: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum RunParams {
    Spectrum(SpectrumParams),
    Propagate(PropagateParams),
    Momentum(MomentumParams),
    Winding(WindingParams),
    Symmetry(SymmetryParams),
    EpSweep(EpParams),
    InterfaceCompare(InterfaceCompareParams),
    Fit(FitParams),
    Calibrate(CalibrateParams),
}

// ---- resolution -----------------------------------------------------------

/// One fully resolved run: typed parameters plus every derived physical
/// quantity, ready to execute without further validation.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub run: RunKind,
    pub lattice: Option<LatticeSpec>,
    pub excitation: Option<ExcitationKind>,
    pub params: RunParams,
    pub curves: Curves,
    pub seed: u64,
    /// Derived parameters for the manifest (sorted keys).
    pub derived: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Default)]
pub struct Curves {
    pub j_vs_d: Option<CalibrationCurve>,
    pub imbeta_vs_w: Option<CalibrationCurve>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn typed<T: DeserializeOwned>(what: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| invalid(format!("{what}: {e}")))
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

fn check_positive_step(p: &str, dz: f64, z_max: f64) -> Result<()> {
    positive(&format!("{p}.dz"), dz)?;
    positive(&format!("{p}.z_max"), z_max)?;
    if dz > z_max {
        return Err(invalid(format!("{p}.dz {dz} exceeds z_max {z_max}")));
    }
    Ok(())
}

fn build_curve(kind: CurveKind, cfg: &CurveConfig, base_dir: &Path) -> Result<CalibrationCurve> {
    let anchors = match &cfg.anchors_file {
        Some(p) => {
            let path = if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            };
            load_anchors(&path)
                .map_err(|e| invalid(format!("calibration anchors {}: {e}", path.display())))?
        }
        None => paper_anchors(kind),
    };
    match cfg.x0 {
        Some(x0) => {
            if cfg.model != ModelKind::Exponential || anchors.len() != 1 {
                return Err(invalid(
                    "x0 needs the exponential model and exactly one anchor",
                ));
            }
            let range = cfg
                .valid_range
                .ok_or_else(|| invalid("a single-anchor curve needs valid_range"))?;
            exponential_through(kind, &anchors[0], x0, range).map_err(|e| invalid(e.to_string()))
        }
        None => fit_curve(kind, &anchors, cfg.model, cfg.valid_range)
            .map_err(|e| invalid(e.to_string())),
    }
}

impl LossConfig {
    fn resolve(
        &self,
        j: f64,
        curves: &Curves,
        derived: &mut BTreeMap<String, Value>,
        key: &str,
    ) -> Result<LossPattern> {
        let given = [
            self.g.is_some(),
            self.g2.is_some(),
            self.im_beta.is_some(),
            self.w.is_some(),
        ];
        if given.iter().filter(|&&b| b).count() > 1 {
            return Err(invalid(format!(
                "{key}: give at most one of g, g2, im_beta, w"
            )));
        }
        if let Some(g2) = self.g2 {
            let expect = if g2 > 0.0 {
                PhaseName::III
            } else if g2 < 0.0 {
                PhaseName::II
            } else {
                PhaseName::I
            };
            if self.phase.is_some_and(|p| p != expect) {
                return Err(invalid(format!(
                    "{key}: phase {:?} contradicts the sign of g2 = {g2}",
                    self.phase.unwrap()
                )));
            }
            derived.insert(format!("{key}.g"), json!(g2.abs()));
            derived.insert(format!("{key}.im_beta"), json!(2.0 * g2.abs() * j));
            return Ok(LossPattern::symmetric(g2));
        }
        let phase = self
            .phase
            .ok_or_else(|| invalid(format!("{key}: phase is required unless g2 is given")))?;
        if phase == PhaseName::I {
            if given.iter().any(|&b| b) && self.g != Some(0.0) {
                return Err(invalid(format!(
                    "{key}: phase I is lossless and takes no loss parameter"
                )));
            }
            derived.insert(format!("{key}.g"), json!(0.0));
            return Ok(LossPattern::lossless());
        }
        let g = if let Some(g) = self.g {
            g
        } else if let Some(ib) = self.im_beta {
            derived.insert(format!("{key}.im_beta"), json!(ib));
            g2_of(ib, j)?
        } else if let Some(w) = self.w {
            let curve = curves
                .imbeta_vs_w
                .as_ref()
                .ok_or_else(|| invalid(format!("{key}: w needs an imbeta_vs_w calibration")))?;
            let ib = curve
                .predict(w)
                .map_err(|e| invalid(format!("{key}: {e}")))?;
            derived.insert(format!("{key}.im_beta"), json!(ib));
            g2_of(ib, j)?
        } else {
            return Err(invalid(format!(
                "{key}: phase {phase:?} needs one of g, im_beta, w"
            )));
        };
        if !(g >= 0.0) || !g.is_finite() {
            return Err(invalid(format!(
                "{key}: loss g must be non-negative, got {g}"
            )));
        }
        derived.insert(format!("{key}.g"), json!(g));
        derived
            .entry(format!("{key}.im_beta"))
            .or_insert(json!(2.0 * g * j));
        // zero loss makes every phase the lossless chain
        Ok(if g == 0.0 {
            LossPattern::lossless()
        } else if phase == PhaseName::II {
            LossPattern::trivial(g)
        } else {
            LossPattern::topological(g)
        })
    }
}

impl LatticeConfig {
    fn resolve(
        &self,
        curves: &Curves,
        derived: &mut BTreeMap<String, Value>,
    ) -> Result<LatticeSpec> {
        positive("lattice.spacing_d", self.spacing_d)?;
        let j = match self.hopping_j {
            Some(j) => {
                derived.insert("lattice.hopping_j_source".into(), json!("config"));
                j
            }
            None => {
                let c = curves
                    .j_vs_d
                    .as_ref()
                    .ok_or_else(|| invalid("lattice: give hopping_j or a j_vs_d calibration"))?;
                derived.insert("lattice.hopping_j_source".into(), json!("calibration"));
                c.predict(self.spacing_d)
                    .map_err(|e| invalid(format!("lattice: {e}")))?
            }
        };
        positive("lattice.hopping_j", j)?;
        derived.insert("lattice.hopping_j".into(), json!(j));
        derived.insert("lattice.spacing_d".into(), json!(self.spacing_d));
        derived.insert("lattice.re_beta".into(), json!(self.re_beta));
        let base =
            LatticeSpec::uniform(LossPattern::lossless(), 4, j, self.spacing_d, self.re_beta)?;
        let spec = match &self.layout {
            Layout::Uniform { n_sites, loss } => {
                let p = loss.resolve(j, curves, derived, "lattice.loss")?;
                LatticeSpec::uniform(p, *n_sites, j, self.spacing_d, self.re_beta)
            }
            Layout::Interface {
                n_left_cells,
                n_right_cells,
                left,
                right,
            } => {
                let l = left.resolve(j, curves, derived, "lattice.left")?;
                let r = right.resolve(j, curves, derived, "lattice.right")?;
                interface_lattice(&l, &r, *n_left_cells, *n_right_cells, &base)
            }
            Layout::Defect {
                n_sites,
                defect_site,
                g,
            } => {
                if !(*g >= 0.0) {
                    return Err(invalid(format!("lattice.g must be non-negative, got {g}")));
                }
                derived.insert("lattice.defect_loss_over_j".into(), json!(2.0 * g));
                defect_lattice(*n_sites, defect_site.unwrap_or(n_sites / 2), 2.0 * g, &base)
            }
        }
        .map_err(|e| invalid(format!("lattice: {e}")))?;
        derived.insert("lattice.n_sites".into(), json!(spec.n_sites));
        if let Some(s) = spec.interface_site {
            derived.insert("lattice.interface_site".into(), json!(s));
        }
        Ok(spec)
    }
}

impl ExperimentConfig {
    /// Parse with line/column positions in error messages.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("{e}")))
    }

    fn curves(&self, base_dir: &Path) -> Result<Curves> {
        let Some(c) = &self.calibration else {
            return Ok(Curves::default());
        };
        Ok(Curves {
            j_vs_d: c
                .j_vs_d
                .as_ref()
                .map(|k| build_curve(CurveKind::JVsD, k, base_dir))
                .transpose()?,
            imbeta_vs_w: c
                .imbeta_vs_w
                .as_ref()
                .map(|k| build_curve(CurveKind::ImbetaVsW, k, base_dir))
                .transpose()?,
        })
    }

    /// Validate everything that can be checked without computing.
    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared> {
        let run = self.run;
        let name = run.name();
        match (run.uses_lattice(), &self.lattice) {
            (true, None) => return Err(invalid(format!("run {name} needs a lattice"))),
            (false, Some(_)) => return Err(invalid(format!("run {name} does not use a lattice"))),
            _ => {}
        }
        match (run.uses_excitation(), &self.excitation) {
            (true, None) => return Err(invalid(format!("run {name} needs an excitation"))),
            (false, Some(_)) => {
                return Err(invalid(format!("run {name} does not use an excitation")))
            }
            _ => {}
        }
        let curves = self.curves(base_dir)?;
        let mut derived = BTreeMap::new();
        let lattice = self
            .lattice
            .as_ref()
            .map(|l| l.resolve(&curves, &mut derived))
            .transpose()?;
        if let (Some(spec), Some(exc)) = (&lattice, &self.excitation) {
            let site = crate::propagation::Excitation::new(*exc)
                .resolve(spec)
                .map_err(|e| invalid(e.to_string()))?;
            derived.insert("excitation.site".into(), json!(site));
        }
        if self.params.is_null() || !self.params.is_object() {
            return Err(invalid("params must be an object"));
        }
        let p = &self.params;
        let params = match run {
            RunKind::Spectrum => RunParams::Spectrum(typed("params", p)?),
            RunKind::Propagate => {
                let q: PropagateParams = typed("params", p)?;
                check_positive_step("params", q.dz, q.z_max)?;
                if q.save_every == 0 {
                    return Err(invalid("params.save_every must be >= 1"));
                }
                RunParams::Propagate(q)
            }
            RunKind::Momentum => {
                let q: MomentumParams = typed("params", p)?;
                check_positive_step("params", q.dz, q.z_max)?;
                if q.pad_factor == 0 {
                    return Err(invalid("params.pad_factor must be >= 1"));
                }
                RunParams::Momentum(q)
            }
            RunKind::Winding => {
                let q: WindingParams = typed("params", p)?;
                if q.k_grid < 16 {
                    return Err(invalid(format!(
                        "params.k_grid must be >= 16, got {}",
                        q.k_grid
                    )));
                }
                if q.g2_values.is_none()
                    && !matches!(
                        self.lattice.as_ref().map(|l| &l.layout),
                        Some(Layout::Uniform { .. })
                    )
                {
                    return Err(invalid(
                        "winding of a single pattern needs a uniform lattice",
                    ));
                }
                RunParams::Winding(q)
            }
            RunKind::Symmetry => {
                let q: SymmetryParams = typed("params", p)?;
                if q.k_samples == 0 || !(q.g >= 0.0) {
                    return Err(invalid("params.k_samples must be >= 1 and params.g >= 0"));
                }
                RunParams::Symmetry(q)
            }
            RunKind::EpSweep => {
                let q: EpParams = typed("params", p)?;
                positive("params.j_min", q.j_min)?;
                if !(q.j_max > q.j_min) || q.n_points < 2 {
                    return Err(invalid("params needs j_max > j_min and n_points >= 2"));
                }
                derived.insert("ep.g_at_j_min".into(), json!(g2_of(q.im_beta, q.j_min)?));
                derived.insert("ep.g_at_j_max".into(), json!(g2_of(q.im_beta, q.j_max)?));
                RunParams::EpSweep(q)
            }
            RunKind::InterfaceCompare => {
                let q: InterfaceCompareParams = typed("params", p)?;
                positive("params.g2_min", q.g2_min)?;
                positive("params.g2_step", q.g2_step)?;
                positive("params.hopping_j", q.hopping_j)?;
                if q.g2_max < q.g2_min {
                    return Err(invalid("params.g2_max < params.g2_min"));
                }
                RunParams::InterfaceCompare(q)
            }
            RunKind::Fit => {
                let q: FitParams = typed("params", p)?;
                check_positive_step("params", q.dz, q.z_max)?;
                let n = lattice.as_ref().map_or(0, |l| l.n_sites);
                if q.site.is_some_and(|s| s >= n) {
                    return Err(invalid(format!("params.site outside a {n}-site lattice")));
                }
                if q.fit == FitKind::Decay && q.fit_ranges.is_empty() {
                    return Err(invalid("params.fit_ranges is empty"));
                }
                RunParams::Fit(q)
            }
            RunKind::Calibrate => {
                let q: CalibrateParams = typed("params", p)?;
                if curves.j_vs_d.is_none() && curves.imbeta_vs_w.is_none() {
                    return Err(invalid("calibrate needs at least one calibration curve"));
                }
                RunParams::Calibrate(q)
            }
        };
        if matches!(params, RunParams::Momentum(_) | RunParams::Propagate(_)) || run == RunKind::Fit
        {
            derived.insert(
                "excitation.kind".into(),
                serde_json::to_value(self.excitation)?,
            );
        }
        if let Some(c) = &curves.j_vs_d {
            derived.insert("calibration.j_vs_d".into(), serde_json::to_value(&c.model)?);
        }
        if let Some(c) = &curves.imbeta_vs_w {
            derived.insert(
                "calibration.imbeta_vs_w".into(),
                serde_json::to_value(&c.model)?,
            );
        }
        Ok(Prepared {
            run,
            lattice,
            excitation: self.excitation,
            params,
            curves,
            seed: self.seed,
            derived,
        })
    }
}

/// The default peak column for momentum spectra.
pub fn default_peak_kx(d: f64) -> f64 {
    -0.5 * PI / d
}

// ---- grids ------------------------------------------------------------------

pub const MAX_AXES: usize = 2;

#[derive(Clone, Debug)]
pub struct GridPoint {
    pub index: usize,
    /// One value per axis.
    pub values: Vec<Value>,
    pub config: ExperimentConfig,
}

fn set_path(root: &mut Value, path: &str, v: &Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("grid path '{path}' is malformed")));
    }
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), v.clone());
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| json!({}))
            }
            Value::Array(arr) => {
                let idx: usize = part.parse().map_err(|_| {
                    invalid(format!("grid path '{path}': '{part}' is not an index"))
                })?;
                let len = arr.len();
                let slot = arr
                    .get_mut(idx)
                    .ok_or_else(|| invalid(format!("grid path '{path}': index {idx} >= {len}")))?;
                if last {
                    *slot = v.clone();
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(invalid(format!(
                    "grid path '{path}' runs through a non-container at '{part}'"
                )))
            }
        };
    }
    Ok(())
}

impl ExperimentConfig {
    /// Expand the grid (row-major over axes, last axis fastest). A config
    /// without grid yields one point.
    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        let Some(grid) = &self.grid else {
            return Ok(vec![GridPoint {
                index: 0,
                values: vec![],
                config: self.clone(),
            }]);
        };
        if grid.axes.is_empty() || grid.axes.len() > MAX_AXES {
            return Err(invalid(format!(
                "grid needs 1 to {MAX_AXES} axes, got {}",
                grid.axes.len()
            )));
        }
        for (i, a) in grid.axes.iter().enumerate() {
            if a.paths.is_empty() {
                return Err(invalid(format!("grid axis {i} has no paths")));
            }
            if a.values.is_empty() {
                return Err(invalid(format!("grid axis {i} has no values")));
            }
            if let Some(p) = a
                .paths
                .iter()
                .find(|p| p.starts_with("grid") || *p == "output_dir" || p.starts_with("run"))
            {
                return Err(invalid(format!("grid path '{p}' cannot be varied")));
            }
        }
        let mut base = serde_json::to_value(self)?;
        base.as_object_mut()
            .expect("config serializes to an object")
            .remove("grid");
        let sizes: Vec<usize> = grid.axes.iter().map(|a| a.values.len()).collect();
        let total: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(total);
        for index in 0..total {
            let mut rem = index;
            let mut picks = vec![0; sizes.len()];
            for ax in (0..sizes.len()).rev() {
                picks[ax] = rem % sizes[ax];
                rem /= sizes[ax];
            }
            let mut v = base.clone();
            let mut values = Vec::new();
            for (ax, &pick) in picks.iter().enumerate() {
                let val = &grid.axes[ax].values[pick];
                for path in &grid.axes[ax].paths {
                    set_path(&mut v, path, val)?;
                }
                values.push(val.clone());
            }
            let config: ExperimentConfig = serde_json::from_value(v)
                .map_err(|e| invalid(format!("grid point {index}: {e}")))?;
            points.push(GridPoint {
                index,
                values,
                config,
            });
        }
        Ok(points)
    }

    /// Column label of each axis: its first path.
    pub fn axis_labels(&self) -> Vec<String> {
        self.grid.as_ref().map_or(vec![], |g| {
            g.axes.iter().map(|a| a.paths[0].clone()).collect()
        })
    }
}
