//! Fabrication parameters to model parameters: Im β from the Cr stripe width
//! w, hopping J from the waveguide spacing d, and g2 = Im β / (2J).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// x = w (µm), y = Im β (1/µm)
    ImbetaVsW,
    /// x = d (µm), y = J (1/µm)
    JVsD,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Stated in the source publication.
    Paper,
    /// Reconstructed from indirect evidence; not a measurement.
    Inferred,
    /// Supplied by the user.
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub units: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Anchor {
    fn new(x: f64, y: f64, units: &str, provenance: Provenance, note: &str) -> Self {
        Self {
            x,
            y,
            units: units.into(),
            provenance,
            note: Some(note.into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Exponential,
    LinearThroughOrigin,
    TableInterp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// `a · exp(-x / x0)`
    Exponential { a: f64, x0: f64 },
    /// `slope · x`
    LinearThroughOrigin { slope: f64 },
    /// Piecewise linear through sorted points, extrapolated linearly.
    TableInterp { points: Vec<(f64, f64)> },
}

impl Model {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Model::Exponential { a, x0 } => a * (-x / x0).exp(),
            Model::LinearThroughOrigin { slope } => slope * x,
            Model::TableInterp { points } => {
                let n = points.len();
                let seg = points.windows(2).position(|w| x <= w[1].0).unwrap_or(n - 2);
                let ((x0, y0), (x1, y1)) = (points[seg], points[seg + 1]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationCurve {
    pub kind: CurveKind,
    pub model: Model,
    pub anchors: Vec<Anchor>,
    /// Inclusive x range where predictions are trusted.
    pub valid_range: (f64, f64),
    pub residual_rms: f64,
}

impl CalibrationCurve {
    pub fn predict(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range;
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!(
                "x = {x} outside calibrated range [{lo}, {hi}]"
            )));
        }
        let y = self.model.eval(x);
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!(
                "calibration predicts {y} at x = {x}"
            )));
        }
        Ok(y)
    }

    fn finish(
        kind: CurveKind,
        model: Model,
        anchors: &[Anchor],
        valid_range: Option<(f64, f64)>,
    ) -> Self {
        let residual_rms = (anchors
            .iter()
            .map(|p| (model.eval(p.x) - p.y).powi(2))
            .sum::<f64>()
            / anchors.len() as f64)
            .sqrt();
        let lo = anchors.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi = anchors
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            kind,
            model,
            anchors: anchors.to_vec(),
            valid_range: valid_range.unwrap_or((lo, hi)),
            residual_rms,
        }
    }
}

/// Least-squares fit of `model` to the anchors. The exponential is fitted
/// linearly in ln y.
pub fn fit_curve(
    kind: CurveKind,
    anchors: &[Anchor],
    model: ModelKind,
    valid_range: Option<(f64, f64)>,
) -> Result<CalibrationCurve> {
    if let Some(p) = anchors
        .iter()
        .find(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(Error::Config(format!(
            "non-finite anchor ({}, {})",
            p.x, p.y
        )));
    }
    let mut xs: Vec<f64> = anchors.iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let fitted = match model {
        ModelKind::Exponential => {
            if xs.len() < 2 {
                return Err(Error::Fit(
                    "exponential model needs anchors at >= 2 distinct x".into(),
                ));
            }
            if let Some(p) = anchors.iter().find(|p| !(p.y > 0.0)) {
                return Err(Error::Fit(format!(
                    "exponential model needs y > 0, got {}",
                    p.y
                )));
            }
            let pts: Vec<(f64, f64)> = anchors.iter().map(|p| (p.x, p.y.ln())).collect();
            let (slope, icpt, _) =
                linear_fit(&pts).ok_or_else(|| Error::Fit("degenerate anchors".into()))?;
            if slope == 0.0 {
                return Err(Error::Fit("anchors show no x dependence".into()));
            }
            Model::Exponential {
                a: icpt.exp(),
                x0: -1.0 / slope,
            }
        }
        ModelKind::LinearThroughOrigin => {
            let sxx: f64 = anchors.iter().map(|p| p.x * p.x).sum();
            if sxx == 0.0 {
                return Err(Error::Fit(
                    "linear model needs an anchor with x != 0".into(),
                ));
            }
            Model::LinearThroughOrigin {
                slope: anchors.iter().map(|p| p.x * p.y).sum::<f64>() / sxx,
            }
        }
        ModelKind::TableInterp => {
            if xs.len() != anchors.len() || xs.len() < 2 {
                return Err(Error::Fit(
                    "table needs >= 2 anchors with distinct x".into(),
                ));
            }
            let mut points: Vec<(f64, f64)> = anchors.iter().map(|p| (p.x, p.y)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Model::TableInterp { points }
        }
    };
    Ok(CalibrationCurve::finish(kind, fitted, anchors, valid_range))
}

/// Exponential with a fixed decay constant `x0` through a single anchor.
pub fn exponential_through(
    kind: CurveKind,
    anchor: &Anchor,
    x0: f64,
    valid_range: (f64, f64),
) -> Result<CalibrationCurve> {
    if !(anchor.y > 0.0) || !(x0 != 0.0) || !x0.is_finite() {
        return Err(Error::Fit(format!(
            "cannot place an exponential with x0 = {x0} through y = {}",
            anchor.y
        )));
    }
    let model = Model::Exponential {
        a: anchor.y * (anchor.x / x0).exp(),
        x0,
    };
    Ok(CalibrationCurve::finish(
        kind,
        model,
        std::slice::from_ref(anchor),
        Some(valid_range),
    ))
}

/// `Im β / (2J)`.
pub fn g2_of(im_beta: f64, j: f64) -> Result<f64> {
    if !(j > 0.0) {
        return Err(Error::Domain(format!(
            "hopping J must be positive, got {j}"
        )));
    }
    Ok(im_beta / (2.0 * j))
}

/// The only calibration values printed in the publication.
pub fn paper_anchors(kind: CurveKind) -> Vec<Anchor> {
    match kind {
        CurveKind::JVsD => vec![Anchor::new(
            1.4,
            0.045,
            "um,1/um",
            Provenance::Paper,
            "d = 1.4 um gives J = 0.045(3) 1/um",
        )],
        CurveKind::ImbetaVsW => {
            vec![Anchor::new(
                0.7,
                0.1,
                "um,1/um",
                Provenance::Paper,
                "w = 0.7 um gives Im beta = 0.1 1/um",
            )]
        }
    }
}

/// Anchors from a JSON list of `{x, y, units, provenance, note?}`.
pub fn load_anchors(path: &Path) -> Result<Vec<Anchor>> {
    let text = std::fs::read_to_string(path)?;
    let anchors: Vec<Anchor> = serde_json::from_str(&text)?;
    if anchors.is_empty() {
        return Err(Error::Config(format!("{}: no anchors", path.display())));
    }
    Ok(anchors)
}
