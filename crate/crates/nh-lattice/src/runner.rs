//! Execution of prepared runs, sweeps over parameter grids, and the on-disk
//! layout of results.
//!
//! Outputs are written to `<output_dir>.partial` and renamed into place once
//! complete, so a failed run never leaves a half-written result directory.
//! A numerical failure leaves only `diagnostics.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    defect_comparison_csv, fit_decay, fit_oscillation, interface_vs_defect, momentum_spectrum,
    DefectSetup,
};
use crate::calibration::CalibrationCurve;
use crate::config::{default_peak_kx, ExperimentConfig, FitKind, Prepared, RunParams};
use crate::error::{Error, Result};
use crate::fmt::{float, json as to_json, Cell, Csv};
use crate::lattice::real_space_hamiltonian;
use crate::propagation::{center_of_mass, center_of_mass_csv, propagate, Excitation};
use crate::spectral::{biorthonormalize, eig_full, ep_sweep, find_zero_modes, EpSetup};
use crate::symmetry::{check_symmetries, check_symmetries_perturbed};
use crate::topology::{phase_diagram_csv, winding_number, winding_phase_diagram};

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "NHL_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Json(_) | Error::PhaseRequired => {
            EXIT_VALIDATION
        }
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

/// Files (name to contents) and scalar results of one run.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: BTreeMap<String, String>,
    pub summary: BTreeMap<String, Value>,
}

impl RunOutput {
    fn file(&mut self, name: &str, contents: String) {
        self.files.insert(name.to_string(), contents);
    }

    fn put(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(
            key.to_string(),
            serde_json::to_value(v).expect("plain value"),
        );
    }
}

/// Run one prepared point. Pure apart from CPU time.
pub fn execute(p: &Prepared) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    match &p.params {
        RunParams::Spectrum(q) => {
            let spec = p.lattice.as_ref().expect("validated");
            let sp = eig_full(&real_space_hamiltonian(spec))?;
            if q.defect_threshold.is_finite() {
                biorthonormalize(&sp, q.defect_threshold)?;
            }
            let zm = find_zero_modes(&sp, spec, q.zero_tol);
            let j = spec.hopping_j;
            let mut csv = Csv::new(&[
                "index",
                "re_e",
                "im_e",
                "re_e_over_j",
                "im_e_over_j",
                "condition_number",
            ]);
            for (n, e) in sp.eigenvalues.iter().enumerate() {
                let (re, im) = (e.re - spec.re_beta, e.im);
                csv.row(&[
                    Cell::U(n),
                    Cell::F(re),
                    Cell::F(im),
                    Cell::F(re / j),
                    Cell::F(im / j),
                    Cell::F(sp.condition_numbers[n]),
                ]);
            }
            out.file("spectrum.csv", csv.finish());
            if q.write_intensities {
                out.file("intensities.csv", sp.intensities_csv());
            }
            out.file("zero_modes.json", to_json(&zm)?);
            out.put("n_zero_modes", zm.modes.len());
            out.put(
                "max_condition_number",
                sp.condition_numbers.iter().cloned().fold(0.0, f64::max),
            );
            let min_re = sp
                .eigenvalues
                .iter()
                .map(|e| (e.re - spec.re_beta).abs() / j)
                .fold(f64::INFINITY, f64::min);
            out.put("min_abs_re_e_over_j", min_re);
        }
        RunParams::Propagate(q) => {
            let spec = p.lattice.as_ref().expect("validated");
            let exc = Excitation::new(p.excitation.expect("validated"));
            let f = propagate(spec, &exc, q.z_max, q.dz, q.method)?;
            out.file("intensity.csv", f.intensity_csv(q.save_every));
            if q.save_amplitudes {
                out.file("amplitudes.csv", f.amplitude_csv(q.save_every)?);
            }
            let com: Vec<(f64, f64)> = center_of_mass(&f)
                .into_iter()
                .step_by(q.save_every)
                .collect();
            out.file("center_of_mass.csv", center_of_mass_csv(&com));
            let last = f.z.len() - 1;
            out.file(
                "field.json",
                to_json(&json!({
                    "dz": f.dz,
                    "method": q.method,
                    "n_sites": f.n_sites,
                    "n_z_saved": f.z.iter().step_by(q.save_every).count(),
                    "save_every": q.save_every,
                    "source_site": f.source_site,
                    "spacing_d": spec.spacing_d,
                    "z_max": f.z[last],
                    "z_min": f.z[0],
                }))?,
            );
            out.put("final_total_intensity", f.total_intensity(last));
            out.put("final_source_fraction", f.fraction(f.source_site)[last]);
        }
        RunParams::Momentum(q) => {
            let spec = p.lattice.as_ref().expect("validated");
            let exc = Excitation::new(p.excitation.expect("validated"));
            let f = propagate(spec, &exc, q.z_max, q.dz, q.method)?;
            let m = momentum_spectrum(&f, q.window, q.pad_factor, Some(q.kz_range))?;
            let (lo, hi) = q.ridge_range;
            let ridge = m.ridge(lo, hi);
            let peak_kx = q.peak_kx.unwrap_or(default_peak_kx(spec.spacing_d));
            let peaks = m.column_peaks(peak_kx, lo, hi, q.peak_rel);
            out.file("momentum.csv", m.to_csv(q.two_zones));
            let mut rc = Csv::new(&["kx", "kz_ridge", "column_power"]);
            for i in 0..ridge.kx.len() {
                rc.floats(&[ridge.kx[i], ridge.kz[i], ridge.weight[i]]);
            }
            out.file("ridge.csv", rc.finish());
            out.put("ridge_centroid", ridge.centroid());
            out.put("ridge_spread", ridge.spread(0.1));
            out.put("kz_fwhm", m.kz_fwhm(lo, hi));
            out.put("peak_kx", m.kx_grid[m.nearest_column(peak_kx)]);
            out.put("peaks_kz", &peaks);
            out.put("parseval_ratio", m.total_power / m.windowed_norm);
            out.file("momentum.json", to_json(&out.summary)?);
        }
        RunParams::Winding(q) => {
            let spec = p.lattice.as_ref().expect("validated");
            match &q.g2_values {
                Some(g2s) => {
                    let rows = winding_phase_diagram(g2s, spec.spacing_d, q.k_grid, q.exclusion);
                    out.file("winding_diagram.csv", phase_diagram_csv(&rows));
                    out.put("n_points", rows.len());
                    out.put(
                        "n_failed",
                        rows.iter().filter(|r| r.error.is_some()).count(),
                    );
                }
                None => {
                    let r = winding_number(&spec.domains[0].pattern, spec.spacing_d, q.k_grid)?;
                    let r2 =
                        winding_number(&spec.domains[0].pattern, spec.spacing_d, 2 * q.k_grid)?;
                    out.file(
                        "winding.json",
                        to_json(&json!({ "grid": r, "doubled_grid": r2 }))?,
                    );
                    out.put("w", r.w);
                    out.put("quantization_residual", r.quantization_residual);
                    out.put("grid_doubling_change", (r2.w - r.w).abs());
                    out.put("min_gap", r.min_gap);
                }
            }
        }
        RunParams::Symmetry(q) => {
            let ks: Vec<f64> = (0..q.k_samples)
                .map(|i| 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / q.k_samples as f64)
                .collect();
            let clean = check_symmetries(&ks, q.g, q.case);
            let noisy = check_symmetries_perturbed(&ks, q.g, q.case, q.perturbation, p.seed);
            out.file(
                "symmetry.json",
                to_json(&json!({ "case": q.case, "clean": clean, "perturbed": noisy }))?,
            );
            out.put("class_label", &clean.class_label);
            out.put("residual_t", clean.residual_t);
            out.put("residual_c", clean.residual_c);
            out.put("residual_s", clean.residual_s);
            out.put("perturbed_residual_t", noisy.residual_t);
        }
        RunParams::EpSweep(q) => {
            let setup = EpSetup {
                im_beta: q.im_beta,
                spacing_d: q.spacing_d,
                re_beta: q.re_beta,
                n_left_cells: q.n_left_cells,
                n_right_cells: q.n_right_cells,
            };
            let js: Vec<f64> = (0..q.n_points)
                .map(|i| q.j_min + (q.j_max - q.j_min) * i as f64 / (q.n_points - 1) as f64)
                .collect();
            let r = ep_sweep(&setup, &js)?;
            out.file("ep_sweep.csv", r.to_csv());
            out.put("j_ep_estimate", r.j_ep_estimate);
            out.put("j_ep_refined", r.j_ep_refined);
            out.put("min_separation", r.min_separation);
            out.put("coalescence_condition", r.coalescence_condition);
        }
        RunParams::InterfaceCompare(q) => {
            let setup = DefectSetup {
                hopping_j: q.hopping_j,
                spacing_d: q.spacing_d,
                n_left_cells: q.n_left_cells,
                n_right_cells: q.n_right_cells,
                defect_sites: q.defect_sites,
            };
            let rows = interface_vs_defect(&q.g2_values(), &setup)?;
            out.file("interface_vs_defect.csv", defect_comparison_csv(&rows));
            let adv: Vec<f64> = rows
                .iter()
                .filter(|r| r.im_e_interface.abs() < r.im_e_defect.abs())
                .map(|r| r.g2)
                .collect();
            out.put("n_points", rows.len());
            out.put("n_ambiguous", rows.iter().filter(|r| r.ambiguous).count());
            out.put("advantage_g2", &adv);
            if let Some(last) = rows.last() {
                out.put(
                    "rel_diff_at_max_g2",
                    (last.im_e_interface - last.im_e_defect).abs() / last.im_e_defect.abs(),
                );
            }
        }
        RunParams::Fit(q) => {
            let spec = p.lattice.as_ref().expect("validated");
            let exc = Excitation::new(p.excitation.expect("validated"));
            let f = propagate(spec, &exc, q.z_max, q.dz, q.method)?;
            let site = q.site.unwrap_or(f.source_site);
            let trace = f.trace(site);
            let mut tc = Csv::new(&["z", "intensity"]);
            for (z, i) in f.z.iter().zip(&trace) {
                tc.floats(&[*z, *i]);
            }
            out.file("trace.csv", tc.finish());
            out.put("site", site);
            out.put("hopping_j", spec.hopping_j);
            match q.fit {
                FitKind::Decay => {
                    let d = fit_decay(&f.z, &trace, &q.fit_ranges, q.fit_method)?;
                    out.file("fit.json", to_json(&d)?);
                    out.put("ell", d.ell);
                    out.put("ell_error", d.ell_error);
                    out.put("a0", d.a0);
                }
                FitKind::Oscillation => {
                    let (lo, hi) = q.z_range.unwrap_or((0.0, q.z_max));
                    let o = fit_oscillation(&f.z, &trace, lo, hi)?;
                    out.file("fit.json", to_json(&o)?);
                    out.put("kz_osc", o.kz_osc);
                    out.put("ell", o.ell);
                    out.put("a1", o.a1);
                    out.put("a0", o.a0);
                    out.put("two_j", 2.0 * spec.hopping_j);
                }
            }
        }
        RunParams::Calibrate(q) => {
            let curves: BTreeMap<&str, &CalibrationCurve> = [
                ("imbeta_vs_w", p.curves.imbeta_vs_w.as_ref()),
                ("j_vs_d", p.curves.j_vs_d.as_ref()),
            ]
            .into_iter()
            .filter_map(|(k, c)| c.map(|c| (k, c)))
            .collect();
            out.file("calibration.json", to_json(&curves)?);
            let mut csv = Csv::new(&["kind", "x", "y"]);
            for (kind, xs) in [("j_vs_d", &q.predict_d), ("imbeta_vs_w", &q.predict_w)] {
                let Some(c) = curves.get(kind) else {
                    if !xs.is_empty() {
                        return Err(Error::Config(format!(
                            "predictions requested for missing {kind} curve"
                        )));
                    }
                    continue;
                };
                for &x in xs {
                    csv.row(&[Cell::S(kind.into()), Cell::F(x), Cell::F(c.predict(x)?)]);
                }
            }
            out.file("predictions.csv", csv.finish());
            for (k, c) in &curves {
                out.put(&format!("{k}_residual_rms"), c.residual_rms);
            }
        }
    }
    Ok(out)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything needed to write a result directory.
pub struct Job {
    pub config_text: String,
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl Job {
    pub fn load(path: &Path) -> Result<Self> {
        let config_text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = ExperimentConfig::parse(&config_text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("configuration error: ")
            ))
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config_text,
            config,
            base_dir,
        })
    }

    /// Resolve every grid point; the first validation error aborts.
    pub fn prepare_all(&self) -> Result<Vec<(crate::config::GridPoint, Prepared)>> {
        self.config
            .grid_points()?
            .into_iter()
            .map(|gp| {
                let prep =
                    gp.config
                        .prepare(&self.base_dir)
                        .map_err(|e| match self.config.grid {
                            Some(_) => Error::Config(format!("grid point {}: {}", gp.index, e)),
                            None => e,
                        })?;
                Ok((gp, prep))
            })
            .collect()
    }

    fn manifest_base(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert("tool".into(), json!("nhl"));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert(
            "config_sha256".into(),
            json!(sha256_hex(self.config_text.as_bytes())),
        );
        m.insert(
            "config".into(),
            serde_json::to_value(&self.config).expect("config serializes"),
        );
        m.insert("run".into(), json!(self.config.run.name()));
        m
    }
}

/// Worker count from the environment; all cores when unset.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got '{s}'"
            ))),
        },
        Err(_) => Ok(0),
    }
}

fn stage_dir(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn write_tree(dir: &Path, files: &BTreeMap<String, String>) -> Result<()> {
    for (name, contents) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
    }
    Ok(())
}

fn replace_dir(out: &Path, files: &BTreeMap<String, String>) -> Result<()> {
    let stage = stage_dir(out);
    if stage.exists() {
        fs::remove_dir_all(&stage)?;
    }
    fs::create_dir_all(&stage)?;
    write_tree(&stage, files)?;
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&stage, out)?;
    Ok(())
}

fn cell_of(v: &Value) -> Cell {
    match v {
        Value::Number(n) => match n.as_u64() {
            Some(u) => Cell::U(u as usize),
            None => Cell::F(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => Cell::S(csv_quote(s)),
        Value::Null => Cell::S(String::new()),
        other => Cell::S(csv_quote(&render_compact(other))),
    }
}

fn render_compact(v: &Value) -> String {
    match v {
        Value::Number(n) => n
            .as_u64()
            .map(|u| u.to_string())
            .unwrap_or_else(|| float(n.as_f64().unwrap_or(f64::NAN))),
        Value::Array(a) => a.iter().map(render_compact).collect::<Vec<_>>().join(";"),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Outcome of a run or sweep as seen by the command line.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

/// Execute a config. A config with a grid runs as a sweep.
pub fn run(job: &Job, require_grid: bool) -> Outcome {
    match run_inner(job, require_grid) {
        Ok(o) => o,
        Err(e) => Outcome {
            code: exit_code(&e),
            message: e.to_string(),
        },
    }
}

fn run_inner(job: &Job, require_grid: bool) -> Result<Outcome> {
    if require_grid && job.config.grid.is_none() {
        return Err(Error::Config("sweep needs a grid with 1 or 2 axes".into()));
    }
    let workers = worker_count()?;
    let points = job.prepare_all()?;
    let out_dir = job.config.output_dir.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunOutput>> =
        pool.install(|| points.par_iter().map(|(_, p)| execute(p)).collect());

    let mut manifest = job.manifest_base();
    if job.config.grid.is_none() {
        let (_, prep) = &points[0];
        return match results.into_iter().next().expect("one point") {
            Ok(mut r) => {
                manifest.insert("derived".into(), json!(prep.derived));
                manifest.insert("params".into(), serde_json::to_value(&prep.params)?);
                manifest.insert("summary".into(), json!(r.summary));
                let hashes: BTreeMap<&String, String> = r
                    .files
                    .iter()
                    .map(|(k, v)| (k, sha256_hex(v.as_bytes())))
                    .collect();
                manifest.insert("outputs".into(), json!(hashes));
                r.files.insert("manifest.json".into(), to_json(&manifest)?);
                replace_dir(&out_dir, &r.files)?;
                Ok(Outcome {
                    code: EXIT_OK,
                    message: format!("wrote {}", out_dir.display()),
                })
            }
            Err(e) => {
                let code = exit_code(&e);
                let diag = json!({
                    "error_class": e.class(),
                    "message": e.to_string(),
                    "derived": prep.derived,
                    "config_sha256": manifest["config_sha256"],
                });
                let files = BTreeMap::from([("diagnostics.json".to_string(), to_json(&diag)?)]);
                replace_dir(&out_dir, &files)?;
                Ok(Outcome {
                    code,
                    message: format!(
                        "{e} (diagnostics in {})",
                        out_dir.join("diagnostics.json").display()
                    ),
                })
            }
        };
    }

    // sweep
    let labels = job.config.axis_labels();
    let mut keys: Vec<String> = results
        .iter()
        .flatten()
        .flat_map(|r| r.summary.keys().cloned())
        .collect();
    keys.sort();
    keys.dedup();
    let mut header = vec!["index".to_string()];
    header.extend(labels.iter().cloned());
    header.extend(["status".to_string(), "error_class".to_string()]);
    header.extend(keys.iter().cloned());
    let mut table = Csv::with_header(header);
    let mut files = BTreeMap::new();
    let mut point_records = Vec::new();
    let mut failures = Vec::new();
    for ((gp, prep), res) in points.iter().zip(results) {
        let mut row = vec![Cell::U(gp.index)];
        row.extend(gp.values.iter().map(cell_of));
        let dir = format!("points/{:04}", gp.index);
        match res {
            Ok(r) => {
                row.extend([Cell::S("ok".into()), Cell::S(String::new())]);
                row.extend(
                    keys.iter()
                        .map(|k| r.summary.get(k).map_or(Cell::S(String::new()), cell_of)),
                );
                let hashes: BTreeMap<String, String> = r
                    .files
                    .iter()
                    .map(|(k, v)| (format!("{dir}/{k}"), sha256_hex(v.as_bytes())))
                    .collect();
                point_records.push(json!({
                    "index": gp.index, "values": gp.values, "status": "ok", "derived": prep.derived,
                    "params": prep.params, "summary": r.summary, "outputs": hashes,
                }));
                for (k, v) in r.files {
                    files.insert(format!("{dir}/{k}"), v);
                }
            }
            Err(e) => {
                row.extend([Cell::S("failed".into()), Cell::S(e.class().into())]);
                row.extend(keys.iter().map(|_| Cell::S(String::new())));
                point_records.push(json!({
                    "index": gp.index, "values": gp.values, "status": "failed", "derived": prep.derived,
                    "params": prep.params, "error_class": e.class(), "error": e.to_string(),
                }));
                failures.push(json!({ "index": gp.index, "error_class": e.class(), "message": e.to_string() }));
            }
        }
        table.row(&row);
    }
    let n_failed = failures.len();
    files.insert("sweep.csv".into(), table.finish());
    if !failures.is_empty() {
        files.insert(
            "diagnostics.json".into(),
            to_json(&json!({ "failed_points": failures }))?,
        );
    }
    manifest.insert("axes".into(), json!(labels));
    manifest.insert("points".into(), json!(point_records));
    files.insert("manifest.json".into(), to_json(&manifest)?);
    replace_dir(&out_dir, &files)?;
    Ok(Outcome {
        code: EXIT_OK,
        message: format!(
            "wrote {} ({} points, {} failed)",
            out_dir.display(),
            points.len(),
            n_failed
        ),
    })
}

/// Parse and resolve without computing.
pub fn validate(job: &Job) -> Outcome {
    match job.prepare_all() {
        Ok(points) => Outcome {
            code: EXIT_OK,
            message: format!(
                "ok: run {} with {} point(s)",
                job.config.run.name(),
                points.len()
            ),
        },
        Err(e) => Outcome {
            code: exit_code(&e),
            message: e.to_string(),
        },
    }
}
