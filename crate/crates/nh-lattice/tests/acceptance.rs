//! One line per acceptance criterion. Runs the shipped figure configs where
//! one exists. Set NHL_ACCEPTANCE_STRICT=1 to turn any FAIL into a non-zero
//! exit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nh_lattice::analysis::{fit_decay, fit_oscillation, FitMethod};
use nh_lattice::lattice::*;
use nh_lattice::propagation::{propagate, Excitation, ExcitationKind, FieldEvolution, Method};
use nh_lattice::runner::{execute, Job};
use nh_lattice::spectral::*;
use nh_lattice::symmetry::{check_symmetries, check_symmetries_perturbed, LossCase};
use nh_lattice::topology::winding_number;
use serde_json::Value;

type Summary = BTreeMap<String, Value>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/figs")
}

/// Summaries of every grid point of a shipped config, in grid order.
fn run_config(name: &str) -> Vec<Result<Summary, String>> {
    let job = Job::load(&configs_dir().join(format!("{name}.json"))).expect("shipped config loads");
    let points = job.prepare_all().expect("shipped config validates");
    points
        .iter()
        .map(|(_, p)| execute(p).map(|o| o.summary).map_err(|e| e.to_string()))
        .collect()
}

fn num(s: &Summary, key: &str) -> f64 {
    s[key].as_f64().unwrap_or(f64::NAN)
}

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, secs: f64, detail: String) {
        println!(
            "[{}] {id}: {detail} ({secs:.2} s)",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn criterion_1(r: &mut Report) {
    let (res, secs) = timed(|| {
        let j = 0.045;
        let count = |p: LossPattern| {
            let spec = LatticeSpec::uniform(p, 40, j, 1.4, 0.0).unwrap();
            let sp = eig_full(&real_space_hamiltonian(&spec)).unwrap();
            find_zero_modes(&sp, &spec, 1e-6)
        };
        (
            count(LossPattern::topological(1.1)),
            count(LossPattern::trivial(1.1)),
        )
    });
    let (iii, ii) = res;
    let weights: Vec<f64> = iii.modes.iter().map(|m| m.edge_weight).collect();
    let r2: Vec<f64> = iii.modes.iter().map(|m| m.r_squared).collect();
    let ok = iii.modes.len() == 2
        && weights.iter().all(|&w| w > 0.5)
        && r2.iter().all(|&x| x > 0.99)
        && ii.modes.is_empty()
        && secs < 1.0;
    r.line(
        "1 zero modes",
        ok,
        secs,
        format!(
            "III: {} modes, edge weights {weights:?}, tail R2 {r2:?}; II: {} modes",
            iii.modes.len(),
            ii.modes.len()
        ),
    );
}

fn criterion_2(r: &mut Report) {
    let (res, secs) = timed(|| {
        [1.1, -1.1].map(|g2| {
            let p = if g2 > 0.0 {
                LossPattern::topological(g2)
            } else {
                LossPattern::trivial(-g2)
            };
            let a = winding_number(&p, 1.4, 128).unwrap();
            let b = winding_number(&p, 1.4, 256).unwrap();
            (a.w, a.quantization_residual, (a.w - b.w).abs())
        })
    });
    let [(w_pos, q_pos, dw_pos), (w_neg, q_neg, dw_neg)] = res;
    let ok = w_pos.round() == 1.0
        && w_neg.round() == 0.0
        && q_pos.max(q_neg) < 1e-6
        && dw_pos.max(dw_neg) < 1e-8
        && secs < 5.0;
    r.line(
        "2 winding",
        ok,
        secs,
        format!(
            "W(+1.1) = {w_pos:?}, W(-1.1) = {w_neg:?}, residual {:e}, doubling change {:e}",
            q_pos.max(q_neg),
            dw_pos.max(dw_neg)
        ),
    );
}

fn criterion_3(r: &mut Report) {
    let ks: Vec<f64> = (0..32)
        .map(|i| 2.0 * PI * (i as f64 + 0.5) / 32.0)
        .collect();
    let (res, secs) = timed(|| {
        [LossCase::Nontrivial, LossCase::Trivial].map(|case| {
            (
                check_symmetries(&ks, 1.0, case),
                check_symmetries_perturbed(&ks, 1.0, case, 1e-3, 7),
            )
        })
    });
    let mut ok = secs < 1.0;
    let mut parts = Vec::new();
    for (clean, noisy) in &res {
        let worst = clean.residual_t.max(clean.residual_c).max(clean.residual_s);
        // an exact zero is floored at machine epsilon for the ratio
        let gain = noisy.residual_t / worst.max(f64::EPSILON);
        ok &= worst < 1e-12 && gain >= 1e6;
        parts.push(format!(
            "{} T/C/S {:e}/{:e}/{:e}, perturbed T {:e}",
            clean.class_label,
            clean.residual_t,
            clean.residual_c,
            clean.residual_s,
            noisy.residual_t
        ));
    }
    r.line(
        "3 symmetry class",
        ok,
        secs,
        format!("nontrivial: {}; trivial: {}", parts[0], parts[1]),
    );
}

fn criterion_4(r: &mut Report) {
    let (res, secs) = timed(|| {
        let setup = EpSetup {
            im_beta: 0.1,
            spacing_d: 1.4,
            re_beta: 6.6,
            n_left_cells: 6,
            n_right_cells: 6,
        };
        let js: Vec<f64> = (0..81).map(|i| 0.04 + 0.08 * i as f64 / 80.0).collect();
        ep_sweep(&setup, &js)
    });
    let Ok(ep) = res else {
        return r.line(
            "4 exceptional point",
            false,
            secs,
            format!("{:?}", res.err()),
        );
    };
    let j_ep = ep.j_ep_refined;
    let below = ep
        .points
        .iter()
        .filter(|p| p.hopping_j < j_ep)
        .all(|p| p.re_split < p.im_split);
    let above = ep
        .points
        .iter()
        .filter(|p| p.hopping_j > j_ep)
        .all(|p| p.re_split > p.im_split);
    let ok = (0.085..=0.105).contains(&j_ep) && below && above && secs < 30.0;
    r.line(
        "4 exceptional point",
        ok,
        secs,
        format!(
            "J_ep = {j_ep:.5} (grid {:.3}), ordering below {below}, above {above}, condition at EP {:.2e}",
            ep.j_ep_estimate, ep.coalescence_condition
        ),
    );
}

fn criterion_5(r: &mut Report) {
    let (res, secs) = timed(|| run_config("fig2c"));
    // grid is phase {I, II, III} x excitation {edge, bulk}
    let (ii, iii) = match (&res[2], &res[4]) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return r.line("5 flat band", false, secs, "momentum run failed".into()),
    };
    let centroid = num(iii, "ridge_centroid");
    let spread = num(iii, "ridge_spread");
    let peaks: Vec<f64> = ii["peaks_kz"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(Value::as_f64)
        .collect();
    let lower = peaks
        .iter()
        .copied()
        .filter(|&k| k <= 6.56)
        .fold(f64::NAN, f64::max);
    let upper = peaks
        .iter()
        .copied()
        .filter(|&k| k >= 6.60)
        .fold(f64::NAN, f64::min);
    let inside = peaks.iter().any(|&k| k > 6.56 && k < 6.60);
    let gap = upper - lower;
    let ok = (centroid - 6.59).abs() <= 0.04 && spread < 0.25 * gap && !inside && secs < 10.0;
    r.line(
        "5 flat band",
        ok,
        secs,
        format!(
            "III centroid {centroid:.4}, spread {spread:.4}; II peaks at kx={:.3}: {peaks:.4?}, gap {gap:.4}",
            num(ii, "peak_kx")
        ),
    );
}

fn criterion_6(r: &mut Report) {
    let (res, secs) = timed(|| (run_config("fig3c"), run_config("fig3c_bulk")));
    let (iface, bulk) = res;
    let ells: Vec<f64> = iface
        .iter()
        .map(|s| s.as_ref().map_or(f64::NAN, |s| num(s, "ell")))
        .collect();
    let bulk_ell = bulk[0].as_ref().map_or(f64::NAN, |s| num(s, "ell"));
    // grid Im β = {0, 0.06, 0.09, 0.1}
    let increasing = ells[1] < ells[2] && ells[2] < ells[3];
    let ratio = ells[3] / bulk_ell;
    let ok = increasing && ratio >= 1.25 && secs < 10.0;
    r.line(
        "6 interface lifetime",
        ok,
        secs,
        format!(
            "ell(0.06, 0.09, 0.1) = {:.3?}, bulk II {bulk_ell:.3}, ratio {ratio:.3}",
            &ells[1..]
        ),
    );
}

fn criterion_7(r: &mut Report) {
    let (res, secs) = timed(|| run_config("fig3d"));
    let Ok(s) = &res[0] else {
        return r.line("7 advantage window", false, secs, format!("{:?}", res[0]));
    };
    let adv: Vec<f64> = s["advantage_g2"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(Value::as_f64)
        .collect();
    let window: Vec<f64> = (7..=14).map(|i| i as f64 / 10.0).collect();
    let missing: Vec<f64> = window
        .iter()
        .copied()
        .filter(|g| !adv.iter().any(|a| (a - g).abs() < 1e-9))
        .collect();
    let rel = num(s, "rel_diff_at_max_g2");
    let ok = missing.is_empty() && rel < 0.05 && secs < 30.0;
    r.line(
        "7 advantage window",
        ok,
        secs,
        format!("interface below defect for {} of 29 g2 values, missing in [0.7, 1.4]: {missing:?}; rel. diff at 3.0 {rel:.4}", adv.len()),
    );
}

fn max_intensity_deviation(a: &FieldEvolution, b: &FieldEvolution, stride: usize) -> f64 {
    let mut worst = 0.0f64;
    for (ia, ib) in (0..a.z.len()).zip((0..b.z.len()).step_by(stride)) {
        let total = b.total_intensity(ib);
        for s in 0..a.n_sites {
            worst = worst.max((a.intensity(ia, s) - b.intensity(ib, s)).abs() / total);
        }
    }
    worst
}

fn criterion_8(r: &mut Report) {
    let (res, secs) = timed(|| {
        let exc = Excitation::new(ExcitationKind::Edge);
        let lossless = LatticeSpec::uniform(LossPattern::lossless(), 40, 0.045, 1.4, 6.6).unwrap();
        let f = propagate(&lossless, &exc, 100.0, 0.01, Method::Rk4).unwrap();
        let norm_err = (0..f.z.len())
            .map(|i| (f.total_intensity(i) - 1.0).abs())
            .fold(0.0, f64::max);

        let lossy =
            LatticeSpec::uniform(LossPattern::topological(1.1), 40, 0.045, 1.4, 6.6).unwrap();
        let exact = propagate(&lossy, &exc, 50.0, 0.01, Method::Expm).unwrap();
        let rk = propagate(&lossy, &exc, 50.0, 0.01, Method::Rk4).unwrap();
        let dev = max_intensity_deviation(&rk, &exact, 1);
        // steps large enough that truncation error dominates rounding
        let coarse = propagate(&lossy, &exc, 50.0, 2.0, Method::Rk4).unwrap();
        let fine = propagate(&lossy, &exc, 50.0, 1.0, Method::Rk4).unwrap();
        let e_coarse = max_intensity_deviation(&coarse, &exact, 200);
        let e_fine = max_intensity_deviation(&fine, &exact, 100);
        (norm_err, dev, e_coarse / e_fine)
    });
    let (norm_err, dev, ratio) = res;
    let ok = norm_err < 1e-9 && dev < 1e-8 && (8.0..=32.0).contains(&ratio) && secs < 10.0;
    r.line(
        "8 numerical integrity",
        ok,
        secs,
        format!("norm error {norm_err:e}, rk4 vs expm {dev:e}, dz-halving error ratio {ratio:.2}"),
    );
}

fn criterion_9(r: &mut Report) {
    let (res, secs) = timed(|| run_config("fig4b"));
    // grid is d {1.8 .. 1.0} x excitation {edge, interface}
    let edge: Vec<f64> = res
        .iter()
        .step_by(2)
        .map(|s| s.as_ref().map_or(f64::NAN, |s| num(s, "kz_osc")))
        .collect();
    let increasing = edge.windows(2).all(|w| w[0] < w[1]);
    let mut iface = Vec::new();
    let mut quasi_stationary = true;
    for s in res.iter().skip(1).step_by(2) {
        match s {
            Ok(s) => {
                let (kz, two_j) = (num(s, "kz_osc"), num(s, "two_j"));
                quasi_stationary &= kz < 0.1 * two_j;
                iface.push(format!("{kz:.4}/{:.4}", 0.1 * two_j));
            }
            Err(_) => {
                quasi_stationary = false;
                iface.push("fit failed".into());
            }
        }
    }
    let ok = increasing && quasi_stationary && secs < 30.0;
    r.line(
        "9 oscillation trend",
        ok,
        secs,
        format!(
            "edge kz_osc {edge:.4?} (increasing {increasing}); interface kz_osc/limit [{}]",
            iface.join(", ")
        ),
    );
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10(r: &mut Report) {
    let bin = Path::new(env!("CARGO_BIN_EXE_nhl"));
    let mut configs: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    let (res, secs) = timed(|| {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let tmp = tempfile::tempdir().unwrap();
                let codes: Vec<Option<i32>> = configs
                    .iter()
                    .map(|c| {
                        Command::new(bin)
                            .current_dir(tmp.path())
                            .arg("run")
                            .arg(c)
                            .output()
                            .unwrap()
                            .status
                            .code()
                    })
                    .collect();
                (codes, snapshot(tmp.path()))
            })
            .collect();
        runs
    });
    let same = res[0].1 == res[1].1;
    let all_ok = res
        .iter()
        .all(|(codes, _)| codes.iter().all(|&c| c == Some(0)));
    r.line(
        "10 determinism",
        same && all_ok && secs < 120.0,
        secs,
        format!(
            "{} configs x 2 runs, {} files, identical {same}, all exit 0 {all_ok}",
            configs.len(),
            res[0].1.len()
        ),
    );
}

/// Literal invariants stated alongside the criteria.
fn invariants(r: &mut Report) {
    let ((osc, dec), secs) = timed(|| {
        let z: Vec<f64> = (0..=800).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = z.iter().map(|z| 0.7 * (-z / 5.0f64).exp()).collect();
        (
            fit_oscillation(&z, &y, 0.0, 80.0).unwrap(),
            fit_decay(&z, &y, &[(4.0, 80.0)], FitMethod::Direct).unwrap(),
        )
    });
    r.line(
        "invariant oscillation fit on a pure exponential: a1 < 1e-6 a0",
        osc.a1 < 1e-6 * osc.a0.abs(),
        secs,
        format!(
            "a1 {:e}, a0 {:e}, kz {:e}, a1 cos(phi) {:.6}, ell {:.6} vs decay fit {:.6}",
            osc.a1,
            osc.a0,
            osc.kz_osc,
            osc.a1 * osc.phi.cos(),
            osc.ell,
            dec.ell
        ),
    );

    let (dev, secs) = timed(|| {
        let h = bloch_hamiltonian(0.0, &LossPattern::topological(1.0), 1.4).unwrap();
        let b = biorthonormalize(&eig_full(&h).unwrap(), DEFAULT_DEFECT_THRESHOLD).unwrap();
        let kappa = b.condition_numbers.iter().cloned().fold(0.0, f64::max);
        (
            (b.left.adjoint() * &b.right - CMat::identity(4, 4)).norm(),
            kappa,
        )
    });
    r.line(
        "invariant phase III Bloch matrix k=0, g=1 biorthonormal to 1e-10",
        dev.0 < 1e-10,
        secs,
        format!("deviation {:e}, max condition number {:.2e}", dev.0, dev.1),
    );
}

fn main() {
    let mut r = Report { failed: Vec::new() };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    criterion_9(&mut r);
    criterion_10(&mut r);
    invariants(&mut r);
    println!("acceptance: {} failing: {:?}", r.failed.len(), r.failed);
    if std::env::var("NHL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && !r.failed.is_empty() {
        std::process::exit(1);
    }
}
