//! Checks against independently computed reference values: analytic
//! dispersions, direct arithmetic, and cross-module consistency.

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nh_lattice::analysis::{momentum_spectrum, Window};
use nh_lattice::calibration::{fit_curve, g2_of, paper_anchors, CurveKind, ModelKind};
use nh_lattice::lattice::*;
use nh_lattice::propagation::{beating_period, propagate, Excitation, ExcitationKind, Method};
use nh_lattice::spectral::*;

fn sorted_re(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn lossless_bloch_bands_fold_the_chain_dispersion() {
    let d = 1.4;
    for i in 0..25 {
        let k = -PI / (2.0 * d) + i as f64 * PI / (24.0 * d);
        let sp = eig_full(&bloch_hamiltonian(k, &LossPattern::lossless(), d).unwrap()).unwrap();
        let got = sorted_re(sp.eigenvalues.iter().map(|e| e.re).collect());
        let want = sorted_re(
            (0..4)
                .map(|m| 2.0 * (k * d + m as f64 * PI / 2.0).cos())
                .collect(),
        );
        for (a, b) in got.iter().zip(&want) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn onsite_tiling_arithmetic() {
    let spec = LatticeSpec::uniform(LossPattern::topological(1.1), 40, 0.045, 1.4, 0.0).unwrap();
    let h = real_space_hamiltonian(&spec);
    let lossy = -2.0 * 1.1 * 0.045;
    for j in 0..40 {
        let want = if matches!(j % 4, 1 | 2) { lossy } else { 0.0 };
        assert_abs_diff_eq!(h[(j, j)].im, want, epsilon = 1e-15);
    }
    let base = LatticeSpec::uniform(LossPattern::lossless(), 4, 0.045, 1.4, 0.0).unwrap();
    let iface = interface_lattice(
        &LossPattern::trivial(0.7),
        &LossPattern::topological(0.7),
        6,
        6,
        &base,
    )
    .unwrap();
    assert_eq!((iface.n_sites, iface.interface_site), (48, Some(24)));
    let h = real_space_hamiltonian(&iface);
    for j in 0..48 {
        let im = h[(j, j)].im;
        assert!(
            im == 0.0 || (im - (-2.0 * 0.7 * 0.045)).abs() < 1e-15,
            "site {j}: {im}"
        );
    }
    // the junction waveguide and its left neighbour are low loss
    assert_eq!(h[(24, 24)].im, 0.0);
    assert_eq!(h[(23, 23)].im, -2.0 * 0.7 * 0.045);
}

#[test]
fn bendixson_bound_on_forty_sites() {
    let j = 0.045;
    let spec = LatticeSpec::uniform(LossPattern::topological(1.1), 40, j, 1.4, 0.0).unwrap();
    let sp = eig_full(&real_space_hamiltonian(&spec)).unwrap();
    for e in &sp.eigenvalues {
        assert!(e.im >= -2.0 * 1.1 * j - 1e-15 && e.im <= 1e-15, "{e}");
    }
}

#[test]
fn bloch_matrix_overlaps() {
    let h = bloch_hamiltonian(0.0, &LossPattern::topological(1.1), 1.4).unwrap();
    let b = biorthonormalize(&eig_full(&h).unwrap(), DEFAULT_DEFECT_THRESHOLD).unwrap();
    let dev = (b.left.adjoint() * &b.right - CMat::identity(4, 4)).norm();
    assert!(dev < 1e-10, "{dev}");
    // g = 1 puts k = 0 exactly on an exceptional point: two pairs coalesce
    let h = bloch_hamiltonian(0.0, &LossPattern::topological(1.0), 1.4).unwrap();
    let sp = eig_full(&h).unwrap();
    assert!(sp.condition_numbers.iter().all(|&c| c > 1e6));
}

#[test]
fn ep_coalescence_is_flagged() {
    let setup = EpSetup {
        im_beta: 0.1,
        spacing_d: 1.4,
        re_beta: 0.0,
        n_left_cells: 6,
        n_right_cells: 6,
    };
    let js: Vec<f64> = (0..81).map(|i| 0.04 + 0.001 * i as f64).collect();
    let r = ep_sweep(&setup, &js).unwrap();
    let sp = eig_full(&real_space_hamiltonian(
        &setup.lattice(r.j_ep_refined).unwrap(),
    ))
    .unwrap();
    assert!(r.coalescence_condition > 1e4);
    assert!(matches!(
        biorthonormalize(&sp, 1e4),
        Err(nh_lattice::Error::Defective { .. })
    ));
    // far from the EP the same threshold is harmless
    let far = eig_full(&real_space_hamiltonian(&setup.lattice(0.05).unwrap())).unwrap();
    assert!(biorthonormalize(&far, 1e4).is_ok());
}

#[test]
fn lossless_bulk_ridge_follows_cosine_band() {
    let j = 0.045;
    let d = 1.4;
    let spec = LatticeSpec::uniform(LossPattern::lossless(), 48, j, d, 6.6).unwrap();
    let f = propagate(
        &spec,
        &Excitation::new(ExcitationKind::BulkCellStart),
        200.0,
        0.05,
        Method::Expm,
    )
    .unwrap();
    let m = momentum_spectrum(&f, Window::Hann, 4, Some((6.4, 6.8))).unwrap();
    let ridge = m.ridge(6.45, 6.75);
    let dkz = m.kz_grid[1] - m.kz_grid[0];
    for (kx, kz) in ridge.kx.iter().zip(&ridge.kz) {
        let want = 6.6 + 2.0 * j * (kx * d).cos();
        assert!(
            (kz - want).abs() <= dkz,
            "kx {kx}: ridge {kz} vs band {want}"
        );
    }
}

#[test]
fn beating_matches_spectral_splitting() {
    let spec = LatticeSpec::uniform(LossPattern::trivial(1.1), 48, 0.045, 1.4, 6.6).unwrap();
    let b = beating_period(
        &spec,
        &Excitation::new(ExcitationKind::BulkCellStart),
        300.0,
        0.01,
    )
    .unwrap();
    let (p, s) = (b.predicted.unwrap(), b.simulated.unwrap());
    assert!((p - s).abs() < 0.1 * p, "predicted {p} simulated {s}");
}

#[test]
fn paper_calibration_anchors_round_trip() {
    for kind in [CurveKind::JVsD, CurveKind::ImbetaVsW] {
        let a = paper_anchors(kind);
        let mut pts = a.clone();
        // a second point on a known line so a two-parameter model is determined
        pts.push(nh_lattice::calibration::Anchor {
            x: a[0].x * 1.5,
            y: a[0].y * 0.5,
            units: "um,1/um".into(),
            provenance: nh_lattice::calibration::Provenance::User,
            note: None,
        });
        let c = fit_curve(kind, &pts, ModelKind::Exponential, None).unwrap();
        for p in &a {
            assert!((c.predict(p.x).unwrap() - p.y).abs() <= 0.02 * p.y);
        }
    }
    assert!((g2_of(0.1, 0.045).unwrap() - 1.1).abs() < 0.02);
}
