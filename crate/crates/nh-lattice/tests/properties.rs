use std::f64::consts::PI;

use nalgebra::DMatrix;
use nh_lattice::analysis::*;
use nh_lattice::calibration::g2_of;
use nh_lattice::lattice::*;
use nh_lattice::propagation::*;
use nh_lattice::spectral::*;
use nh_lattice::symmetry::*;
use nh_lattice::topology::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type CMat = DMatrix<C64>;

fn random_matrix(n: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(n, n, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

fn random_unitary(n: usize, seed: u64) -> CMat {
    random_matrix(n, seed).qr().q()
}

fn pattern(g2: f64) -> LossPattern {
    if g2 >= 0.0 {
        LossPattern::topological(g2)
    } else {
        LossPattern::trivial(-g2)
    }
}

/// Largest distance from each eigenvalue of `a` to its nearest in `b`.
fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut free: Vec<C64> = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let (i, d) = free
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        worst = worst.max(d);
        free.swap_remove(i);
    }
    worst
}

fn simpson(y: &[f64], h: f64) -> f64 {
    assert!(y.len() % 2 == 1);
    let n = y.len() - 1;
    let inner: f64 = (1..n)
        .map(|i| if i % 2 == 1 { 4.0 * y[i] } else { 2.0 * y[i] })
        .sum();
    h / 3.0 * (y[0] + inner + y[n])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn bloch_trace_is_loss_only(g in 0.0f64..3.0, k in -5.0f64..5.0, d in 0.8f64..2.0, topo in any::<bool>()) {
        let p = if topo { LossPattern::topological(g) } else { LossPattern::trivial(g) };
        let h = bloch_hamiltonian(k, &p, d).unwrap();
        let tr = h.trace();
        prop_assert!(tr.re.abs() < 1e-14);
        prop_assert!((tr.im + 4.0 * g).abs() < 1e-14 * (1.0 + g));
    }

    #[test]
    fn bloch_spectrum_has_reduced_zone_period(g2 in -2.0f64..2.0, k in -3.0f64..3.0, d in 0.8f64..2.0) {
        let p = pattern(g2);
        let a = eig_full(&bloch_hamiltonian(k, &p, d).unwrap()).unwrap();
        let b = eig_full(&bloch_hamiltonian(k + PI / (2.0 * d), &p, d).unwrap()).unwrap();
        // near an exceptional point eigenvalues are only accurate to sqrt(eps)
        let tol = if a.condition_numbers.iter().all(|&c| c < 1e3) { 1e-10 } else { 1e-6 };
        prop_assert!(multiset_distance(&a.eigenvalues, &b.eigenvalues) < tol);
    }

    #[test]
    fn bendixson_bound(g2 in -2.0f64..2.0, n in 8usize..48, j in 0.02f64..0.12) {
        let spec = LatticeSpec::uniform(pattern(g2), n, j, 1.4, 0.0).unwrap();
        let h = real_space_hamiltonian(&spec);
        let diag: Vec<f64> = (0..n).map(|i| h[(i, i)].im).collect();
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for e in eig_full(&h).unwrap().eigenvalues {
            prop_assert!(e.im >= lo - 1e-12 && e.im <= hi + 1e-12, "{} outside [{}, {}]", e, lo, hi);
        }
    }

    #[test]
    fn lossless_spectra_are_real(n in 4usize..64, j in 0.02f64..0.12) {
        let spec = LatticeSpec::uniform(LossPattern::lossless(), n, j, 1.4, 0.0).unwrap();
        for e in eig_full(&real_space_hamiltonian(&spec)).unwrap().eigenvalues {
            prop_assert!(e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalue_sum_equals_trace(g2 in -2.0f64..2.0, n in 8usize..48, j in 0.02f64..0.12, re_beta in 0.0f64..7.0) {
        let spec = LatticeSpec::uniform(pattern(g2), n, j, 1.4, re_beta).unwrap();
        let h = real_space_hamiltonian(&spec);
        let sum: C64 = eig_full(&h).unwrap().eigenvalues.iter().sum();
        let tr = h.trace();
        prop_assert!((sum - tr).norm() <= 1e-9 * tr.norm().max(h.norm()));
    }

    #[test]
    fn eigenvalue_motion_bounded_by_condition(g2 in prop_oneof![-2.0f64..-0.3, 0.3f64..2.0], seed in any::<u64>()) {
        let spec = LatticeSpec::uniform(pattern(g2), 16, 0.045, 1.4, 0.0).unwrap();
        let h = real_space_hamiltonian(&spec).data;
        let sp = eig_full(&h).unwrap();
        let mut dh = random_matrix(16, seed);
        let eps = 1e-8 * h.clone().svd(false, false).singular_values.max();
        dh *= C64::from(eps / dh.clone().svd(false, false).singular_values.max());
        let moved = eig_full(&(&h + &dh)).unwrap();
        for (e, &kappa) in sp.eigenvalues.iter().zip(&sp.condition_numbers) {
            if kappa > 1e3 {
                continue;
            }
            let shift = moved.eigenvalues.iter().map(|x| (x - e).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(shift <= kappa * eps * 1.01, "shift {} bound {}", shift, kappa * eps);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn wilson_loop_is_gauge_invariant(g2 in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0], seed in any::<u64>()) {
        let d = 1.4;
        let n = 64;
        let bases: Vec<[(CMat, CMat); 2]> = (0..n)
            .map(|m| group_bases(&bloch_hamiltonian(m as f64 * PI / (2.0 * d) / n as f64, &pattern(g2), d).unwrap().data).unwrap())
            .collect();
        for grp in 0..2 {
            let plain: Vec<(CMat, CMat)> = bases.iter().map(|b| b[grp].clone()).collect();
            // independent basis changes on both sides, as a random phase per
            // eigenvector generalizes to a random unitary per degenerate group
            let rotated: Vec<(CMat, CMat)> = plain
                .iter()
                .enumerate()
                .map(|(m, (r, l))| {
                    let s = seed.wrapping_add(2 * m as u64);
                    (r * random_unitary(r.ncols(), s), l * random_unitary(l.ncols(), s ^ 0x9e37))
                })
                .collect();
            let diff = (loop_phase(&plain) - loop_phase(&rotated) + PI).rem_euclid(2.0 * PI) - PI;
            prop_assert!(diff.abs() < 1e-10, "group {} moved by {}", grp, diff);
        }
    }

    #[test]
    fn winding_stable_under_refinement(g2 in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0]) {
        let a = winding_number(&pattern(g2), 1.4, 64).unwrap();
        let b = winding_number(&pattern(g2), 1.4, 128).unwrap();
        prop_assert!((a.w - b.w).abs() < 1e-8);
        prop_assert!(a.quantization_residual < 1e-6);
        prop_assert_eq!(a.w.round(), if g2 > 0.0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn symmetry_relations_independent_of_g(g in 0.0f64..5.0) {
        let ks: Vec<f64> = (0..32).map(|i| 2.0 * PI * (i as f64 + 0.5) / 32.0).collect();
        let r = check_symmetries(&ks, g, LossCase::Nontrivial);
        prop_assert!(r.residual_t < 1e-12 && r.residual_c < 1e-12 && r.residual_s < 1e-12);
        prop_assert_eq!(r.class_label.as_str(), "BDI");
    }

    #[test]
    fn chiral_residual_bounded_by_t_and_c(g in 0.1f64..3.0, scale in 1e-6f64..1e-1, seed in any::<u64>(), trivial in any::<bool>()) {
        let case = if trivial { LossCase::Trivial } else { LossCase::Nontrivial };
        let ks: Vec<f64> = (0..8).map(|i| 2.0 * PI * (i as f64 + 0.5) / 8.0).collect();
        let r = check_symmetries_perturbed(&ks, g, case, scale, seed);
        for [t, c, s] in r.per_k {
            prop_assert!(s <= t + c + 1e-12, "S {} > T {} + C {}", s, t, c);
        }
    }

    #[test]
    fn lossy_intensity_balance(g2 in -1.5f64..1.5, j in 0.03f64..0.1) {
        let spec = LatticeSpec::uniform(pattern(g2), 16, j, 1.4, 6.6).unwrap();
        let dz = 0.01;
        let f = propagate(&spec, &Excitation::new(ExcitationKind::Site { index: 5 }), 10.0, dz, Method::Expm).unwrap();
        let h = real_space_hamiltonian(&spec);
        // dP/dz = 2 Σ Im(H_jj) |a_j|², Im H_jj <= 0 being the loss rate
        let rate: Vec<f64> = (0..f.z.len())
            .map(|iz| (0..16).map(|s| 2.0 * h[(s, s)].im * f.intensity(iz, s)).sum())
            .collect();
        let change = f.total_intensity(f.z.len() - 1) - f.total_intensity(0);
        prop_assert!((change - simpson(&rate, dz)).abs() < 1e-9, "{} vs {}", change, simpson(&rate, dz));
    }

    #[test]
    fn momentum_spectrum_parseval(g2 in -1.5f64..1.5, pad in 1usize..6, hann in any::<bool>()) {
        let spec = LatticeSpec::uniform(pattern(g2), 24, 0.045, 1.4, 6.6).unwrap();
        let f = propagate(&spec, &Excitation::new(ExcitationKind::Edge), 20.0, 0.05, Method::Expm).unwrap();
        let w = if hann { Window::Hann } else { Window::None };
        let m = momentum_spectrum(&f, w, pad, None).unwrap();
        prop_assert!(m.power.iter().all(|&p| p >= 0.0));
        prop_assert!((m.total_power - m.windowed_norm).abs() <= 1e-6 * m.windowed_norm);
    }

    #[test]
    fn decay_fit_recovers_length(ell in 2.0f64..60.0, a0 in 1e-3f64..1e3, start in 0.0f64..20.0, len in 20.0f64..80.0, log in any::<bool>()) {
        let z: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = z.iter().map(|z| a0 * (-z / ell).exp()).collect();
        let method = if log { FitMethod::LogLinear } else { FitMethod::Direct };
        let f = fit_decay(&z, &y, &[(start, start + len)], method).unwrap();
        prop_assert!((f.ell - ell).abs() <= 1e-6 * ell, "{} vs {}", f.ell, ell);
        prop_assert!(f.ell_error >= 0.0);
    }

    #[test]
    fn oscillation_fit_reduces_to_decay(ell in 3.0f64..30.0, a0 in 0.1f64..10.0) {
        let z: Vec<f64> = (0..=800).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = z.iter().map(|z| a0 * (-z / ell).exp()).collect();
        let f = fit_oscillation(&z, &y, 0.0, 80.0).unwrap();
        // with no oscillation the cosine term carries the exponential:
        // kz -> 0 and a1 cos φ -> a0 while the offset vanishes
        prop_assert!(f.kz_osc < 1e-4, "kz {}", f.kz_osc);
        prop_assert!((f.ell - ell).abs() < 1e-4 * ell, "ell {} vs {}", f.ell, ell);
        prop_assert!((f.a1 * f.phi.cos() - a0).abs() < 1e-4 * a0);
        prop_assert!(f.a0.abs() < 1e-6 * a0);
        prop_assert!(f.residual_rms < 1e-8 * a0);
    }

    #[test]
    fn g2_is_scale_free(im in 0.0f64..1.0, j in 0.01f64..0.2, c in 0.01f64..100.0) {
        let a = g2_of(im, j).unwrap();
        let b = g2_of(c * im, c * j).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }
}
