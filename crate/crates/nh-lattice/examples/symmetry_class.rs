//! T, C and S residuals of the Nambu generators, clean and with noise on H.

use std::f64::consts::PI;

use nh_lattice::symmetry::{check_symmetries, check_symmetries_perturbed, LossCase};

fn main() {
    let ks: Vec<f64> = (0..32)
        .map(|i| 2.0 * PI * (i as f64 + 0.5) / 32.0)
        .collect();
    for case in [LossCase::Nontrivial, LossCase::Trivial] {
        let clean = check_symmetries(&ks, 1.0, case);
        let noisy = check_symmetries_perturbed(&ks, 1.0, case, 1e-3, 7);
        println!(
            "{case:?}: class {}  T {:e}  C {:e}  S {:e}  | perturbed T {:e}",
            clean.class_label,
            clean.residual_t,
            clean.residual_c,
            clean.residual_s,
            noisy.residual_t
        );
    }
}
