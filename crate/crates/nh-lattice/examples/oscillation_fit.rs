//! Beating of the trivial edge waveguide against the spacing d, with J(d)
//! from the calibration anchors.

use nh_lattice::analysis::fit_oscillation;
use nh_lattice::calibration::{fit_curve, load_anchors, CurveKind, ModelKind};
use nh_lattice::lattice::{LatticeSpec, LossPattern};
use nh_lattice::propagation::{propagate, Excitation, ExcitationKind, Method};

fn main() -> nh_lattice::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/calibration/j_vs_d.json"
    );
    let curve = fit_curve(
        CurveKind::JVsD,
        &load_anchors(path.as_ref())?,
        ModelKind::Exponential,
        Some((1.0, 1.8)),
    )?;
    for d in [1.8, 1.6, 1.4, 1.2, 1.0] {
        let j = curve.predict(d)?;
        let spec = LatticeSpec::uniform(LossPattern::trivial(0.1 / (2.0 * j)), 48, j, d, 6.6)?;
        let f = propagate(
            &spec,
            &Excitation::new(ExcitationKind::Edge),
            100.0,
            0.1,
            Method::Expm,
        )?;
        match fit_oscillation(&f.z, &f.trace(0), 0.0, 100.0) {
            Ok(o) => println!(
                "d = {d}  J = {j:.4}  kz_osc = {:.4}  ell = {:.2}",
                o.kz_osc, o.ell
            ),
            Err(e) => println!("d = {d}  J = {j:.4}  {e}"),
        }
    }
    Ok(())
}
