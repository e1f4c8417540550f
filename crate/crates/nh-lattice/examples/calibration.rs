//! Fabrication parameters to g2: J(d) through an exponential, Im beta(w)
//! through a table.

use nh_lattice::calibration::{fit_curve, g2_of, load_anchors, CurveKind, ModelKind};

fn main() -> nh_lattice::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/calibration");
    let j_of_d = fit_curve(
        CurveKind::JVsD,
        &load_anchors(format!("{dir}/j_vs_d.json").as_ref())?,
        ModelKind::Exponential,
        None,
    )?;
    let im_of_w = fit_curve(
        CurveKind::ImbetaVsW,
        &load_anchors(format!("{dir}/imbeta_vs_w.json").as_ref())?,
        ModelKind::TableInterp,
        None,
    )?;
    println!("J(d) model {:?}", j_of_d.model);
    for w in [0.0, 0.25, 0.5, 0.7] {
        let im = im_of_w.predict(w)?;
        println!(
            "w = {w}: Im beta = {im:.3} 1/um, g2 at d = 1.4: {:.3}",
            g2_of(im, j_of_d.predict(1.4)?)?
        );
    }
    Ok(())
}
