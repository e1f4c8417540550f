//! Interface zero mode against an isolated low-loss defect.

use nh_lattice::analysis::{interface_vs_defect, DefectSetup};

fn main() -> nh_lattice::Result<()> {
    let g2: Vec<f64> = (2..=30).step_by(2).map(|i| i as f64 / 10.0).collect();
    for r in interface_vs_defect(&g2, &DefectSetup::default())? {
        println!(
            "g2 = {:.1}  |Im E|/J interface {:.4}  defect {:.4}{}",
            r.g2,
            r.im_e_interface.abs(),
            r.im_e_defect.abs(),
            if r.ambiguous {
                "  (defect mode not localized)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
