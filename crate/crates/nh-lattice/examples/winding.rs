//! Winding number across g2, including the gapless point g2 = 0.

use nh_lattice::lattice::LossPattern;
use nh_lattice::topology::{winding_number, winding_phase_diagram};

fn main() -> nh_lattice::Result<()> {
    let r = winding_number(&LossPattern::topological(1.1), 1.4, 128)?;
    println!(
        "g2 = +1.1: W = {} (residual {:e}, min gap {:.3} J)",
        r.w, r.quantization_residual, r.min_gap
    );

    let g2: Vec<f64> = (-6..=6).map(|i| i as f64 * 0.25).collect();
    for row in winding_phase_diagram(&g2, 1.4, 128, 0.05) {
        match (&row.w, &row.error) {
            (Some(w), _) => println!("g2 = {:+.2}  W = {:.6}", row.g2, w),
            (None, Some(e)) => println!("g2 = {:+.2}  skipped: {e}", row.g2),
            _ => println!("g2 = {:+.2}  excluded", row.g2),
        }
    }
    Ok(())
}
