//! Interface and edge modes of a II/III chain meet at an exceptional point
//! as J grows at fixed Im beta.

use nh_lattice::spectral::{ep_sweep, EpSetup};

fn main() -> nh_lattice::Result<()> {
    let setup = EpSetup {
        im_beta: 0.1,
        spacing_d: 1.4,
        re_beta: 6.6,
        n_left_cells: 6,
        n_right_cells: 6,
    };
    let js: Vec<f64> = (0..81).map(|i| 0.04 + 0.001 * i as f64).collect();
    let r = ep_sweep(&setup, &js)?;
    for p in r.points.iter().step_by(10) {
        println!(
            "J = {:.3}  Re split {:.2e}  Im split {:.2e}",
            p.hopping_j, p.re_split, p.im_split
        );
    }
    println!(
        "J_ep = {:.5} 1/um (condition number there {:.1e})",
        r.j_ep_refined, r.coalescence_condition
    );
    Ok(())
}
