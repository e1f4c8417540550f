//! Midgap states of a 40-site chain with the topological loss pattern.

use nh_lattice::lattice::{real_space_hamiltonian, LatticeSpec, LossPattern};
use nh_lattice::spectral::{eig_full, find_zero_modes, DEFAULT_ZERO_TOL};

fn main() -> nh_lattice::Result<()> {
    let j = 0.045;
    for (name, pattern) in [
        ("III", LossPattern::topological(1.1)),
        ("II", LossPattern::trivial(1.1)),
    ] {
        let spec = LatticeSpec::uniform(pattern, 40, j, 1.4, 0.0)?;
        let sp = eig_full(&real_space_hamiltonian(&spec))?;
        let zm = find_zero_modes(&sp, &spec, DEFAULT_ZERO_TOL);
        println!("phase {name}: {} zero modes", zm.modes.len());
        for m in &zm.modes {
            println!(
                "  E/J = {:+.3e}{:+.4}i  edge weight {:.3}  localization {:.2} um  (R2 {:.5})",
                m.energy.re / j,
                m.energy.im / j,
                m.edge_weight,
                m.localization_length,
                m.r_squared
            );
        }
    }
    Ok(())
}
