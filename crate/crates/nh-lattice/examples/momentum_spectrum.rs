//! Flat band of the edge state in the momentum-resolved spectrum.

use std::f64::consts::PI;

use nh_lattice::analysis::{momentum_spectrum, Window, DEFAULT_PAD_FACTOR};
use nh_lattice::lattice::{LatticeSpec, LossPattern};
use nh_lattice::propagation::{propagate, Excitation, ExcitationKind, Method};

fn main() -> nh_lattice::Result<()> {
    let d = 1.4;
    for (name, p) in [
        ("II", LossPattern::trivial(1.1)),
        ("III", LossPattern::topological(1.1)),
    ] {
        let spec = LatticeSpec::uniform(p, 48, 0.045, d, 6.6)?;
        let f = propagate(
            &spec,
            &Excitation::new(ExcitationKind::Edge),
            200.0,
            0.01,
            Method::Expm,
        )?;
        let m = momentum_spectrum(&f, Window::Hann, DEFAULT_PAD_FACTOR, Some((6.3, 6.9)))?;
        let ridge = m.ridge(6.3, 6.9);
        println!(
            "phase {name}: ridge centroid {:.4} 1/um, spread {:.4}, peaks at kx = -pi/2d: {:.4?}",
            ridge.centroid(),
            ridge.spread(0.1),
            m.column_peaks(-PI / (2.0 * d), 6.3, 6.9, 0.05)
        );
    }
    Ok(())
}
