//! Light injected at the edge waveguide of phases I, II and III.

use nh_lattice::lattice::{LatticeSpec, LossPattern};
use nh_lattice::propagation::{center_of_mass, propagate, Excitation, ExcitationKind, Method};

fn main() -> nh_lattice::Result<()> {
    let exc = Excitation::new(ExcitationKind::Edge);
    for (name, p) in [
        ("I", LossPattern::lossless()),
        ("II", LossPattern::trivial(1.1)),
        ("III", LossPattern::topological(1.1)),
    ] {
        let spec = LatticeSpec::uniform(p, 48, 0.045, 1.4, 6.6)?;
        let f = propagate(&spec, &exc, 60.0, 0.01, Method::Expm)?;
        let frac = f.fraction(0);
        let com = center_of_mass(&f);
        println!("phase {name}");
        for iz in (0..f.z.len()).step_by(1000) {
            println!(
                "  z = {:5.1} um  total {:.4}  edge fraction {:.3}  center of mass {:6.2} um",
                f.z[iz],
                f.total_intensity(iz),
                frac[iz],
                com[iz].1
            );
        }
    }
    Ok(())
}
