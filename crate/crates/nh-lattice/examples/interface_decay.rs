//! Decay length at the II/III interface grows with the loss.

use nh_lattice::analysis::{default_fit_ranges, fit_decay, FitMethod};
use nh_lattice::lattice::{interface_lattice, LatticeSpec, LossPattern};
use nh_lattice::propagation::{propagate, Excitation, ExcitationKind, Method};

fn main() -> nh_lattice::Result<()> {
    let j = 0.045;
    let base = LatticeSpec::uniform(LossPattern::lossless(), 4, j, 1.4, 6.6)?;
    let exc = Excitation::new(ExcitationKind::Interface);
    for im_beta in [0.06, 0.09, 0.1] {
        let g = im_beta / (2.0 * j);
        let spec = interface_lattice(
            &LossPattern::trivial(g),
            &LossPattern::topological(g),
            6,
            6,
            &base,
        )?;
        let f = propagate(&spec, &exc, 100.0, 0.1, Method::Expm)?;
        let fit = fit_decay(
            &f.z,
            &f.trace(f.source_site),
            &default_fit_ranges(),
            FitMethod::Direct,
        )?;
        println!(
            "Im beta = {im_beta}: ell = {:.3} +- {:.3} um",
            fit.ell, fit.ell_error
        );
    }

    let bulk = LatticeSpec::uniform(LossPattern::trivial(0.1 / (2.0 * j)), 48, j, 1.4, 6.6)?;
    let f = propagate(
        &bulk,
        &Excitation::new(ExcitationKind::Site { index: 24 }),
        100.0,
        0.1,
        Method::Expm,
    )?;
    let fit = fit_decay(&f.z, &f.trace(24), &default_fit_ranges(), FitMethod::Direct)?;
    println!("phase II bulk, Im beta = 0.1: ell = {:.3} um", fit.ell);
    Ok(())
}
