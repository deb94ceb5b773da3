//! Time-averaged profile by propagation and by resolvent quadrature.

use qdyn::dynamics::{default_window, profile_resolvent, profile_time, resolvent_richardson, EnergyGrid};
use qdyn::lattice::PotentialSpec;

fn main() -> qdyn::Result<()> {
    let specs = [
        ("free", PotentialSpec::free()),
        ("fibonacci", PotentialSpec::fibonacci(1.0)),
        ("thue-morse", PotentialSpec::thue_morse(1.0)),
    ];
    for (name, spec) in &specs {
        for t in [20.0, 50.0] {
            let window = default_window(spec, t);
            let grid = EnergyGrid::for_profile(spec, &window, t)?;
            let by_time = profile_time(spec, t, &window)?;
            let by_resolvent = profile_resolvent(spec, t, &window, &grid)?;
            let l1 = by_time.l1_distance(&by_resolvent)?;
            let drift = resolvent_richardson(spec, t, &window, &grid, &[1, 2, 5, 10])?;
            println!(
                "{name:>10} T={t:<4} mass={:.9} l1={:.3e} ({:.4}% of mass) richardson={drift:.2e}",
                by_resolvent.total_mass(),
                l1,
                100.0 * l1 / by_resolvent.total_mass()
            );
        }
    }
    Ok(())
}
