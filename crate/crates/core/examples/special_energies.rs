//! Energies where the substitution blocks collapse: roots of the period-doubling
//! traces and the Thue-Morse points with identity blocks.

use qdyn::lattice::{Geometry, Model, PotentialSpec};
use qdyn::dynamics::powerlaw_check;
use qdyn::traces::{pd_special_energies, subst_transfer, tm_special_energies};

fn main() -> qdyn::Result<()> {
    let lambda = 1.0;
    let (t0, t1) = subst_transfer(Model::PeriodDoubling, lambda, 0.0, 1)?;
    println!("period doubling at E=0: T0_1 = {:?}", [t0.a.re, t0.b.re, t0.c.re, t0.d.re]);
    println!("                        T1_1 = {:?}", [t1.a.re, t1.b.re, t1.c.re, t1.d.re]);
    for k in 1..=6 {
        let s = pd_special_energies(lambda, k)?;
        println!("  k={k}  roots={:>2}  largest check {:.2e}", s.energies.len(), s.max_check());
    }

    let s = tm_special_energies(lambda, 3)?;
    println!("thue-morse level 3: {:?}", s.roots());
    let half = PotentialSpec::thue_morse(lambda).with_geometry(Geometry::HalfLineDirichlet);
    for e in &s.energies {
        let r = powerlaw_check(&half, e.energy, 0.0, 100_000, None)?;
        let defect = e.check0.max(e.check1);
        println!("  E={:+.6}  block defect {defect:.1e}  sup_n<=1e5 |T(n,1)| = {:.4}", e.energy, r.c_estimate);
    }
    Ok(())
}
