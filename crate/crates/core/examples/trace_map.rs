//! Trace maps for the three substitution models and the Fibonacci invariant.

use qdyn::lattice::Model;
use qdyn::traces::{fib_matrices, fib_trace_orbit, subst_trace_orbit};

fn main() -> qdyn::Result<()> {
    let (lambda, energy) = (1.0, 0.3);
    let orbit = fib_trace_orbit(lambda, energy, 14);
    let blocks = fib_matrices(lambda, energy, 14)?;
    println!("fibonacci  lambda={lambda} E={energy}  I = 4 + lambda^2 = {}", 4.0 + lambda * lambda);
    for (k, (x, m)) in orbit.xs.iter().zip(&blocks).enumerate() {
        println!("  k={k:>2}  x_k={x:>14.6e}  tr M_k={:>14.6e}", m.trace().re);
    }
    println!("  invariant drift {:.2e}", orbit.invariant_drift(1e6));

    for model in [Model::PeriodDoubling, Model::ThueMorse] {
        let o = subst_trace_orbit(model, lambda, energy, 8)?;
        println!("{model:?}");
        for (k, (x, y)) in o.xs.iter().zip(&o.ys).enumerate() {
            println!("  k={k}  x_k={x:>12.6}  y_k={y:>12.6}");
        }
    }
    Ok(())
}
