//! Transfer-matrix norms on the Fibonacci spectrum: the power-law bound, the
//! Zeckendorf step bound and the complex-energy perturbation bound.

use qdyn::dynamics::{complex_energy_bound_check, local_growth_exponent, powerlaw_check, step_bound_check};
use qdyn::lattice::PotentialSpec;
use qdyn::spectra::{approximant_spectrum, bound_parameters, EDGE_TOL};
use qdyn::traces::fibonacci_number;
use qdyn::C64;

fn main() -> qdyn::Result<()> {
    let (lambda, k) = (1.0, 14);
    let b = bound_parameters(lambda)?;
    let spec = PotentialSpec::fibonacci(lambda);
    let m_max = fibonacci_number(k) as usize;
    println!("lambda={lambda}  d={:.2}  alpha={:.3}  m <= F_{k} = {m_max}", b.d, b.alpha);
    let deltas: Vec<C64> = [1e-4, 1e-3, 1e-2].iter().flat_map(|&r| [C64::new(r, 0.0), C64::new(0.0, r)]).collect();
    for e in approximant_spectrum(lambda, k, EDGE_TOL)?.sample_energies(6) {
        let p = powerlaw_check(&spec, e, b.alpha, m_max, Some(b.d))?;
        let s = step_bound_check(lambda, e, m_max)?;
        let c = complex_energy_bound_check(&spec, e, 400, &deltas)?;
        let growth = local_growth_exponent(&spec, e, 10, m_max)?;
        println!(
            "E={e:+.6}  max|T|={:>9.3}  ratio={:.3e}  step excess={:+.2}  complex violations={}  growth {:.3}",
            p.max_norm, p.c_estimate, s.max_log_excess, c.violations, growth
        );
    }
    Ok(())
}
