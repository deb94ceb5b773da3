//! Finite-time moment growth against the lower-bound formulas.
//!
//! cargo run --release --example moment_growth [Tmax]

use std::time::Instant;

use qdyn::dynamics::{bound_report, BoundFormula};
use qdyn::lattice::PotentialSpec;

fn ladder(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_min * (t_max / t_min).powf(i as f64 / (n - 1) as f64)).collect()
}

fn main() -> qdyn::Result<()> {
    let t_max: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300.0);
    let times = ladder(10.0, t_max, 10);
    let cases = [
        ("free", PotentialSpec::free(), 2.0, BoundFormula::Ballistic),
        ("thue-morse", PotentialSpec::thue_morse(1.0), 2.0, BoundFormula::ThueMorse),
        ("period-doubling", PotentialSpec::period_doubling(1.0), 8.0, BoundFormula::PeriodDoubling),
        ("fibonacci", PotentialSpec::fibonacci(1.0), 2.0, BoundFormula::FibonacciAllCouplings { lambda: 1.0 }),
    ];
    for (name, spec, p, formula) in cases {
        let start = Instant::now();
        let report = bound_report(&spec, &[p], &times, formula, 0.15, f64::INFINITY)?.remove(0);
        println!(
            "{name:>16}  p={p}  slope={:.4} ± {:.4}  bound={:.4}  {:?}  ({:.1}s)",
            report.measured_slope,
            report.confidence_half_width,
            report.bound,
            report.verdict,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
