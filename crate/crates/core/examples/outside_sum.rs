//! Resolvent mass beyond N(T)/2 at energies near the approximant spectrum.

use qdyn::dynamics::outside_sum_ladder;

fn main() -> qdyn::Result<()> {
    let report = outside_sum_ladder(1.0, &[1e2, 1e3, 1e4], 8)?;
    println!("alpha_eff = {:.4}", report.alpha_eff);
    for row in &report.rows {
        println!(
            "T={:>8.0}  N={:>8.2}  k={:>2}  energies={:>3}  min sum={:.4e}",
            row.t_avg, row.n_scale, row.level, row.energies, row.min_sum
        );
    }
    println!(
        "exponent in T = {:.4}, in N = {:.4} (predicted >= {:.4})",
        report.exponent_t, report.exponent_n, report.predicted_exponent_n
    );
    Ok(())
}
