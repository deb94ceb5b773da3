//! Bands of the periodic approximants at strong coupling: counts, types,
//! covering and the decay of their total length.
//!
//! cargo run --release --example approximant_bands [lambda] [kmax]

use qdyn::spectra::{
    bound_parameters, classify_level, BandKind, covering_between, derivative_ratio_check, genealogy_check, measure_report,
    partial_bound_check, SpectrumLadder, EDGE_TOL,
};

fn main() -> qdyn::Result<()> {
    let mut args = std::env::args().skip(1);
    let lambda: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let kmax: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let ladder = SpectrumLadder::new(lambda, kmax, EDGE_TOL)?;
    for k in 2..=kmax {
        let set = classify_level(&ladder, k)?;
        let a = set.bands.iter().filter(|b| b.kind == BandKind::TypeA).count();
        let covered = k < kmax && covering_between(ladder.level(k - 1), ladder.level(k), ladder.level(k + 1), ladder.tol()).holds;
        println!(
            "k={k:>2}  bands={:>3} (A {a:>3}, B {:>3})  |sigma_k|={:.4e}  covering={}",
            set.len(),
            set.len() - a,
            set.measure(),
            if k < kmax { covered.to_string() } else { "-".into() }
        );
    }
    let g = genealogy_check(&ladder)?;
    println!("genealogy holds: {}", g.holds());
    let d = derivative_ratio_check(&ladder, 1e-6)?;
    println!("derivative ratios: A {:.3} <= {}, B {:.3} <= {}", d.max_ratio_a, d.bound_a, d.max_ratio_b, d.bound_b);
    if lambda > 4.0 {
        let p = partial_bound_check(lambda, 10_000, 1e-12)?;
        println!("largest partial of f_+- on [-2,2]^2: {:.6}", p.max_partial);
    }
    let m = measure_report(&ladder)?;
    let b = bound_parameters(lambda)?;
    println!("measure decay exponent {:.3} (lower bound -gamma = {:.4})", m.decay_exponent, -b.gamma);
    Ok(())
}
