use std::collections::BTreeMap;

use proptest::prelude::*;
use qdyn::cli::{CommandId, ModelArg, RunConfig};
use qdyn::dynamics::{
    evolve_state, growth_exponent, log_moment, profile_time, resolvent_vector, MomentSeries,
};
use qdyn::lattice::{
    apply_substitution, apply_tridiagonal, potential_on, potential_value, substitution_word, transfer_matrix,
    transfer_matrix_scaled,
    LatticeWindow, Model, PotentialSpec,
};
use qdyn::spectra::{approximant_spectrum, classify_bands, covering_check, partial_bound_check, BandKind, EDGE_TOL};
use qdyn::traces::{fib_matrices, fib_trace_orbit, subst_trace_and_slope, tm_level_set, tm_trace_zeros};
use qdyn::C64;

fn model() -> impl Strategy<Value = PotentialSpec> {
    (0.1f64..4.0, 0usize..3).prop_map(|(l, m)| match m {
        0 => PotentialSpec::fibonacci(l),
        1 => PotentialSpec::period_doubling(l),
        _ => PotentialSpec::thue_morse(l),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_matrices_are_unimodular(spec in model(), m in -5000i64..5000, len in 0i64..=10_000,
                                        r in 0.0f64..10.0, arg in 0.0f64..6.3) {
        // T = e^s N, so det N = e^{-2s}; rounding in N is relative to ‖N‖²
        let t = transfer_matrix_scaled(&spec, m + len, m, C64::from_polar(r, arg)).unwrap();
        let n = t.normalized;
        let target = (-2.0 * t.log_scale).exp();
        prop_assert!((n.det() - target).norm() <= 1e-12 * n.norm().powi(2).max(target));
    }

    #[test]
    fn transfer_matrices_compose(spec in model(), a in -2000i64..2000, b in -60i64..60, c in -60i64..60,
                                 e in -3.0f64..3.0, eta in 0.0f64..0.5) {
        let z = C64::new(e, eta);
        let (m, k, n) = (a, a + b, a + b + c);
        let full = transfer_matrix(&spec, n, m, z).unwrap();
        let left = transfer_matrix(&spec, n, k, z).unwrap();
        let right = transfer_matrix(&spec, k, m, z).unwrap();
        let scale = left.norm() * right.norm();
        prop_assert!((left * right).dist(&full) <= 1e-9 * scale);
    }

    #[test]
    fn fibonacci_potential_reflects(l in 0.1f64..5.0, n in 2i64..=10_000) {
        let spec = PotentialSpec::fibonacci(l);
        prop_assert_eq!(potential_value(&spec, -n).unwrap(), potential_value(&spec, n - 1).unwrap());
    }

    #[test]
    fn fibonacci_invariant_is_constant(l in 0.0f64..4.0, e in -4.0f64..4.0) {
        prop_assert!(fib_trace_orbit(l, e, 40).invariant_drift(1e6) < 1e-9);
    }

    #[test]
    fn trace_map_matches_block_products(l in 0.0f64..4.0, e in -4.0f64..4.0) {
        let orbit = fib_trace_orbit(l, e, 12);
        let blocks = fib_matrices(l, e, 12).unwrap();
        for (x, m) in orbit.xs.iter().zip(&blocks) {
            let t = m.trace().re;
            prop_assert!((x - t).abs() <= 1e-9 * t.abs().max(1.0));
        }
    }

    #[test]
    fn strong_coupling_bands_are_typed(l in 4.05f64..10.0, k in 2usize..8) {
        let set = classify_bands(l, k).unwrap();
        prop_assert!(set.is_well_formed());
        prop_assert!(set.bands.iter().all(|b| b.kind == BandKind::TypeA || b.kind == BandKind::TypeB));
    }

    #[test]
    fn approximant_bands_are_disjoint(l in 0.2f64..10.0, k in 0usize..9) {
        let set = approximant_spectrum(l, k, EDGE_TOL).unwrap();
        prop_assert!(set.is_well_formed());
        prop_assert!(set.bands.windows(2).all(|w| w[0].hi < w[1].lo));
    }

    #[test]
    fn evolution_is_unitary(spec in model(), t in 0.0f64..40.0) {
        let window = LatticeWindow::around_origin(qdyn::dynamics::window_radius(t), spec.geometry);
        let psi = evolve_state(&spec, t, &window).unwrap();
        let norm: f64 = psi.iter().map(|x| x.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn resolvent_solves_the_shifted_system(spec in model(), e in -4.0f64..5.0, eta in 0.05f64..1.0) {
        let window = LatticeWindow::around_origin(400, spec.geometry);
        let z = C64::new(e, eta);
        let phi = resolvent_vector(&spec, z, &window).unwrap();
        let pot = potential_on(&spec, &window).unwrap();
        let h_phi = apply_tridiagonal(&pot, &phi);
        let src = window.index_of(1).unwrap();
        let res: f64 = h_phi
            .iter()
            .zip(&phi)
            .enumerate()
            .map(|(i, (h, p))| (h - z * p - if i == src { 1.0 } else { 0.0 }).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let norm: f64 = phi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn growth_exponent_recovers_power_laws(beta in -3.0f64..5.0, c in -5.0f64..5.0,
                                           t0 in 1.0f64..20.0, n in 5usize..16) {
        let points = (0..n).map(|i| {
            let t = t0 * 10f64.powf(2.0 * i as f64 / (n - 1) as f64);
            (t, c + beta * t.ln())
        }).collect();
        let fit = growth_exponent(&MomentSeries { p: 2.0, points, model: "synthetic".into() }).unwrap();
        prop_assert!((fit.slope - beta).abs() <= 1e-12);
    }

    #[test]
    fn config_round_trips(l in 0.1f64..10.0, k in 1usize..20, p in 0.5f64..10.0, threads in 1usize..8) {
        let cfg = RunConfig {
            command: CommandId::Dynamics,
            model: ModelArg::Tm,
            lambda: l,
            k,
            p: vec![p, 2.0 * p],
            perturb: vec![-2, 0, 2],
            threads: Some(threads),
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.to_toml().unwrap(), cfg.to_toml().unwrap());
        let other = RunConfig { threads: None, out: Some("elsewhere".into()), ..cfg.clone() };
        prop_assert_eq!(other.hash().unwrap(), cfg.hash().unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn moments_are_ordered_power_means(spec in model(), t in 2.0f64..30.0) {
        let window = LatticeWindow::around_origin(qdyn::dynamics::window_radius(t), spec.geometry);
        let profile = profile_time(&spec, t, &window).unwrap();
        prop_assert!(profile.iter().all(|(_, a)| a >= 0.0));
        let ln_mass = profile.total_mass().ln();
        let means: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&p| (log_moment(&profile, p).unwrap() - ln_mass) / p)
            .collect();
        prop_assert!(means.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{:?}", means);
    }
}

#[test]
fn substitution_words_nest() {
    for model in [Model::PeriodDoubling, Model::ThueMorse] {
        for k in 0..14 {
            let w = substitution_word(model, k).unwrap();
            assert_eq!(apply_substitution(model, &w), substitution_word(model, k + 1).unwrap());
        }
    }
}

#[test]
fn thue_morse_level_sets_factor() {
    let near = |v: &[f64], e: f64| v.iter().any(|x| (x - e).abs() < 1e-7);
    for l in [0.5, 1.0, 2.0] {
        for k in 3..=8 {
            let level = tm_level_set(l, k);
            for &e in &level {
                let (prev, _) = subst_trace_and_slope(Model::ThueMorse, l, e, k - 1);
                let (prev2, _) = subst_trace_and_slope(Model::ThueMorse, l, e, k - 2);
                assert!((prev - 2.0).abs() < 1e-6 || prev2.abs() < 1e-6, "lambda={l} k={k} E={e}");
            }
            for e in tm_level_set(l, k - 1).into_iter().chain(tm_trace_zeros(l, k - 2)) {
                assert!(near(&level, e), "lambda={l} k={k}: {e} missing from the level set");
            }
        }
    }
}

#[test]
fn covering_holds_at_weaker_couplings() {
    for l in [1.0, 2.0] {
        for m in 2..=9 {
            assert!(covering_check(l, m).unwrap().holds, "lambda={l} m={m}");
        }
    }
}

#[test]
fn partials_bounded_on_strong_couplings() {
    for l in [4.5, 8.0] {
        let r = partial_bound_check(l, 10_000, 1e-12).unwrap();
        assert_eq!(r.violations, 0, "lambda={l}: max {}", r.max_partial);
    }
}

#[test]
fn perturbation_overlay_changes_only_listed_sites() {
    let base = PotentialSpec::thue_morse(1.0);
    let overlay: BTreeMap<i64, f64> = (-2..=2).map(|n| (n, 1.0)).collect();
    let spec = qdyn::lattice::perturb(&base, &overlay);
    for n in -50..=50 {
        let shift = potential_value(&spec, n).unwrap() - potential_value(&base, n).unwrap();
        assert_eq!(shift, if (-2..=2).contains(&n) { 1.0 } else { 0.0 });
    }
}
