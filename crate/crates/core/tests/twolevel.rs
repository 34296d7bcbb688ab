use chaotun::twolevel::*;
use proptest::prelude::*;

#[test]
fn ode_matches_closed_form_for_physical_sweeps() {
    let s = OdeSettings::default();
    for n_acc in [1000.0, 3000.0, 6500.0] {
        let cfg = LzConfig { beta0: 0.05, n_acc, p_star: 1.3, hbar_eff: 0.2, delta: 5.2e-4 };
        let o = lz_transition(&cfg, &s).unwrap();
        let p_ode = -cfg.p_star * (1.0 - 2.0 * o.stay_ode);
        let p_closed = lz_final_momentum(n_acc, cfg.delta, cfg.p_star, cfg.beta0, cfg.hbar_eff);
        assert!(cfg.frak_h() < 15.0);
        assert!((p_ode - p_closed).abs() < 2e-4 * cfg.p_star, "{n_acc}: {p_ode} vs {p_closed}");
    }
}

#[test]
fn limits_of_the_final_momentum() {
    let f = |n| lz_final_momentum(n, 5.2e-4, 1.3, 0.05, 0.2);
    assert!((f(1e-3) - 1.3).abs() < 1e-3);
    assert!((f(1e9) + 1.3).abs() < 1e-9);
}

#[test]
fn doublet_contrast_drops_with_asymmetry() {
    let a = island_asymmetry(1.0, 0.2, 0.0286);
    let (_, frac) = asymmetric_doublet(&DoubletModel::new(0.0, a, 5e-4).unwrap(), 0.2).unwrap();
    let (t0, f0) = asymmetric_doublet(&DoubletModel::new(0.0, 0.0, 5e-4).unwrap(), 0.2).unwrap();
    assert_eq!(f0, 1.0);
    assert!((t0 - 400.0).abs() < 1e-9);
    let oracle = 25e-8 / (25e-8 + a * a);
    assert!((frac - oracle).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fit_recovers_the_splitting(delta in 1e-5f64..2e-3, p_star in 0.5f64..1.5) {
        let (beta0, hbar) = (0.05, 0.2);
        // only identifiable while some point is still mid-transfer
        let alpha = LzConfig { beta0, n_acc: 1.0, p_star, hbar_eff: hbar, delta }.alpha();
        prop_assume!(alpha * 100.0 < 5.0 && alpha * 6500.0 > 0.05);
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|i| 100.0 * 65f64.powf(i as f64 / 7.0))
            .map(|n| (n, lz_final_momentum(n, delta, p_star, beta0, hbar)))
            .collect();
        let fit = lz_fit(&pts, beta0, hbar).unwrap();
        prop_assert!((fit.amplitude / p_star - 1.0).abs() < 1e-3);
        prop_assert!((fit.extracted_delta / delta - 1.0).abs() < 1e-3, "{} vs {delta}", fit.extracted_delta);
    }
}
