mod common;

use common::{budget, integrate_pieces};
use pnrres_core::model::mixture_pdf;
use pnrres_core::{JitterBudget, Mixture, ModelConfig, PerPhotonRule, PhotonSource, PnrModel};
use proptest::prelude::*;

fn rule() -> impl Strategy<Value = PerPhotonRule> {
    prop_oneof![
        (0.0..8.0f64).prop_map(PerPhotonRule::Scalar),
        (0.0..8.0f64).prop_map(PerPhotonRule::constant),
        (0.0..8.0f64).prop_map(PerPhotonRule::inverse_sqrt_n),
        prop::collection::vec(0.0..8.0f64, 8).prop_map(PerPhotonRule::List),
    ]
}

prop_compose! {
    fn model()(
        t0 in -100.0..100.0f64,
        delta_mu in 1.0..500.0f64,
        noise in 0.1..5.0f64,
        inst in 0.0..5.0f64,
        opt in 0.0..5.0f64,
        geom in rule(),
        intrinsic in rule(),
        tau in rule(),
        n_max in 2usize..=8,
    ) -> PnrModel {
        PnrModel::new(t0, delta_mu, budget(noise, inst, opt, geom, intrinsic), tau, n_max).unwrap()
    }
}

fn mixture_mass(m: &PnrModel, s: &PhotonSource) -> f64 {
    let mix = Mixture::new(m, s).unwrap();
    let mut pts = Vec::new();
    for c in &mix.components {
        pts.extend([
            c.mu - 14.0 * c.sigma,
            c.mu - 4.0 * c.sigma,
            c.mu,
            c.mu + 4.0 * c.sigma,
            c.mu + 14.0 * c.sigma + 45.0 * c.tau,
        ]);
    }
    pts.sort_by(f64::total_cmp);
    integrate_pieces(&|t| mix.pdf(t), &pts, 1e-13)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn peaks_move_earlier_with_n(m in model()) {
        for n in 1..m.n_max {
            prop_assert!(m.component(n).unwrap().mu > m.component(n + 1).unwrap().mu);
        }
    }

    #[test]
    fn separation_law_identity(m in model()) {
        for n in 1..m.n_max {
            let (a, b) = ((n as f64).sqrt(), ((n + 1) as f64).sqrt());
            let sep = m.component(n).unwrap().mu - m.component(n + 1).unwrap().mu;
            let recovered = sep * a * b / (b - a);
            // the difference of absolute centers carries rounding of |t0| + delta_mu
            let tol = 1e-9 * m.delta_mu + 4.0 * f64::EPSILON * (m.t0.abs() + m.delta_mu) * a * b / (b - a);
            prop_assert!((recovered - m.delta_mu).abs() <= tol, "n={n}: {recovered}");
            let direct = m.separation(n) * a * b / (b - a);
            prop_assert!((direct - m.delta_mu).abs() <= 1e-9 * m.delta_mu);
        }
    }

    #[test]
    fn sigma_dominates_each_contribution(m in model()) {
        for n in 1..=m.n_max {
            let s = m.sigma_n(n).unwrap();
            for c in m.jitter.contributions(n) {
                prop_assert!(s >= c);
            }
            let tot = m.sigma_tot_n(n).unwrap();
            prop_assert!(tot >= s && tot >= m.tau_n(n).unwrap());
        }
    }

    #[test]
    fn mixture_is_normalized(m in model(), mean in 0.01..6.0f64) {
        let s = PhotonSource::new(mean).unwrap();
        let mass = mixture_mass(&m, &s);
        prop_assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn click_weights_sum_to_one(mean in 1e-9..50.0f64, n_max in 1usize..40) {
        let w = PhotonSource::new(mean).unwrap().click_weights(n_max).unwrap();
        prop_assert_eq!(w.len(), n_max);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let head: f64 = w[..n_max - 1].iter().sum();
        // the last entry closes the sum, unless rounding left no tail at all
        prop_assert!(w[n_max - 1] == 1.0 - head || w[n_max - 1] == 0.0);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn model_config_round_trips(m in model(), mean in 0.1..5.0f64) {
        let s = PhotonSource::new(mean).unwrap();
        let cfg = ModelConfig::from_parts(&m, Some(&s));
        let back = ModelConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back.model().unwrap(), m);
        prop_assert_eq!(back.source().unwrap(), s);
    }
}

#[test]
fn jitter_budget_examples() {
    let m = |j: JitterBudget| PnrModel::new(0.0, 100.0, j, 0.0.into(), 6).unwrap();
    assert_eq!(m(budget(3.0, 4.0, 0.0, 0.0.into(), 0.0.into())).sigma_n(3).unwrap(), 5.0);
    assert_eq!(m(budget(0.0, 0.0, 0.0, 0.0.into(), PerPhotonRule::constant(7.0))).sigma_n(2).unwrap(), 7.0);
    assert_eq!(m(budget(0.0, 0.0, 0.0, PerPhotonRule::inverse_sqrt_n(6.0), 0.0.into())).sigma_n(4).unwrap(), 3.0);
    assert!(m(JitterBudget::default()).sigma_n(7).is_err());
    assert!(m(JitterBudget::default()).component(0).is_err());
}

#[test]
fn component_centers() {
    let m = common::constant_model(100.0, 5.0, 0.0, 6);
    assert_eq!(m.component(1).unwrap().mu, 100.0);
    assert_eq!(m.component(4).unwrap().mu, 50.0);
    let d = m.component(1).unwrap().mu - m.component(2).unwrap().mu;
    assert!((d - 29.289_321_881_345_25).abs() < 1e-10);
}

#[test]
fn poisson_weights_closed_form() {
    let w = PhotonSource::new(1.0).unwrap().click_weights(30).unwrap();
    let e = (-1f64).exp();
    assert!((w[0] - e / (1.0 - e)).abs() < 1e-15);
    assert!((w[0] - 0.58198).abs() < 1e-5);
    let w = PhotonSource::new(1e-9).unwrap().click_weights(4).unwrap();
    assert!((w[0] - 1.0).abs() < 1e-8);
    assert!(PhotonSource::new(0.0).is_err());
    assert!(PhotonSource::new(-1.0).is_err());
}

#[test]
fn vanishing_mean_mixture_is_first_component() {
    let m = common::constant_model(80.0, 4.0, 3.0, 5);
    let s = PhotonSource::new(1e-10).unwrap();
    let c1 = m.component(1).unwrap();
    for t in [60.0, 75.0, 80.0, 85.0, 100.0] {
        let d = mixture_pdf(&m, &s, t).unwrap();
        assert!((d - c1.pdf(t)).abs() < 1e-8 * c1.pdf(t).max(1.0));
    }
}

#[test]
fn overflow_mass_uses_last_component() {
    let m = common::constant_model(80.0, 4.0, 3.0, 3);
    let s = PhotonSource::new(3.0).unwrap();
    let mix = Mixture::new(&m, &s).unwrap();
    let w = s.click_weights(3).unwrap();
    // P(N >= 3 | N >= 1) sits on component 3
    let e = (-3f64).exp();
    let p1 = 3.0 * e / (1.0 - e);
    let p2 = 4.5 * e / (1.0 - e);
    assert!((w[2] - (1.0 - p1 - p2)).abs() < 1e-14);
    let t = 48.0;
    let hand: f64 = (1..=3).map(|n| w[n - 1] * m.component(n).unwrap().pdf(t)).sum();
    assert!((mix.pdf(t) - hand).abs() < 1e-16);
}

#[test]
fn config_parses_all_rule_forms() {
    let cfg = ModelConfig::from_json(
        r#"{"t0_ps": 1, "delta_mu_ps": 80, "tau_ps": {"value": 3, "law": "constant"},
            "jitter_ps": {"noise": 2, "inst": 2, "opt": 1,
                          "geom": [1, 0.5, 0.3, 0.2],
                          "intrinsic": {"value": 4, "law": "inverse-sqrt-n"}},
            "n_max": 4, "mean_photon": 1.5}"#,
    )
    .unwrap();
    let m = cfg.model().unwrap();
    assert_eq!(m.tau_n(2).unwrap(), 3.0);
    let expected = (4.0f64 + 4.0 + 1.0 + 0.25 + 16.0 / 2.0).sqrt();
    assert!((m.sigma_n(2).unwrap() - expected).abs() < 1e-14);
    assert_eq!(cfg.source().unwrap().mean_photon, 1.5);

    let short = r#"{"t0_ps": 0, "delta_mu_ps": 80, "tau_ps": [1, 2], "n_max": 4}"#;
    assert!(ModelConfig::from_json(short).unwrap().model().is_err());
    assert!(ModelConfig::from_json("{not json").is_err());
    let neg = r#"{"t0_ps": 0, "delta_mu_ps": -1, "tau_ps": 0, "n_max": 4}"#;
    assert!(ModelConfig::from_json(neg).unwrap().model().is_err());
}
