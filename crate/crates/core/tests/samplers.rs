mod common;

use proptest::prelude::*;

use underlap::data::{CovariateColumn, GroupDataset};
use underlap::design::EffectSpec;
use underlap::dpm::{fit_dpm, DpmHyper, McmcSettings};
use underlap::lsbp::{fit_lsbp, LsbpHyper};
use underlap::numerics::RngStream;
use underlap::polya_gamma::sample_pg1;

fn assert_checks(checks: &[common::Check]) {
    for c in checks {
        assert!(c.within(3.0), "{c}");
    }
}

#[test]
fn single_component_dpm_matches_semi_conjugate_posterior() {
    assert_checks(&common::dpm_single_normal(3, 20_000));
}

#[test]
fn single_component_lsbp_matches_linear_regression() {
    assert_checks(&common::lsbp_linear_regression(4, 20_000));
}

#[test]
fn pg_means_match_closed_form() {
    assert_checks(&common::pg_means(100_000, 5));
}

#[test]
fn prior_tail_weight_matches_geometric_mean() {
    let c = common::tail_weight(1.0, 20, 200_000, 6);
    assert!((c.target - 9.5367e-7).abs() < 1e-10);
    assert!(c.within(3.0), "{c}");
}

#[test]
fn dpm_draw_weights_lie_on_the_simplex() {
    let mut rng = RngStream::new(8, 0);
    let y: Vec<f64> = (0..60).map(|i| ((i * 37) % 17) as f64 / 3.0 + if i % 2 == 0 { 0.0 } else { 8.0 }).collect();
    let draws = fit_dpm(&y, &DpmHyper::default(), &McmcSettings::new(50, 200), &mut rng).unwrap();
    for d in &draws {
        assert!(d.weights.iter().all(|w| *w >= 0.0));
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lsbp_draw_weights_lie_on_the_simplex_at_every_covariate_value() {
    let mut rng = RngStream::new(9, 0);
    let x: Vec<f64> = (0..80).map(|i| -1.0 + 2.0 * i as f64 / 79.0).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, xi)| xi.sin() + 0.1 * ((i * 13 % 7) as f64 - 3.0)).collect();
    let data = GroupDataset::new("g", y)
        .unwrap()
        .with_covariate("x", CovariateColumn::Continuous(x))
        .unwrap();
    let fit = fit_lsbp(
        &data,
        &EffectSpec::spline_weights("x", 2),
        &LsbpHyper::default(),
        &McmcSettings::new(50, 100),
        &mut rng,
    )
    .unwrap();
    for d in &fit.draws {
        for i in 0..data.len() {
            let (mix, _) = d.mixture_at(&data.record(i)).unwrap();
            assert!(mix.weights.iter().all(|w| *w >= 0.0));
            assert!((mix.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pg_draws_are_positive_and_symmetric_in_c(c in -20.0f64..20.0, seed in any::<u64>()) {
        let a = sample_pg1(c, &mut RngStream::new(seed, 1)).unwrap();
        let b = sample_pg1(-c, &mut RngStream::new(seed, 1)).unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
        prop_assert_eq!(a, b);
    }
}
