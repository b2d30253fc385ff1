use proptest::prelude::*;

use stratvar::design::{Design, DEFAULT_ENUMERATION_CAP};
use stratvar::estimators::true_variance;
use stratvar::population::FinitePopulation;
use stratvar::theory::{
    collapsed_bias, collapsed_varvar, oracle_expectation, oracle_variance, two_per_stratum_varvar, Convention,
    GroupMoments, Statistic,
};

const CAP: u64 = DEFAULT_ENUMERATION_CAP;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(a.abs()).max(b.abs()).max(1e-300)
}

fn tiny_population() -> impl Strategy<Value = FinitePopulation> {
    (1usize..=3)
        .prop_flat_map(|groups| prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 2..=4), 2 * groups))
        .prop_map(|strata| FinitePopulation::with_adjacent_pairs(strata).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mean_is_design_unbiased(pop in tiny_population()) {
        for design in [Design::OnePerStratum, Design::TwoPerStratum] {
            let m = oracle_expectation(&pop, design, Statistic::Mean, CAP).unwrap();
            prop_assert!(rel(m, pop.mean(), 1.0) < 1e-12);
        }
    }

    #[test]
    fn two_per_stratum_estimator_is_unbiased(pop in tiny_population()) {
        let e = oracle_expectation(&pop, Design::TwoPerStratum, Statistic::TwoPerStratum, CAP).unwrap();
        let v = true_variance(&pop, Design::TwoPerStratum, false).unwrap();
        prop_assert!(rel(e, v, 0.0) < 1e-12);
        let var = oracle_variance(&pop, Design::TwoPerStratum, Statistic::TwoPerStratum, CAP).unwrap();
        let formula = two_per_stratum_varvar(&pop, Convention::Exact).unwrap();
        prop_assert!(rel(var, formula, 0.0) < 1e-11);
    }

    #[test]
    fn collapsed_bias_and_variance_are_exact(pop in tiny_population()) {
        let groups = GroupMoments::from_population(&pop).unwrap();
        let ev = oracle_expectation(&pop, Design::OnePerStratum, Statistic::Collapsed, CAP).unwrap();
        let v = true_variance(&pop, Design::OnePerStratum, true).unwrap();
        prop_assert!(rel(ev - v, collapsed_bias(&groups, Convention::Exact), ev) < 1e-12);
        // with equal sizes inside each group the FPC-free form equals the bias against the FPC variance
        if groups.iter().all(|g| g.w1 == g.w2) {
            let v_fpc = true_variance(&pop, Design::OnePerStratum, false).unwrap();
            prop_assert!(rel(ev - v_fpc, collapsed_bias(&groups, Convention::Paper), ev) < 1e-12);
        }
        let var = oracle_variance(&pop, Design::OnePerStratum, Statistic::Collapsed, CAP).unwrap();
        prop_assert!(rel(var, collapsed_varvar(&groups, Convention::Exact).unwrap(), 0.0) < 1e-12);
        // second moment route agrees with the two-pass variance
        let e2 = oracle_expectation(&pop, Design::OnePerStratum, Statistic::CollapsedSquared, CAP).unwrap();
        prop_assert!(rel(e2 - ev * ev, var, e2) < 1e-9);
    }

    #[test]
    fn collapsed_estimator_is_never_below_zero(pop in tiny_population()) {
        let v = oracle_expectation(&pop, Design::OnePerStratum, Statistic::Collapsed, CAP).unwrap();
        prop_assert!(v >= 0.0);
    }
}

#[test]
fn paper_bias_unchanged_by_spread() {
    // same stratum means, wider spreads
    let narrow = FinitePopulation::with_adjacent_pairs(vec![vec![1.0, 3.0], vec![4.0, 6.0]]).unwrap();
    let wide = FinitePopulation::with_adjacent_pairs(vec![vec![-8.0, 12.0], vec![-5.0, 15.0]]).unwrap();
    let a = collapsed_bias(&GroupMoments::from_population(&narrow).unwrap(), Convention::Paper);
    let b = collapsed_bias(&GroupMoments::from_population(&wide).unwrap(), Convention::Paper);
    assert_eq!(a, b);
    assert_eq!(a, 9.0 / 4.0);
}

#[test]
fn paper_form_gap_shrinks_with_stratum_size() {
    let mut gaps = Vec::new();
    for n in [4usize, 16, 64] {
        let grid = |f: fn(f64) -> f64| (0..n).map(|j| f((j as f64 + 0.5) / n as f64)).collect::<Vec<_>>();
        let pop = FinitePopulation::with_adjacent_pairs(vec![grid(|t| t * t), grid(|t| 1.0 + t)]).unwrap();
        let groups = GroupMoments::from_population(&pop).unwrap();
        let var = oracle_variance(&pop, Design::OnePerStratum, Statistic::Collapsed, CAP).unwrap();
        gaps.push((collapsed_varvar(&groups, Convention::Paper).unwrap() - var).abs() / var);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}
