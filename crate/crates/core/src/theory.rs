//! Closed-form design quantities for the two designs and the exhaustive
//! enumeration oracle that checks them.
//!
//! Two conventions are offered. [`Convention::Paper`] drops the finite
//! population correction and uses the `N - 1` moments directly.
//! [`Convention::Exact`] keeps it: a single uniform draw from a stratum has
//! central moments `(1 - 1/N) mu_r`, and those are what enter the formulas.
//! Only the exact forms match the oracle to rounding error.

use serde::{Deserialize, Serialize};

use crate::design::{enumerate_samples, Design, EnumeratedSample};
use crate::error::{Error, Result};
use crate::estimators::{collapsed_variance, stratified_mean, true_variance, two_per_stratum_variance};
use crate::numeric::{self, CompensatedSum};
use crate::population::{summarize_stratum, FinitePopulation, StratumSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Paper,
    Exact,
}

impl Convention {
    pub const ALL: [Convention; 2] = [Convention::Paper, Convention::Exact];

    pub fn label(self) -> &'static str {
        match self {
            Convention::Paper => "paper",
            Convention::Exact => "exact",
        }
    }

    fn moment(self, s: &StratumSummary, r: u32) -> f64 {
        match (self, r) {
            (Convention::Exact, _) => s.draw_moment(r),
            (Convention::Paper, 2) => s.variance,
            (Convention::Paper, 3) => s.mu3,
            (Convention::Paper, 4) => s.mu4,
            _ => unreachable!("moments 2..=4 only"),
        }
    }
}

/// The two strata of one collapsed group with their population weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMoments {
    pub w1: f64,
    pub w2: f64,
    pub s1: StratumSummary,
    pub s2: StratumSummary,
}

impl GroupMoments {
    pub fn group_weight(&self) -> f64 {
        self.w1 + self.w2
    }

    /// `Ybar_g1 - Ybar_g2`.
    pub fn mean_gap(&self) -> f64 {
        self.s1.mean - self.s2.mean
    }

    /// Groups of `pop` in group order.
    pub fn from_population(pop: &FinitePopulation) -> Result<Vec<GroupMoments>> {
        let summaries = pop.summaries()?;
        let w = pop.weights();
        Ok(pop
            .pairs()
            .iter()
            .map(|&[a, b]| GroupMoments {
                w1: w[a],
                w2: w[b],
                s1: summaries[a],
                s2: summaries[b],
            })
            .collect())
    }

    /// `H` equally weighted groups, `W_h = 1/2H`.
    pub fn equal_weights(pairs: &[(StratumSummary, StratumSummary)]) -> Vec<GroupMoments> {
        let w = 1.0 / (2 * pairs.len()) as f64;
        pairs
            .iter()
            .map(|&(s1, s2)| GroupMoments { w1: w, w2: w, s1, s2 })
            .collect()
    }
}

/// Design bias of the collapsed estimator.
///
/// Per group: `(W_g^2/4) D^2 + (W_g^2/4 - W_1^2) m_1 + (W_g^2/4 - W_2^2) m_2`
/// where `m_i` is the second moment under the convention and the target is
/// the FPC-free true variance `sum W_h^2 S_h^2`. With equal weights this is
/// `(1/4H^2) sum D^2` under the paper convention (exactly: the variance
/// coefficients vanish) and picks up `-(S_1^2 + S_2^2)/N` terms under the
/// exact one.
pub fn collapsed_bias(groups: &[GroupMoments], convention: Convention) -> f64 {
    let mut acc = CompensatedSum::new();
    for g in groups {
        let q = g.group_weight() * g.group_weight() / 4.0;
        let d = g.mean_gap();
        acc.add(q * d * d);
        let c1 = q - g.w1 * g.w1;
        let c2 = q - g.w2 * g.w2;
        match convention {
            Convention::Paper => {
                acc.add(c1 * g.s1.variance);
                acc.add(c2 * g.s2.variance);
            }
            Convention::Exact => {
                acc.add(q * g.s1.draw_moment(2) - g.w1 * g.w1 * g.s1.variance);
                acc.add(q * g.s2.draw_moment(2) - g.w2 * g.w2 * g.s2.variance);
            }
        }
    }
    acc.total()
}

fn check_nonnegative(value: f64, scale: f64, what: &str) -> Result<f64> {
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    if value < -tol {
        return Err(Error::InternalConsistency(format!(
            "{what} evaluated to {value}; moments are inconsistent"
        )));
    }
    Ok(value.max(0.0))
}

/// Variance of the collapsed estimator under `convention`.
///
/// Per group `W_g^4/16 * {M4_1 + M4_2 + 2 M2_1 M2_2 + 4 D^2 (M2_1 + M2_2)`
/// `- (M2_1 - M2_2)^2 + 4 D (M3_1 - M3_2)}`. Under the exact convention this is
/// the variance of `(y_1 - y_2)^2` for independent single draws, so it is
/// exact; under the paper convention it is the FPC-free approximation.
pub fn collapsed_varvar(groups: &[GroupMoments], convention: Convention) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    let mut scale = CompensatedSum::new();
    for g in groups {
        let wg = g.group_weight();
        let k = wg * wg * wg * wg / 16.0;
        let d = g.mean_gap();
        let (a2, b2) = (convention.moment(&g.s1, 2), convention.moment(&g.s2, 2));
        let (a3, b3) = (convention.moment(&g.s1, 3), convention.moment(&g.s2, 3));
        let (a4, b4) = (convention.moment(&g.s1, 4), convention.moment(&g.s2, 4));
        let positive = a4 + b4 + 2.0 * a2 * b2 + 4.0 * d * d * (a2 + b2);
        let term = positive - (a2 - b2) * (a2 - b2) + 4.0 * d * (a3 - b3);
        acc.add(k * term);
        scale.add(k * (positive + (a2 - b2).powi(2) + (4.0 * d * (a3 - b3)).abs()));
    }
    check_nonnegative(acc.total(), scale.total(), "collapsed variance-of-variance")
}

/// The simplified form for equal within-group moments,
/// `W_g^4/8 * {mu4 + S^4 + 4 S^2 D^2}` per group. When the two strata differ,
/// their paper-convention moments are averaged.
pub fn collapsed_varvar_equal_moments(groups: &[GroupMoments]) -> f64 {
    numeric::sum(groups.iter().map(|g| {
        let wg = g.group_weight();
        let k = wg * wg * wg * wg / 8.0;
        let s2 = (g.s1.variance + g.s2.variance) / 2.0;
        let mu4 = (g.s1.mu4 + g.s2.mu4) / 2.0;
        let d = g.mean_gap();
        k * (mu4 + s2 * s2 + 4.0 * s2 * d * d)
    }))
}

/// `Var(v) + Bias(v)^2` with both parts under `convention`.
pub fn collapsed_mse(groups: &[GroupMoments], convention: Convention) -> Result<f64> {
    let bias = collapsed_bias(groups, convention);
    Ok(collapsed_varvar(groups, convention)? + bias * bias)
}

/// Equal-moments MSE composition: the simplified
/// variance plus `sum_g W_g^4/16 * D^4`.
pub fn collapsed_mse_printed(groups: &[GroupMoments]) -> f64 {
    let extra = numeric::sum(groups.iter().map(|g| {
        let wg = g.group_weight();
        let d2 = g.mean_gap() * g.mean_gap();
        wg * wg * wg * wg / 16.0 * d2 * d2
    }));
    collapsed_varvar_equal_moments(groups) + extra
}

/// Variance of the two-per-stratum estimator (with FPC) on `pop`.
///
/// Exact: for two draws without replacement from `M` units with centered
/// sums `c2`, `c4`, `E d^2 = 2 c2/(M-1)` and
/// `E d^4 = (2 M c4 + 6 c2^2)/(M (M-1))`. Paper: `Var(s^2) = (mu4 + S^4)/2`
/// and the FPC is dropped.
pub fn two_per_stratum_varvar(pop: &FinitePopulation, convention: Convention) -> Result<f64> {
    let weights = pop.group_weights();
    let mut acc = CompensatedSum::new();
    for (g, &w) in weights.iter().enumerate() {
        let merged = pop.merged_group(g);
        let m = merged.len() as f64;
        let term = match convention {
            Convention::Exact => {
                let mean = numeric::mean(&merged);
                let c2 = numeric::sum(merged.iter().map(|y| (y - mean).powi(2)));
                let c4 = numeric::sum(merged.iter().map(|y| (y - mean).powi(4)));
                let ed2 = 2.0 * c2 / (m - 1.0);
                let ed4 = (2.0 * m * c4 + 6.0 * c2 * c2) / (m * (m - 1.0));
                let var_s2 = (ed4 - ed2 * ed2) / 4.0;
                let coef = w * w * (1.0 - 2.0 / m) / 2.0;
                coef * coef * var_s2
            }
            Convention::Paper => {
                let s = summarize_stratum(&merged)?;
                let coef = w * w / 2.0;
                coef * coef * (s.mu4 + s.variance * s.variance) / 2.0
            }
        };
        acc.add(term);
    }
    check_nonnegative(acc.total(), acc.total().abs(), "two-per-stratum variance-of-variance")
}

/// `V2 / V1` from the finite-population true variances (FPC kept).
pub fn design_effect(pop: &FinitePopulation) -> Result<f64> {
    let v1 = true_variance(pop, Design::OnePerStratum, false)?;
    let v2 = true_variance(pop, Design::TwoPerStratum, false)?;
    if !(v1 > 0.0) {
        return Err(Error::DegeneratePopulation(
            "one-per-stratum true variance is zero; design effect undefined".into(),
        ));
    }
    Ok(v2 / v1)
}

/// Design effect from the large-population decomposition
/// `V2 - V1 = sum_g [c_1 S_1^2 + c_2 S_2^2 + (W_1 W_2 / 2) D^2]` with
/// `c_i = (W_g/2) W_i - W_i^2`. Equal sizes and equal means give exactly 1.
pub fn design_effect_paper(groups: &[GroupMoments]) -> Result<f64> {
    let mut v1 = CompensatedSum::new();
    let mut gap = CompensatedSum::new();
    for g in groups {
        let half = g.group_weight() / 2.0;
        let d = g.mean_gap();
        v1.add(g.w1 * g.w1 * g.s1.variance);
        v1.add(g.w2 * g.w2 * g.s2.variance);
        gap.add((half * g.w1 - g.w1 * g.w1) * g.s1.variance);
        gap.add((half * g.w2 - g.w2 * g.w2) * g.s2.variance);
        gap.add(g.w1 * g.w2 / 2.0 * d * d);
    }
    let v1 = v1.total();
    if !(v1 > 0.0) {
        return Err(Error::DegeneratePopulation(
            "one-per-stratum variance is zero; design effect undefined".into(),
        ));
    }
    Ok(1.0 + gap.total() / v1)
}

/// Sample statistics the oracle can average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `ybar_st` under the enumerated design.
    Mean,
    /// Collapsed estimator (one-per-stratum design only).
    Collapsed,
    /// Square of the collapsed estimator.
    CollapsedSquared,
    /// Two-per-stratum estimator with FPC (two-per-stratum design only).
    TwoPerStratum,
}

impl Statistic {
    fn required_design(self) -> Option<Design> {
        match self {
            Statistic::Mean => None,
            Statistic::Collapsed | Statistic::CollapsedSquared => Some(Design::OnePerStratum),
            Statistic::TwoPerStratum => Some(Design::TwoPerStratum),
        }
    }

    fn evaluate(self, pop: &FinitePopulation, weights: &[f64], s: &EnumeratedSample) -> Result<f64> {
        Ok(match self {
            Statistic::Mean => stratified_mean(&s.draw, weights)?.value,
            Statistic::Collapsed => collapsed_variance(&s.draw, pop.group_of())?.value,
            Statistic::CollapsedSquared => collapsed_variance(&s.draw, pop.group_of())?.value.powi(2),
            Statistic::TwoPerStratum => two_per_stratum_variance(&s.draw, weights, false)?.value,
        })
    }
}

fn oracle_values(pop: &FinitePopulation, design: Design, statistic: Statistic, cap: u64) -> Result<Vec<f64>> {
    if let Some(required) = statistic.required_design() {
        if required != design {
            return Err(Error::config(format!(
                "statistic {statistic:?} is defined under the {} design, not {}",
                required.label(),
                design.label()
            )));
        }
    }
    let weights = design.weights(pop);
    enumerate_samples(pop, design, cap)?
        .map(|s| statistic.evaluate(pop, &weights, &s))
        .collect()
}

/// Exact expectation of `statistic` over every sample of `design`.
pub fn oracle_expectation(pop: &FinitePopulation, design: Design, statistic: Statistic, cap: u64) -> Result<f64> {
    let values = oracle_values(pop, design, statistic, cap)?;
    Ok(numeric::mean(&values))
}

/// Exact variance of `statistic` over every sample of `design`, computed
/// about the exact mean.
pub fn oracle_variance(pop: &FinitePopulation, design: Design, statistic: Statistic, cap: u64) -> Result<f64> {
    let values = oracle_values(pop, design, statistic, cap)?;
    let mean = numeric::mean(&values);
    Ok(numeric::sum(values.iter().map(|v| (v - mean) * (v - mean))) / values.len() as f64)
}

/// Oracle results attached to a theory row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleColumns {
    pub expectation: f64,
    pub variance: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub design: Design,
    pub convention: Convention,
    /// True variance the bias is measured against: FPC-free under the paper
    /// convention for the one-per-stratum design, with FPC otherwise.
    pub v: f64,
    /// True variance with FPC.
    pub v_fpc: f64,
    pub bias: f64,
    pub var_v: f64,
    pub mse: f64,
    /// Equal-moments MSE composition (one-per-stratum only).
    pub mse_printed: Option<f64>,
    pub oracle: Option<OracleColumns>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub rows: Vec<TheoryRow>,
    /// `V2 / V1` with FPC.
    pub deff: f64,
    pub deff_paper: f64,
}

fn oracle_columns(pop: &FinitePopulation, design: Design, v: f64, cap: u64) -> Result<Option<OracleColumns>> {
    let statistic = match design {
        Design::OnePerStratum => Statistic::Collapsed,
        Design::TwoPerStratum => Statistic::TwoPerStratum,
    };
    let values = match oracle_values(pop, design, statistic, cap) {
        Ok(v) => v,
        Err(Error::OracleInfeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let expectation = numeric::mean(&values);
    let variance = numeric::sum(values.iter().map(|x| (x - expectation) * (x - expectation))) / values.len() as f64;
    Ok(Some(OracleColumns {
        expectation,
        variance,
        bias: expectation - v,
    }))
}

fn design_row(
    pop: &FinitePopulation,
    groups: &[GroupMoments],
    design: Design,
    convention: Convention,
    oracle_cap: Option<u64>,
) -> Result<TheoryRow> {
    let v_fpc = true_variance(pop, design, false)?;
    let (v, bias, var_v, mse_printed) = match design {
        Design::OnePerStratum => {
            let v = true_variance(pop, design, true)?;
            let printed = collapsed_mse_printed(groups);
            (
                v,
                collapsed_bias(groups, convention),
                collapsed_varvar(groups, convention)?,
                Some(printed),
            )
        }
        Design::TwoPerStratum => (v_fpc, 0.0, two_per_stratum_varvar(pop, convention)?, None),
    };
    let oracle = match (oracle_cap, convention) {
        (Some(cap), Convention::Exact) => oracle_columns(pop, design, v, cap)?,
        _ => None,
    };
    Ok(TheoryRow {
        design,
        convention,
        v,
        v_fpc,
        bias,
        var_v,
        mse: var_v + bias * bias,
        mse_printed,
        oracle,
    })
}

/// One row per (design, convention). Oracle columns are filled on the exact
/// rows when `oracle_cap` is given and the enumeration fits under it.
pub fn theory_report(pop: &FinitePopulation, designs: &[Design], oracle_cap: Option<u64>) -> Result<TheoryReport> {
    let groups = GroupMoments::from_population(pop)?;
    let mut rows = Vec::new();
    for &design in designs {
        for convention in Convention::ALL {
            rows.push(design_row(pop, &groups, design, convention, oracle_cap)?);
        }
    }
    Ok(TheoryReport {
        rows,
        deff: design_effect(pop)?,
        deff_paper: design_effect_paper(&groups)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DEFAULT_ENUMERATION_CAP;
    use proptest::prelude::*;

    fn summary(values: &[f64]) -> StratumSummary {
        summarize_stratum(values).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    fn small_pop() -> FinitePopulation {
        FinitePopulation::with_adjacent_pairs(vec![
            vec![1.0, 4.0, 2.0],
            vec![7.0, 3.0, 9.5],
            vec![0.5, 0.0, 6.0],
            vec![2.0, 2.5, 11.0],
        ])
        .unwrap()
    }

    #[test]
    fn paper_bias_is_zero_with_equal_means() {
        let groups = GroupMoments::equal_weights(&[
            (summary(&[0.0, 2.0, 4.0]), summary(&[1.0, 2.0, 3.0])),
            (summary(&[5.0, 5.0]), summary(&[4.0, 6.0])),
        ]);
        assert_eq!(collapsed_bias(&groups, Convention::Paper), 0.0);
    }

    #[test]
    fn paper_bias_single_group_hand_value() {
        let groups = GroupMoments::equal_weights(&[(summary(&[1.0, 3.0]), summary(&[3.0, 5.0]))]);
        assert_eq!(collapsed_bias(&groups, Convention::Paper), 1.0);
    }

    #[test]
    fn paper_bias_ignores_spreads() {
        let a = GroupMoments::equal_weights(&[(summary(&[1.0, 3.0]), summary(&[3.0, 5.0]))]);
        let b = GroupMoments::equal_weights(&[(summary(&[-8.0, 12.0]), summary(&[3.9, 4.1]))]);
        assert_eq!(
            collapsed_bias(&a, Convention::Paper),
            collapsed_bias(&b, Convention::Paper)
        );
    }

    #[test]
    fn exact_bias_matches_oracle() {
        let pop = small_pop();
        let groups = GroupMoments::from_population(&pop).unwrap();
        let ev = oracle_expectation(
            &pop,
            Design::OnePerStratum,
            Statistic::Collapsed,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        let v = true_variance(&pop, Design::OnePerStratum, true).unwrap();
        assert!(rel_close(ev - v, collapsed_bias(&groups, Convention::Exact), 1e-12));
        // against the FPC variance the paper form is exact
        let v_fpc = true_variance(&pop, Design::OnePerStratum, false).unwrap();
        assert!(rel_close(ev - v_fpc, collapsed_bias(&groups, Convention::Paper), 1e-12));
    }

    #[test]
    fn exact_varvar_matches_oracle() {
        let pop = small_pop();
        let groups = GroupMoments::from_population(&pop).unwrap();
        let var = oracle_variance(
            &pop,
            Design::OnePerStratum,
            Statistic::Collapsed,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        assert!(rel_close(
            var,
            collapsed_varvar(&groups, Convention::Exact).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn exact_two_per_stratum_varvar_matches_oracle() {
        let pop = small_pop();
        let var = oracle_variance(
            &pop,
            Design::TwoPerStratum,
            Statistic::TwoPerStratum,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        assert!(rel_close(
            var,
            two_per_stratum_varvar(&pop, Convention::Exact).unwrap(),
            1e-12
        ));
        let ev = oracle_expectation(
            &pop,
            Design::TwoPerStratum,
            Statistic::TwoPerStratum,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        assert!(rel_close(
            ev,
            true_variance(&pop, Design::TwoPerStratum, false).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn oracle_mean_is_unbiased() {
        let pop = small_pop();
        for design in [Design::OnePerStratum, Design::TwoPerStratum] {
            let m = oracle_expectation(&pop, design, Statistic::Mean, DEFAULT_ENUMERATION_CAP).unwrap();
            assert!(rel_close(m, pop.mean(), 1e-12));
        }
    }

    #[test]
    fn oracle_rejects_mismatched_statistic() {
        let pop = small_pop();
        let r = oracle_expectation(
            &pop,
            Design::TwoPerStratum,
            Statistic::Collapsed,
            DEFAULT_ENUMERATION_CAP,
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = oracle_expectation(&pop, Design::OnePerStratum, Statistic::Mean, 10);
        assert!(matches!(r, Err(Error::OracleInfeasible { .. })));
    }

    #[test]
    fn varvar_constant_strata_is_zero() {
        let groups = GroupMoments::equal_weights(&[(summary(&[2.0, 2.0]), summary(&[2.0, 2.0, 2.0]))]);
        assert_eq!(collapsed_varvar(&groups, Convention::Paper).unwrap(), 0.0);
        assert_eq!(collapsed_varvar_equal_moments(&groups), 0.0);
    }

    #[test]
    fn varvar_rejects_inconsistent_moments() {
        let bad = StratumSummary {
            size: 10,
            mean: 0.0,
            variance: 10.0,
            mu3: 0.0,
            mu4: 0.0,
        };
        let zero = StratumSummary { variance: 0.0, ..bad };
        let groups = GroupMoments::equal_weights(&[(bad, zero)]);
        assert!(matches!(
            collapsed_varvar(&groups, Convention::Paper),
            Err(Error::InternalConsistency(_))
        ));
    }

    #[test]
    fn printed_mse_hand_value() {
        let s = |mean: f64| StratumSummary {
            size: 100,
            mean,
            variance: 1.0,
            mu3: 0.0,
            mu4: 1.0,
        };
        let groups = GroupMoments::equal_weights(&[(s(0.0), s(2.0))]);
        assert_eq!(collapsed_mse_printed(&groups), 3.25);
    }

    #[test]
    fn mse_equals_var_with_equal_means() {
        let groups = GroupMoments::equal_weights(&[(summary(&[0.0, 2.0, 4.0]), summary(&[1.0, 3.0, 2.0]))]);
        let var = collapsed_varvar(&groups, Convention::Paper).unwrap();
        assert_eq!(collapsed_mse(&groups, Convention::Paper).unwrap(), var);
    }

    #[test]
    fn mse_falls_when_groups_are_replicated() {
        let pair = (summary(&[0.0, 2.0, 5.0]), summary(&[3.0, 4.0, 9.0]));
        let one = GroupMoments::equal_weights(&[pair]);
        let two = GroupMoments::equal_weights(&[pair, pair]);
        assert!(collapsed_mse_printed(&two) < collapsed_mse_printed(&one));
        assert!(collapsed_mse(&two, Convention::Paper).unwrap() < collapsed_mse(&one, Convention::Paper).unwrap());
    }

    #[test]
    fn paper_deff_is_one_with_equal_means() {
        let pop = FinitePopulation::with_adjacent_pairs(vec![
            vec![0.0, 2.0, 4.0],
            vec![-7.0, 2.0, 11.0],
            vec![5.0, 6.0, 7.0],
            vec![6.0, 6.0, 6.0],
        ])
        .unwrap();
        let groups = GroupMoments::from_population(&pop).unwrap();
        assert_eq!(design_effect_paper(&groups).unwrap(), 1.0);
    }

    #[test]
    fn exact_deff_with_identical_strata() {
        // identical strata of size N: deff = 2(N - 1)/(2N - 1)
        let s = vec![1.0, 2.0, 4.0, 8.0];
        let pop = FinitePopulation::with_adjacent_pairs(vec![s.clone(), s]).unwrap();
        let deff = design_effect(&pop).unwrap();
        assert!(rel_close(deff, 6.0 / 7.0, 1e-14));
    }

    #[test]
    fn deff_degenerate_population() {
        let pop = FinitePopulation::with_adjacent_pairs(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(design_effect(&pop), Err(Error::DegeneratePopulation(_))));
    }

    #[test]
    fn report_has_row_per_design_and_convention() {
        let pop = small_pop();
        let r = theory_report(&pop, &[Design::OnePerStratum, Design::TwoPerStratum], Some(1000)).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows {
            assert!((row.mse - (row.var_v + row.bias * row.bias)).abs() <= 1e-12 * row.mse.max(1.0));
            match row.convention {
                Convention::Exact => {
                    let o = row.oracle.expect("oracle under cap");
                    assert!(rel_close(o.variance, row.var_v, 1e-12));
                    if row.design == Design::OnePerStratum {
                        assert!(rel_close(o.bias, row.bias, 1e-12));
                    }
                }
                Convention::Paper => assert!(row.oracle.is_none()),
            }
        }
        let r = theory_report(&pop, &[Design::OnePerStratum], Some(10)).unwrap();
        assert!(r.rows.iter().all(|row| row.oracle.is_none()));
    }

    proptest! {
        #[test]
        fn equal_moment_forms_agree(
            vals in prop::collection::vec(-20.0f64..20.0, 3..8),
            shift in -5.0f64..5.0,
        ) {
            // second stratum is the first shifted: identical central moments
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            let mut a = summary(&vals);
            let mut b = summary(&shifted);
            b.variance = a.variance;
            b.mu3 = a.mu3;
            b.mu4 = a.mu4;
            a.mu3 = 0.0;
            b.mu3 = 0.0;
            let groups = GroupMoments::equal_weights(&[(a, b)]);
            let general = collapsed_varvar(&groups, Convention::Paper).unwrap();
            let simple = collapsed_varvar_equal_moments(&groups);
            prop_assert!((general - simple).abs() <= 1e-12 * general.abs().max(1e-12));
        }

        #[test]
        fn deff_is_location_scale_invariant(
            vals in prop::collection::vec(0.0f64..50.0, 12),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let strata: Vec<Vec<f64>> = vals.chunks(3).map(<[f64]>::to_vec).collect();
            let pop = FinitePopulation::with_adjacent_pairs(strata.clone()).unwrap();
            let moved = FinitePopulation::with_adjacent_pairs(
                strata.iter().map(|s| s.iter().map(|y| y * scale + shift).collect()).collect(),
            ).unwrap();
            if let (Ok(a), Ok(b)) = (design_effect(&pop), design_effect(&moved)) {
                prop_assert!(rel_close(a, b, 1e-9));
            }
        }
    }
}
