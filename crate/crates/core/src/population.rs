//! Finite populations: generation, stratification and exact stratum moments.
//!
//! Two generators are provided. The bivariate gamma superpopulation draws
//! `(x, y)` pairs with `x ~ Gamma(shape 2, scale 5)` and
//! `y | x ~ Gamma(shape c(x), scale b(x))`, then forms equal-count strata on
//! the order statistics of `x`. The normal-groups generator builds each
//! stratum directly from a normal law whose mean and variance are set by a
//! case study and a per-group multiplier.
//!
//! All central moments use the `N - 1` denominator (`r = 2, 3, 4`).

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// How the second stratum of each group differs from the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStudy {
    EqMeanEqVar,
    NeqMeanEqVar,
    NeqMeanNeqVar,
    EqMeanNeqVar,
}

impl CaseStudy {
    pub const ALL: [CaseStudy; 4] = [
        CaseStudy::EqMeanEqVar,
        CaseStudy::NeqMeanEqVar,
        CaseStudy::NeqMeanNeqVar,
        CaseStudy::EqMeanNeqVar,
    ];

    /// Factors applied to the group's (mean, variance) multipliers for the
    /// second stratum. The first stratum always uses factor 1.
    pub fn second_stratum_factors(self) -> (f64, f64) {
        match self {
            CaseStudy::EqMeanEqVar => (1.0, 1.0),
            CaseStudy::NeqMeanEqVar => (2.0, 1.0),
            CaseStudy::NeqMeanNeqVar => (2.0, 2.0),
            CaseStudy::EqMeanNeqVar => (1.0, 2.0),
        }
    }

    pub fn has_equal_means(self) -> bool {
        self.second_stratum_factors().0 == 1.0
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseStudy::EqMeanEqVar => "eq_mean_eq_var",
            CaseStudy::NeqMeanEqVar => "neq_mean_eq_var",
            CaseStudy::NeqMeanNeqVar => "neq_mean_neq_var",
            CaseStudy::EqMeanNeqVar => "eq_mean_neq_var",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalGroupsSpec {
    pub case_study: CaseStudy,
    pub base_mean: f64,
    pub base_variance: f64,
    /// Per-group `(mean multiplier, variance multiplier)` for the first
    /// stratum of the group.
    pub multipliers: Vec<(f64, f64)>,
}

impl NormalGroupsSpec {
    /// Multipliers `(g, g)` for groups `g = 1..=group_count`.
    pub fn default_multipliers(group_count: usize) -> Vec<(f64, f64)> {
        (1..=group_count).map(|g| (g as f64, g as f64)).collect()
    }

    pub fn new(case_study: CaseStudy, base_mean: f64, base_variance: f64, group_count: usize) -> Self {
        Self {
            case_study,
            base_mean,
            base_variance,
            multipliers: Self::default_multipliers(group_count),
        }
    }

    /// Target `(mean, variance)` of stratum `i` (0 or 1) in group `g` (0-based).
    pub fn stratum_law(&self, g: usize, i: usize) -> (f64, f64) {
        let (km, kv) = self.multipliers[g];
        let (fm, fv) = if i == 0 {
            (1.0, 1.0)
        } else {
            self.case_study.second_stratum_factors()
        };
        (self.base_mean + fm * km, fv * kv * self.base_variance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationKind {
    BivariateGamma,
    NormalGroups(NormalGroupsSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub kind: PopulationKind,
    pub total_units: usize,
    pub strata_count: usize,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn bivariate_gamma(total_units: usize, strata_count: usize, seed: u64) -> Self {
        Self {
            kind: PopulationKind::BivariateGamma,
            total_units,
            strata_count,
            seed,
        }
    }

    pub fn normal_groups(spec: NormalGroupsSpec, total_units: usize, strata_count: usize, seed: u64) -> Self {
        Self {
            kind: PopulationKind::NormalGroups(spec),
            total_units,
            strata_count,
            seed,
        }
    }

    pub fn group_count(&self) -> usize {
        self.strata_count / 2
    }

    pub fn stratum_size(&self) -> usize {
        self.total_units / self.strata_count
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_units == 0 {
            return Err(Error::config("total_units must be positive"));
        }
        if self.strata_count == 0 || !self.strata_count.is_multiple_of(2) {
            return Err(Error::config(format!(
                "strata_count must be a positive even integer, got {}",
                self.strata_count
            )));
        }
        if !self.total_units.is_multiple_of(self.strata_count) {
            return Err(Error::config(format!(
                "total_units {} is not divisible by strata_count {}",
                self.total_units, self.strata_count
            )));
        }
        if let PopulationKind::NormalGroups(ng) = &self.kind {
            if ng.multipliers.len() != self.group_count() {
                return Err(Error::config(format!(
                    "expected {} multiplier pairs, got {}",
                    self.group_count(),
                    ng.multipliers.len()
                )));
            }
            if !(ng.base_variance > 0.0) || !ng.base_variance.is_finite() {
                return Err(Error::config(format!(
                    "base_variance must be positive and finite, got {}",
                    ng.base_variance
                )));
            }
            if !ng.base_mean.is_finite() {
                return Err(Error::config("base_mean must be finite"));
            }
            if let Some((g, _)) = ng
                .multipliers
                .iter()
                .enumerate()
                .find(|(_, (m, v))| !(*v > 0.0) || !m.is_finite() || !v.is_finite())
            {
                return Err(Error::config(format!(
                    "group {} has a nonpositive or non-finite variance multiplier",
                    g + 1
                )));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<FinitePopulation> {
        match self.kind {
            PopulationKind::BivariateGamma => generate_bivariate_gamma(self),
            PopulationKind::NormalGroups(_) => generate_normal_groups(self),
        }
    }
}

/// Finite-population moments of one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub size: usize,
    pub mean: f64,
    /// `S^2`, denominator `N - 1`.
    pub variance: f64,
    /// Third central moment, denominator `N - 1`.
    pub mu3: f64,
    /// Fourth central moment, denominator `N - 1`.
    pub mu4: f64,
}

impl StratumSummary {
    /// Central moment `E(y - Ybar)^r` of a single uniform draw, i.e. the
    /// moment with denominator `N`: `(1 - 1/N) * mu_r`.
    pub fn draw_moment(&self, r: u32) -> f64 {
        let factor = 1.0 - 1.0 / self.size as f64;
        match r {
            2 => factor * self.variance,
            3 => factor * self.mu3,
            4 => factor * self.mu4,
            _ => panic!("draw_moment supports r = 2, 3, 4"),
        }
    }
}

/// Exact mean and central moments of a list of values.
///
/// The input is sorted before summation, so the result does not depend on
/// input order.
pub fn summarize_stratum(values: &[f64]) -> Result<StratumSummary> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "stratum summary needs at least 2 values, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = numeric::mean(&sorted);
    let mut m2 = numeric::CompensatedSum::new();
    let mut m3 = numeric::CompensatedSum::new();
    let mut m4 = numeric::CompensatedSum::new();
    for &v in &sorted {
        let d = v - mean;
        let d2 = d * d;
        m2.add(d2);
        m3.add(d2 * d);
        m4.add(d2 * d2);
    }
    Ok(StratumSummary {
        size: sorted.len(),
        mean,
        variance: m2.total() / (n - 1.0),
        mu3: m3.total() / (n - 1.0),
        mu4: m4.total() / (n - 1.0),
    })
}

/// A stratified finite population with strata collapsed in pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    strata: Vec<Vec<f64>>,
    auxiliary: Option<Vec<Vec<f64>>>,
    group_of: Vec<usize>,
    pairs: Vec<[usize; 2]>,
    weights: Vec<f64>,
    total: usize,
}

impl FinitePopulation {
    /// Build a population from per-stratum values and a stratum → group map.
    ///
    /// Groups must be numbered `0..H` and each must hold exactly two strata.
    pub fn new(strata: Vec<Vec<f64>>, group_of: Vec<usize>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::shape("population has no strata"));
        }
        if strata.len() != group_of.len() {
            return Err(Error::shape(format!(
                "{} strata but {} group assignments",
                strata.len(),
                group_of.len()
            )));
        }
        if let Some(h) = strata.iter().position(|s| s.is_empty()) {
            return Err(Error::shape(format!("stratum {} is empty", h + 1)));
        }
        let group_count = group_of.iter().max().map_or(0, |g| g + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); group_count];
        for (h, &g) in group_of.iter().enumerate() {
            members[g].push(h);
        }
        let mut pairs = Vec::with_capacity(group_count);
        for (g, m) in members.iter().enumerate() {
            if m.len() != 2 {
                return Err(Error::shape(format!(
                    "group {} has {} strata; every group needs exactly 2",
                    g + 1,
                    m.len()
                )));
            }
            pairs.push([m[0], m[1]]);
        }
        let total: usize = strata.iter().map(Vec::len).sum();
        let weights = strata.iter().map(|s| s.len() as f64 / total as f64).collect();
        Ok(Self {
            strata,
            auxiliary: None,
            group_of,
            pairs,
            weights,
            total,
        })
    }

    /// Adjacent pairing: strata `(2g, 2g + 1)` form group `g`.
    pub fn with_adjacent_pairs(strata: Vec<Vec<f64>>) -> Result<Self> {
        if !strata.len().is_multiple_of(2) {
            return Err(Error::shape(format!(
                "adjacent pairing needs an even number of strata, got {}",
                strata.len()
            )));
        }
        let group_of = (0..strata.len()).map(|h| h / 2).collect();
        Self::new(strata, group_of)
    }

    pub fn with_auxiliary(mut self, x: Vec<Vec<f64>>) -> Result<Self> {
        let same_shape = x.len() == self.strata.len() && x.iter().zip(&self.strata).all(|(a, b)| a.len() == b.len());
        if !same_shape {
            return Err(Error::shape("auxiliary values do not match stratum layout"));
        }
        self.auxiliary = Some(x);
        Ok(self)
    }

    pub fn strata(&self) -> &[Vec<f64>] {
        &self.strata
    }

    pub fn stratum(&self, h: usize) -> &[f64] {
        &self.strata[h]
    }

    pub fn auxiliary(&self) -> Option<&[Vec<f64>]> {
        self.auxiliary.as_deref()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    /// The two strata of each group, lower index first.
    pub fn pairs(&self) -> &[[usize; 2]] {
        &self.pairs
    }

    /// Stratum weights `W_h = N_h / N_T`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Group weights `W_g = W_g1 + W_g2`.
    pub fn group_weights(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|[a, b]| self.weights[*a] + self.weights[*b])
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.strata.iter().map(Vec::len).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|[a, b]| self.strata[*a].len() + self.strata[*b].len())
            .collect()
    }

    pub fn total_units(&self) -> usize {
        self.total
    }

    pub fn strata_count(&self) -> usize {
        self.strata.len()
    }

    pub fn group_count(&self) -> usize {
        self.pairs.len()
    }

    /// Values of group `g` with its two strata concatenated (lower stratum first).
    pub fn merged_group(&self, g: usize) -> Vec<f64> {
        let [a, b] = self.pairs[g];
        self.strata[a].iter().chain(&self.strata[b]).copied().collect()
    }

    /// Population mean `Ybar = sum_h W_h Ybar_h`.
    pub fn mean(&self) -> f64 {
        numeric::sum(self.strata.iter().flatten().copied()) / self.total as f64
    }

    pub fn summaries(&self) -> Result<Vec<StratumSummary>> {
        self.strata.iter().map(|s| summarize_stratum(s)).collect()
    }

    /// Mean and sample variance (denominator `N - 1`) of all `y` values.
    pub fn overall_moments(&self) -> (f64, f64) {
        let all: Vec<f64> = self.strata.iter().flatten().copied().collect();
        (numeric::mean(&all), numeric::sample_variance(&all))
    }
}

fn gamma_y_params(x: f64) -> (f64, f64) {
    let t = 8.0 + 5.0 * x;
    let x15 = x * x.sqrt();
    let shape = 0.04 * t * t / x15;
    let scale = 1.25 * x15 / t;
    (shape, scale)
}

/// Draw the bivariate gamma population and stratify on the order of `x`.
///
/// Units are ranked by `(x, generation index)` and rank `r` goes to stratum
/// `r / N_h`, so boundary ties land in the lower stratum and all strata have
/// exactly `N_h` units. Within a stratum, units keep generation order.
pub fn generate_bivariate_gamma(spec: &PopulationSpec) -> Result<FinitePopulation> {
    if spec.kind != PopulationKind::BivariateGamma {
        return Err(Error::config("generate_bivariate_gamma called with a non-gamma spec"));
    }
    spec.validate()?;
    let n = spec.total_units;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x_law = Gamma::new(2.0, 5.0).expect("valid gamma parameters");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = loop {
            let v: f64 = x_law.sample(&mut rng);
            if v > 0.0 && v.is_finite() {
                break v;
            }
        };
        let (shape, scale) = gamma_y_params(x);
        let y_law =
            Gamma::new(shape, scale).map_err(|e| Error::Domain(format!("gamma(y|x={x}) parameters rejected: {e}")))?;
        xs.push(x);
        ys.push(y_law.sample(&mut rng));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| match xs[i].total_cmp(&xs[j]) {
        Ordering::Equal => i.cmp(&j),
        o => o,
    });
    let per = spec.stratum_size();
    let mut stratum_of = vec![0usize; n];
    for (rank, &unit) in order.iter().enumerate() {
        stratum_of[unit] = rank / per;
    }
    let mut strata = vec![Vec::with_capacity(per); spec.strata_count];
    let mut aux = vec![Vec::with_capacity(per); spec.strata_count];
    for unit in 0..n {
        strata[stratum_of[unit]].push(ys[unit]);
        aux[stratum_of[unit]].push(xs[unit]);
    }
    FinitePopulation::with_adjacent_pairs(strata)?.with_auxiliary(aux)
}

/// Draw each stratum i.i.d. normal with the case-study law of its group.
pub fn generate_normal_groups(spec: &PopulationSpec) -> Result<FinitePopulation> {
    let PopulationKind::NormalGroups(ng) = &spec.kind else {
        return Err(Error::config("generate_normal_groups called with a non-normal spec"));
    };
    spec.validate()?;
    let per = spec.stratum_size();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut strata = Vec::with_capacity(spec.strata_count);
    for g in 0..spec.group_count() {
        for i in 0..2 {
            let (mean, var) = ng.stratum_law(g, i);
            let law = Normal::new(mean, var.sqrt())
                .map_err(|e| Error::config(format!("normal law for group {}: {e}", g + 1)))?;
            strata.push((0..per).map(|_| law.sample(&mut rng)).collect());
        }
    }
    FinitePopulation::with_adjacent_pairs(strata)
}

/// `(mean(y), var(y))` of a bivariate gamma population drawn with `seed`;
/// these are the base moments of the normal-groups populations.
pub fn gamma_base_moments(total_units: usize, strata_count: usize, seed: u64) -> Result<(f64, f64)> {
    let pop = generate_bivariate_gamma(&PopulationSpec::bivariate_gamma(total_units, strata_count, seed))?;
    Ok(pop.overall_moments())
}
