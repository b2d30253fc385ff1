//! Classical point and variance estimators for the two designs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{Design, SampleDraw};
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use crate::population::FinitePopulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Collapsed,
    TwoPerStratum,
    Eb,
    Ceb,
}

impl VarianceMethod {
    pub fn label(self) -> &'static str {
        match self {
            VarianceMethod::Collapsed => "collapsed",
            VarianceMethod::TwoPerStratum => "two_per_stratum",
            VarianceMethod::Eb => "eb",
            VarianceMethod::Ceb => "ceb",
        }
    }

    /// The design this estimator is defined for.
    pub fn design(self) -> Design {
        match self {
            VarianceMethod::TwoPerStratum => Design::TwoPerStratum,
            _ => Design::OnePerStratum,
        }
    }

    pub fn uses_shrinkage(self) -> bool {
        matches!(self, VarianceMethod::Eb | VarianceMethod::Ceb)
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub stratum_means: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub method: VarianceMethod,
    /// Per-group components (`s_g^2` for the classical estimators, the
    /// shrunken `delta_g` for EB/CEB).
    pub components: Vec<f64>,
}

/// `ybar_st = sum_h W_h ybar_h`.
pub fn stratified_mean(sample: &SampleDraw, weights: &[f64]) -> Result<PointEstimate> {
    if weights.len() != sample.values.len() {
        return Err(Error::shape(format!(
            "{} weights for {} sampling strata",
            weights.len(),
            sample.values.len()
        )));
    }
    let means = sample.stratum_means();
    let value = numeric::sum(means.iter().zip(weights).map(|(m, w)| w * m));
    Ok(PointEstimate {
        value,
        stratum_means: means,
        weights: weights.to_vec(),
    })
}

/// Randomization variance of `ybar_st`: `sum_h W_h^2 (1/n_h)(1 - n_h/N_h) S_h^2`.
///
/// With `ignore_fpc` the `(1 - n_h/N_h)` factor is dropped. Sampling strata
/// of size `n_h` contribute zero when the FPC is kept.
pub fn true_variance(pop: &FinitePopulation, design: Design, ignore_fpc: bool) -> Result<f64> {
    let n = design.per_stratum();
    let sizes = design.stratum_sizes(pop);
    let weights = design.weights(pop);
    let mut acc = CompensatedSum::new();
    for (s, (&m, &w)) in sizes.iter().zip(&weights).enumerate() {
        if m < n {
            return Err(Error::DesignInfeasible(format!(
                "sampling stratum {} has {} units, fewer than {}",
                s + 1,
                m,
                n
            )));
        }
        let fpc = if ignore_fpc { 1.0 } else { 1.0 - n as f64 / m as f64 };
        if fpc == 0.0 || m < 2 {
            continue;
        }
        let s2 = match design {
            Design::OnePerStratum => numeric::sample_variance(pop.stratum(s)),
            Design::TwoPerStratum => numeric::sample_variance(&pop.merged_group(s)),
        };
        acc.add(w * w * fpc * s2 / n as f64);
    }
    Ok(acc.total())
}

fn equal_sizes(sizes: &[usize]) -> bool {
    sizes.windows(2).all(|w| w[0] == w[1])
}

/// Collapsed-stratum estimator for a one-per-stratum sample.
///
/// `s_g^2 = (y_g1 - y_g2)^2 / 2` and `v = sum_g W_g^2 s_g^2 / 2`, which is
/// `(1 / 2H^2) sum_g s_g^2` when all strata have equal size (that path uses
/// the `1 / 2H^2` coefficient directly).
pub fn collapsed_variance(sample: &SampleDraw, group_of: &[usize]) -> Result<VarianceEstimate> {
    if sample.design != Design::OnePerStratum {
        return Err(Error::shape("collapsed estimator needs a one-per-stratum sample"));
    }
    if group_of.len() != sample.values.len() {
        return Err(Error::shape(format!(
            "grouping covers {} strata but the sample has {}",
            group_of.len(),
            sample.values.len()
        )));
    }
    let h = group_of.iter().max().map_or(0, |g| g + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); h];
    for (stratum, &g) in group_of.iter().enumerate() {
        members[g].push(stratum);
    }
    let mut components = Vec::with_capacity(h);
    for (g, m) in members.iter().enumerate() {
        if m.len() != 2 {
            return Err(Error::shape(format!(
                "group {} has {} sampled strata, need 2",
                g + 1,
                m.len()
            )));
        }
        let (a, b) = (&sample.values[m[0]], &sample.values[m[1]]);
        if a.len() != 1 || b.len() != 1 {
            return Err(Error::shape(format!(
                "group {} strata must hold exactly one unit",
                g + 1
            )));
        }
        let d = a[0] - b[0];
        components.push(d * d / 2.0);
    }
    let value = if equal_sizes(&sample.stratum_sizes) {
        let coef = 1.0 / (2.0 * (h * h) as f64);
        coef * numeric::sum(components.iter().copied())
    } else {
        let total: usize = sample.stratum_sizes.iter().sum();
        numeric::sum(members.iter().zip(&components).map(|(m, s2)| {
            let wg = (sample.stratum_sizes[m[0]] + sample.stratum_sizes[m[1]]) as f64 / total as f64;
            wg * wg * s2 / 2.0
        }))
    };
    Ok(VarianceEstimate {
        value,
        method: VarianceMethod::Collapsed,
        components,
    })
}

/// Unbiased stratified variance estimator for a two-per-stratum sample:
/// `sum_g W_g^2 (s_g^2 / 2)(1 - 2/N_g)` with `s_g^2 = (y_1 - y_2)^2 / 2`.
pub fn two_per_stratum_variance(sample: &SampleDraw, weights: &[f64], ignore_fpc: bool) -> Result<VarianceEstimate> {
    if sample.design != Design::TwoPerStratum {
        return Err(Error::shape("two-per-stratum estimator needs a two-per-stratum sample"));
    }
    if weights.len() != sample.values.len() {
        return Err(Error::shape(format!(
            "{} weights for {} sampling strata",
            weights.len(),
            sample.values.len()
        )));
    }
    let mut components = Vec::with_capacity(weights.len());
    let mut acc = CompensatedSum::new();
    for (s, (vals, &w)) in sample.values.iter().zip(weights).enumerate() {
        if vals.len() != 2 {
            return Err(Error::shape(format!(
                "stratum {} holds {} units, need 2",
                s + 1,
                vals.len()
            )));
        }
        let d = vals[0] - vals[1];
        let s2 = d * d / 2.0;
        let fpc = if ignore_fpc {
            1.0
        } else {
            1.0 - 2.0 / sample.stratum_sizes[s] as f64
        };
        acc.add(w * w * fpc * s2 / 2.0);
        components.push(s2);
    }
    Ok(VarianceEstimate {
        value: acc.total(),
        method: VarianceMethod::TwoPerStratum,
        components,
    })
}
