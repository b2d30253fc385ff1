//! Empirical Bayes and constrained empirical Bayes estimators of the group
//! variances for the one-PSU-per-stratum design.
//!
//! Model: `s_g^2 / S_g^2 ~ chi^2(1)` with prior `S_g^2 ~ Inv-Gamma(a, a)`.
//! The posterior is `Inv-Gamma(a + 1/2, a + s_g^2/2)`, whose mean is the
//! Bayes estimator `(2a + s_g^2) / (2a - 1)`. The prior parameter is fitted by
//! moments, `a_MM = s.^2 / (s.^2 - 1)`, and truncated below at `1.5 + e`
//! so that every posterior quantity used here exists.
//!
//! The constrained estimator keeps the ensemble mean of the EB estimates and
//! re-expands their spread about it so that the ensemble variance matches
//! the posterior expected spread of the true `S_g^2`:
//!
//! ```text
//! delta_g = (2a + s.^2 + (s_g^2 - s.^2) * sqrt(B)) / (2a - 1)
//! B = 1 + 8 (H - 1) (a^2 + s.^2 a + sum_g s_g^4 / 4H) / ((2a - 3) sum_g (s_g^2 - s.^2)^2)
//! ```
//!
//! Negative constrained values are replaced by the EB value of the same
//! group. When all `s_g^2` are equal the expansion is undefined (zero over
//! zero) and the EB values are returned for every group.

use crate::error::{Error, Result};
use crate::estimators::{VarianceEstimate, VarianceMethod};
use crate::numeric::{self, CompensatedSum};

pub const DEFAULT_TRUNCATION_MARGIN: f64 = 0.5;

/// Truncation margin `e`; the prior parameter is floored at `1.5 + e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbConfig {
    margin: f64,
}

impl EbConfig {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin > 0.0) || !margin.is_finite() {
            return Err(Error::config(format!(
                "truncation margin must be positive and finite, got {margin}"
            )));
        }
        Ok(Self { margin })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn lower_bound(&self) -> f64 {
        1.5 + self.margin
    }
}

impl Default for EbConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_TRUNCATION_MARGIN,
        }
    }
}

/// Method-of-moments fit of the prior parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorFit {
    pub groups: usize,
    /// `s.^2`, the mean of the group variances.
    pub ensemble_mean: f64,
    /// `s.^2 / (s.^2 - 1)`; `None` when `s.^2 = 1`. Negative when `s.^2 < 1`.
    pub a_mm: Option<f64>,
    /// `max(1.5 + e, a_mm)`, or the floor when `a_mm` is undefined.
    pub a_star: f64,
}

impl PriorFit {
    /// Shrinkage weight on the direct estimate, `1 / (2a* - 1)`.
    pub fn shrinkage_weight(&self) -> f64 {
        1.0 / (2.0 * self.a_star - 1.0)
    }
}

fn check_inputs(s2: &[f64]) -> Result<()> {
    if s2.is_empty() {
        return Err(Error::InsufficientData("no group variances to shrink".into()));
    }
    if let Some((g, v)) = s2.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "group {} variance {v} is not finite and nonnegative",
            g + 1
        )));
    }
    Ok(())
}

pub fn fit_prior(s2: &[f64], cfg: &EbConfig) -> Result<PriorFit> {
    check_inputs(s2)?;
    let ensemble_mean = numeric::mean(s2);
    let a_mm = if ensemble_mean == 1.0 {
        None
    } else {
        Some(ensemble_mean / (ensemble_mean - 1.0))
    };
    let floor = cfg.lower_bound();
    let a_star = match a_mm {
        Some(a) if a > floor => a,
        _ => floor,
    };
    Ok(PriorFit {
        groups: s2.len(),
        ensemble_mean,
        a_mm,
        a_star,
    })
}

/// `delta_g^EB = (2a* + s_g^2) / (2a* - 1)`.
pub fn eb_estimates(prior: &PriorFit, s2: &[f64]) -> Vec<f64> {
    let a = prior.a_star;
    s2.iter().map(|s| (2.0 * a + s) / (2.0 * a - 1.0)).collect()
}

/// Posterior variance of `S_g^2`: `2 (2a + s^2)^2 / ((2a - 1)^2 (2a - 3))`.
pub fn posterior_variance(a: f64, s2_g: f64) -> Result<f64> {
    if !(a > 1.5) {
        return Err(Error::Domain(format!("posterior variance needs a > 1.5, got {a}")));
    }
    let num = 2.0 * (2.0 * a + s2_g).powi(2);
    let den = (2.0 * a - 1.0).powi(2) * (2.0 * a - 3.0);
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CebEstimates {
    /// Reported values, after the negative-value fallback.
    pub values: Vec<f64>,
    /// Values before the fallback. Equal to the EB values in the degenerate case.
    pub raw: Vec<f64>,
    /// True where the EB value was substituted.
    pub fallback: Vec<bool>,
    /// All `s_g^2` equal (includes `H = 1`).
    pub degenerate: bool,
    /// The expansion factor `B` under the square root; `1` when degenerate.
    pub bracket: f64,
}

pub fn ceb_estimates(prior: &PriorFit, s2: &[f64]) -> CebEstimates {
    let eb = eb_estimates(prior, s2);
    let degenerate = s2.iter().all(|&v| v == s2[0]);
    if degenerate {
        return CebEstimates {
            values: eb.clone(),
            raw: eb,
            fallback: vec![true; s2.len()],
            degenerate: true,
            bracket: 1.0,
        };
    }
    let h = s2.len() as f64;
    let a = prior.a_star;
    let mean = prior.ensemble_mean;
    let spread = numeric::sum(s2.iter().map(|s| (s - mean) * (s - mean)));
    let fourth = numeric::sum(s2.iter().map(|s| s * s));
    let numerator = 8.0 * (h - 1.0) * (a * a + mean * a + fourth / (4.0 * h));
    let bracket = 1.0 + numerator / ((2.0 * a - 3.0) * spread);
    let root = bracket.sqrt();
    let raw: Vec<f64> = s2
        .iter()
        .map(|s| (2.0 * a + mean + (s - mean) * root) / (2.0 * a - 1.0))
        .collect();
    let fallback: Vec<bool> = raw.iter().map(|&v| v <= 0.0).collect();
    let values = raw
        .iter()
        .zip(&eb)
        .zip(&fallback)
        .map(|((&c, &e), &f)| if f { e } else { c })
        .collect();
    CebEstimates {
        values,
        raw,
        fallback,
        degenerate: false,
        bracket,
    }
}

/// Complete EB/CEB fit for one sample's group variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageFit {
    pub prior: PriorFit,
    pub s2: Vec<f64>,
    pub delta_eb: Vec<f64>,
    pub delta_ceb: Vec<f64>,
    pub ceb_raw: Vec<f64>,
    pub ceb_fallback: Vec<bool>,
    pub degenerate: bool,
    pub bracket: f64,
}

impl ShrinkageFit {
    pub fn fit(s2: &[f64], cfg: &EbConfig) -> Result<Self> {
        let prior = fit_prior(s2, cfg)?;
        let delta_eb = eb_estimates(&prior, s2);
        let ceb = ceb_estimates(&prior, s2);
        Ok(Self {
            prior,
            s2: s2.to_vec(),
            delta_eb,
            delta_ceb: ceb.values,
            ceb_raw: ceb.raw,
            ceb_fallback: ceb.fallback,
            degenerate: ceb.degenerate,
            bracket: ceb.bracket,
        })
    }

    pub fn groups(&self) -> usize {
        self.s2.len()
    }

    pub fn any_fallback(&self) -> bool {
        self.ceb_fallback.iter().any(|&f| f)
    }
}

fn equal_weight_aggregate(deltas: &[f64], method: VarianceMethod) -> VarianceEstimate {
    let h = deltas.len() as f64;
    VarianceEstimate {
        value: numeric::sum(deltas.iter().copied()) / (2.0 * h * h),
        method,
        components: deltas.to_vec(),
    }
}

/// `(1 / 2H^2) sum_g delta_g^EB`.
pub fn eb_design_variance(fit: &ShrinkageFit) -> VarianceEstimate {
    equal_weight_aggregate(&fit.delta_eb, VarianceMethod::Eb)
}

/// `(1 / 2H^2) sum_g delta_g^CEB`.
pub fn ceb_design_variance(fit: &ShrinkageFit) -> VarianceEstimate {
    equal_weight_aggregate(&fit.delta_ceb, VarianceMethod::Ceb)
}

/// `sum_g W_g^2 delta_g / 2`, the unequal-size analogue of the two
/// aggregations above (identical when every `W_g = 1/H`).
pub fn weighted_design_variance(
    deltas: &[f64],
    group_weights: &[f64],
    method: VarianceMethod,
) -> Result<VarianceEstimate> {
    if deltas.len() != group_weights.len() {
        return Err(Error::shape(format!(
            "{} group estimates for {} group weights",
            deltas.len(),
            group_weights.len()
        )));
    }
    if group_weights.windows(2).all(|w| w[0] == w[1]) {
        return Ok(equal_weight_aggregate(deltas, method));
    }
    let mut acc = CompensatedSum::new();
    for (d, w) in deltas.iter().zip(group_weights) {
        acc.add(w * w * d / 2.0);
    }
    Ok(VarianceEstimate {
        value: acc.total(),
        method,
        components: deltas.to_vec(),
    })
}
