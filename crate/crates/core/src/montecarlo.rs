//! Replication harness: coverage and interval length, relative error sweeps
//! over the truncation margin, and population design effects.
//!
//! Replication `r` under design `d` draws its sample from
//! `mix_seed(mix_seed(master, tag(d)), r)`. Replications run on a rayon pool,
//! results are collected in replication order and then aggregated serially
//! with compensated sums, so reports do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{draw_unchecked, Design, SampleDraw};
use crate::error::{Error, Result};
use crate::estimators::{collapsed_variance, stratified_mean, true_variance, two_per_stratum_variance, VarianceMethod};
use crate::numeric::{self, mix_seed};
use crate::population::{FinitePopulation, PopulationSpec};
use crate::shrinkage::{ceb_design_variance, eb_design_variance, EbConfig, ShrinkageFit};
use crate::theory::design_effect;

pub const DEFAULT_REPLICATIONS: u64 = 10_000;
pub const DEFAULT_Z: f64 = 1.96;
pub const DEFAULT_E_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Coverage,
    RmseSweep,
    Deff,
}

impl StudyKind {
    pub fn label(self) -> &'static str {
        match self {
            StudyKind::Coverage => "coverage",
            StudyKind::RmseSweep => "rmse_sweep",
            StudyKind::Deff => "deff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub name: String,
    pub kind: StudyKind,
    pub population: PopulationSpec,
    pub designs: Vec<Design>,
    pub estimators: Vec<VarianceMethod>,
    pub replications: u64,
    pub z: f64,
    pub e_grid: Vec<f64>,
    pub master_seed: u64,
    /// Keep the finite population correction in the true variance and in the
    /// two-per-stratum estimator.
    pub fpc: bool,
    /// Number of populations. `1` freezes a single population; larger values
    /// regenerate with derived seeds and spread replications across them.
    pub population_draws: u64,
    /// Worker threads; `0` uses the rayon default.
    pub workers: usize,
    pub raw_dump: bool,
}

impl SimulationConfig {
    pub fn new(name: impl Into<String>, kind: StudyKind, population: PopulationSpec, master_seed: u64) -> Self {
        let (designs, estimators) = match kind {
            StudyKind::Coverage => (
                vec![Design::OnePerStratum, Design::TwoPerStratum],
                vec![VarianceMethod::Collapsed, VarianceMethod::TwoPerStratum],
            ),
            StudyKind::RmseSweep => (
                vec![Design::OnePerStratum],
                vec![VarianceMethod::Collapsed, VarianceMethod::Eb, VarianceMethod::Ceb],
            ),
            StudyKind::Deff => (vec![Design::OnePerStratum, Design::TwoPerStratum], Vec::new()),
        };
        Self {
            name: name.into(),
            kind,
            population,
            designs,
            estimators,
            replications: DEFAULT_REPLICATIONS,
            z: DEFAULT_Z,
            e_grid: DEFAULT_E_GRID.to_vec(),
            master_seed,
            fpc: true,
            population_draws: 1,
            workers: 0,
            raw_dump: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if !(self.z > 0.0) || !self.z.is_finite() {
            return Err(Error::config(format!("z must be positive and finite, got {}", self.z)));
        }
        if self.population_draws == 0 {
            return Err(Error::config("population_draws must be at least 1"));
        }
        for &e in &self.e_grid {
            EbConfig::new(e)?;
        }
        let shrinkage = self.estimators.iter().any(|m| m.uses_shrinkage());
        if shrinkage && self.e_grid.is_empty() {
            return Err(Error::config("EB/CEB estimators need a nonempty e_grid"));
        }
        match self.kind {
            StudyKind::Deff => {}
            StudyKind::Coverage => {
                if self.estimators.is_empty() {
                    return Err(Error::config("coverage study needs at least one estimator"));
                }
                for m in &self.estimators {
                    if !self.designs.contains(&m.design()) {
                        return Err(Error::config(format!(
                            "estimator {m} needs the {} design, which is not configured",
                            m.design().label()
                        )));
                    }
                }
                for d in &self.designs {
                    if !self.estimators.iter().any(|m| m.design() == *d) {
                        return Err(Error::config(format!("design {} has no estimator", d.label())));
                    }
                }
            }
            StudyKind::RmseSweep => {
                if self.designs != [Design::OnePerStratum] {
                    return Err(Error::config("rmse sweep runs under the one_per_stratum design only"));
                }
                if self.estimators.is_empty() {
                    return Err(Error::config("rmse sweep needs at least one estimator"));
                }
                if let Some(m) = self.estimators.iter().find(|m| m.design() != Design::OnePerStratum) {
                    return Err(Error::config(format!(
                        "estimator {m} is not defined under one_per_stratum"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cp,
    Al,
    Rmse,
    V1,
    V2,
    Deff,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Cp => "cp",
            Metric::Al => "al",
            Metric::Rmse => "rmse",
            Metric::V1 => "v1",
            Metric::V2 => "v2",
            Metric::Deff => "deff",
        }
    }
}

/// Label used in the estimator column for population-level quantities.
pub const POPULATION_ESTIMATOR: &str = "population";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub study: String,
    pub estimator: String,
    pub e: Option<f64>,
    pub metric: Metric,
    pub value: f64,
    pub mc_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub replication: u64,
    pub estimator: VarianceMethod,
    pub e: Option<f64>,
    pub estimate: f64,
    pub covered: Option<bool>,
    pub ci_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationReport {
    pub study: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub raw: Vec<RawRow>,
}

impl SimulationReport {
    pub fn find(&self, estimator: &str, e: Option<f64>, metric: Metric) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.e == e && r.metric == metric)
    }

    pub fn value(&self, estimator: &str, e: Option<f64>, metric: Metric) -> Option<f64> {
        self.find(estimator, e, metric).map(|r| r.value)
    }
}

/// One estimator evaluated in a study, with its truncation margin if any.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arm {
    method: VarianceMethod,
    e: Option<f64>,
}

fn arms(estimators: &[VarianceMethod], e_grid: &[f64]) -> Vec<Arm> {
    let mut out = Vec::new();
    for &method in estimators {
        if method.uses_shrinkage() {
            out.extend(e_grid.iter().map(|&e| Arm { method, e: Some(e) }));
        } else {
            out.push(Arm { method, e: None });
        }
    }
    out
}

fn design_tag(design: Design) -> u64 {
    match design {
        Design::OnePerStratum => 1,
        Design::TwoPerStratum => 2,
    }
}

/// Seed of replication `r` under `design`.
pub fn replication_seed(master_seed: u64, design: Design, replication: u64) -> u64 {
    mix_seed(mix_seed(master_seed, design_tag(design)), replication)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

fn sample_group_variances(sample: &SampleDraw, group_of: &[usize], groups: usize) -> Vec<f64> {
    let mut first: Vec<Option<f64>> = vec![None; groups];
    let mut s2 = vec![0.0; groups];
    for (h, &g) in group_of.iter().enumerate() {
        let y = sample.values[h][0];
        match first[g] {
            None => first[g] = Some(y),
            Some(x) => s2[g] = (x - y) * (x - y) / 2.0,
        }
    }
    s2
}

/// The populations of a study: the configured one, then regenerated copies
/// with derived seeds when `population_draws > 1`.
pub fn study_populations(cfg: &SimulationConfig) -> Result<Vec<FinitePopulation>> {
    (0..cfg.population_draws)
        .map(|k| {
            let mut spec = cfg.population.clone();
            if k > 0 {
                spec.seed = mix_seed(cfg.population.seed, k);
            }
            spec.generate()
        })
        .collect()
}

fn check_designs(pops: &[FinitePopulation], designs: &[Design]) -> Result<()> {
    for pop in pops {
        for d in designs {
            d.check_feasible(pop)?;
        }
    }
    Ok(())
}

/// Variance estimates of every arm under `design` for one sample.
fn evaluate_arms(
    pop: &FinitePopulation,
    sample: &SampleDraw,
    arms: &[Arm],
    weights: &[f64],
    fpc: bool,
) -> Result<Vec<f64>> {
    let mut fits: Vec<(f64, ShrinkageFit)> = Vec::new();
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        let v = match arm.method {
            VarianceMethod::Collapsed => collapsed_variance(sample, pop.group_of())?.value,
            VarianceMethod::TwoPerStratum => two_per_stratum_variance(sample, weights, !fpc)?.value,
            VarianceMethod::Eb | VarianceMethod::Ceb => {
                let e = arm.e.expect("shrinkage arm carries a margin");
                let idx = match fits.iter().position(|(m, _)| *m == e) {
                    Some(i) => i,
                    None => {
                        let s2 = sample_group_variances(sample, pop.group_of(), pop.group_count());
                        fits.push((e, ShrinkageFit::fit(&s2, &EbConfig::new(e)?)?));
                        fits.len() - 1
                    }
                };
                let fit = &fits[idx].1;
                if arm.method == VarianceMethod::Eb {
                    eb_design_variance(fit).value
                } else {
                    ceb_design_variance(fit).value
                }
            }
        };
        out.push(v);
    }
    Ok(out)
}

struct Summary {
    mean: f64,
    mc_se: Option<f64>,
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = numeric::mean(values);
    let mc_se = (n > 1).then(|| (numeric::sample_variance(values) / n as f64).sqrt());
    Summary { mean, mc_se }
}

fn proportion(hits: &[bool]) -> Summary {
    let n = hits.len();
    let p = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    let mc_se = (n > 1).then(|| (p * (1.0 - p) / n as f64).sqrt());
    Summary { mean: p, mc_se }
}

fn push_row(rows: &mut Vec<ReportRow>, study: &str, arm: &Arm, metric: Metric, s: Summary) {
    rows.push(ReportRow {
        study: study.to_string(),
        estimator: arm.method.label().to_string(),
        e: arm.e,
        metric,
        value: s.mean,
        mc_se: s.mc_se,
    });
}

struct Truth {
    mean: f64,
}

fn design_mean(pop: &FinitePopulation, design: Design) -> f64 {
    let weights = design.weights(pop);
    let means: Vec<f64> = match design {
        Design::OnePerStratum => pop.strata().iter().map(|s| numeric::mean(s)).collect(),
        Design::TwoPerStratum => (0..pop.group_count())
            .map(|g| numeric::mean(&pop.merged_group(g)))
            .collect(),
    };
    numeric::sum(weights.iter().zip(&means).map(|(w, m)| w * m))
}

/// `|ybar - Ybar| <= z sqrt(v)`, with a few ulps of slack so an exact census
/// or a constant population is not lost to rounding.
fn covers(ybar: f64, truth: f64, half_width: f64) -> bool {
    let slack = 8.0 * f64::EPSILON * ybar.abs().max(truth.abs());
    (ybar - truth).abs() <= half_width + slack
}

/// Coverage probability and average length of `ybar +- z sqrt(v)`.
pub fn run_coverage(cfg: &SimulationConfig) -> Result<SimulationReport> {
    if cfg.kind != StudyKind::Coverage {
        return Err(Error::config(format!("study {} is not a coverage study", cfg.name)));
    }
    cfg.validate()?;
    let pops = study_populations(cfg)?;
    coverage_on(cfg, &pops)
}

/// Coverage study on given populations (replication `r` uses population
/// `r mod len`).
pub fn coverage_on(cfg: &SimulationConfig, pops: &[FinitePopulation]) -> Result<SimulationReport> {
    if pops.is_empty() {
        return Err(Error::config("no populations"));
    }
    check_designs(pops, &cfg.designs)?;
    let all_arms = arms(&cfg.estimators, &cfg.e_grid);
    let pool = pool(cfg.workers)?;
    let mut report = SimulationReport {
        study: cfg.name.clone(),
        seed: cfg.master_seed,
        ..Default::default()
    };
    for &design in &cfg.designs {
        let design_arms: Vec<Arm> = all_arms
            .iter()
            .copied()
            .filter(|a| a.method.design() == design)
            .collect();
        let truths: Vec<Truth> = pops
            .iter()
            .map(|p| Truth {
                mean: design_mean(p, design),
            })
            .collect();
        let weights: Vec<Vec<f64>> = pops.iter().map(|p| design.weights(p)).collect();
        let outcomes: Vec<Result<(f64, Vec<f64>)>> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let k = (r % pops.len() as u64) as usize;
                    let pop = &pops[k];
                    let sample = draw_unchecked(pop, design, replication_seed(cfg.master_seed, design, r), r);
                    let ybar = stratified_mean(&sample, &weights[k])?.value;
                    let v = evaluate_arms(pop, &sample, &design_arms, &weights[k], cfg.fpc)?;
                    Ok((ybar, v))
                })
                .collect()
        });
        let outcomes: Vec<(f64, Vec<f64>)> = outcomes.into_iter().collect::<Result<_>>()?;
        for (i, arm) in design_arms.iter().enumerate() {
            let mut hits = Vec::with_capacity(outcomes.len());
            let mut lengths = Vec::with_capacity(outcomes.len());
            for (r, (ybar, v)) in outcomes.iter().enumerate() {
                let truth = &truths[r % pops.len()];
                let half = cfg.z * v[i].max(0.0).sqrt();
                let covered = covers(*ybar, truth.mean, half);
                hits.push(covered);
                lengths.push(2.0 * half);
                if cfg.raw_dump {
                    report.raw.push(RawRow {
                        replication: r as u64,
                        estimator: arm.method,
                        e: arm.e,
                        estimate: v[i],
                        covered: Some(covered),
                        ci_len: Some(2.0 * half),
                    });
                }
            }
            push_row(&mut report.rows, &cfg.name, arm, Metric::Cp, proportion(&hits));
            push_row(&mut report.rows, &cfg.name, arm, Metric::Al, summarize(&lengths));
        }
    }
    Ok(report)
}

/// Mean relative error `|v - V| / V` of each estimator over the e grid,
/// all arms evaluated on the same one-per-stratum samples.
pub fn run_rmse_sweep(cfg: &SimulationConfig) -> Result<SimulationReport> {
    if cfg.kind != StudyKind::RmseSweep {
        return Err(Error::config(format!("study {} is not an rmse sweep", cfg.name)));
    }
    cfg.validate()?;
    let pops = study_populations(cfg)?;
    rmse_on(cfg, &pops)
}

pub fn rmse_on(cfg: &SimulationConfig, pops: &[FinitePopulation]) -> Result<SimulationReport> {
    if pops.is_empty() {
        return Err(Error::config("no populations"));
    }
    let design = Design::OnePerStratum;
    check_designs(pops, &[design])?;
    let truths: Vec<f64> = pops
        .iter()
        .map(|p| true_variance(p, design, !cfg.fpc))
        .collect::<Result<_>>()?;
    if let Some(k) = truths.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::DegeneratePopulation(format!(
            "population {} has zero true variance; relative error undefined",
            k + 1
        )));
    }
    let all_arms = arms(&cfg.estimators, &cfg.e_grid);
    let weights: Vec<Vec<f64>> = pops.iter().map(|p| design.weights(p)).collect();
    let pool = pool(cfg.workers)?;
    let outcomes: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let k = (r % pops.len() as u64) as usize;
                let pop = &pops[k];
                let sample = draw_unchecked(pop, design, replication_seed(cfg.master_seed, design, r), r);
                evaluate_arms(pop, &sample, &all_arms, &weights[k], cfg.fpc)
            })
            .collect()
    });
    let outcomes: Vec<Vec<f64>> = outcomes.into_iter().collect::<Result<_>>()?;
    let mut report = SimulationReport {
        study: cfg.name.clone(),
        seed: cfg.master_seed,
        ..Default::default()
    };
    for (i, arm) in all_arms.iter().enumerate() {
        let errors: Vec<f64> = outcomes
            .iter()
            .enumerate()
            .map(|(r, v)| {
                let truth = truths[r % pops.len()];
                (v[i] - truth).abs() / truth
            })
            .collect();
        if cfg.raw_dump {
            report.raw.extend(outcomes.iter().enumerate().map(|(r, v)| RawRow {
                replication: r as u64,
                estimator: arm.method,
                e: arm.e,
                estimate: v[i],
                covered: None,
                ci_len: None,
            }));
        }
        push_row(&mut report.rows, &cfg.name, arm, Metric::Rmse, summarize(&errors));
    }
    Ok(report)
}

/// True variances under both designs and their ratio. With several
/// population draws the mean over draws is reported with its standard error.
pub fn run_deff_study(cfg: &SimulationConfig) -> Result<SimulationReport> {
    if cfg.kind != StudyKind::Deff {
        return Err(Error::config(format!("study {} is not a deff study", cfg.name)));
    }
    cfg.validate()?;
    let pops = study_populations(cfg)?;
    let mut v1 = Vec::with_capacity(pops.len());
    let mut v2 = Vec::with_capacity(pops.len());
    let mut deff = Vec::with_capacity(pops.len());
    for pop in &pops {
        v1.push(true_variance(pop, Design::OnePerStratum, !cfg.fpc)?);
        v2.push(true_variance(pop, Design::TwoPerStratum, !cfg.fpc)?);
        deff.push(if cfg.fpc {
            design_effect(pop)?
        } else {
            let last = v1.len() - 1;
            if !(v1[last] > 0.0) {
                return Err(Error::DegeneratePopulation("one-per-stratum variance is zero".into()));
            }
            v2[last] / v1[last]
        });
    }
    let mut rows = Vec::new();
    for (metric, values) in [(Metric::V1, &v1), (Metric::V2, &v2), (Metric::Deff, &deff)] {
        let s = summarize(values);
        rows.push(ReportRow {
            study: cfg.name.clone(),
            estimator: POPULATION_ESTIMATOR.to_string(),
            e: None,
            metric,
            value: s.mean,
            mc_se: s.mc_se,
        });
    }
    Ok(SimulationReport {
        study: cfg.name.clone(),
        seed: cfg.master_seed,
        rows,
        raw: Vec::new(),
    })
}

pub fn run_study(cfg: &SimulationConfig) -> Result<SimulationReport> {
    match cfg.kind {
        StudyKind::Coverage => run_coverage(cfg),
        StudyKind::RmseSweep => run_rmse_sweep(cfg),
        StudyKind::Deff => run_deff_study(cfg),
    }
}

/// Per-group shrinkage diagnostics for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub replication: u64,
    /// 1-based group index.
    pub g: usize,
    pub s2: f64,
    pub delta_eb: f64,
    pub delta_ceb: f64,
    pub fallback: bool,
}

/// EB/CEB fits on the one-per-stratum samples a study draws, for margin `e`.
/// Replication numbers line up with the study's raw dump.
pub fn shrinkage_diagnostics(cfg: &SimulationConfig, e: f64) -> Result<Vec<ShrinkageRow>> {
    cfg.validate()?;
    let eb = EbConfig::new(e)?;
    let pops = study_populations(cfg)?;
    let design = Design::OnePerStratum;
    check_designs(&pops, &[design])?;
    let pool = pool(cfg.workers)?;
    let fits: Vec<Result<ShrinkageFit>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let pop = &pops[(r % pops.len() as u64) as usize];
                let sample = draw_unchecked(pop, design, replication_seed(cfg.master_seed, design, r), r);
                let s2 = sample_group_variances(&sample, pop.group_of(), pop.group_count());
                ShrinkageFit::fit(&s2, &eb)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (r, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        for g in 0..fit.groups() {
            rows.push(ShrinkageRow {
                replication: r as u64,
                g: g + 1,
                s2: fit.s2[g],
                delta_eb: fit.delta_eb[g],
                delta_ceb: fit.delta_ceb[g],
                fallback: fit.ceb_fallback[g],
            });
        }
    }
    Ok(rows)
}
