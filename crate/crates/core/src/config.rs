//! Study configuration files (TOML) and the embedded table presets.
//!
//! A file describes one or more studies: every combination of
//! `population.strata_counts` and `population.case_studies` becomes one
//! [`Study`]. Seeds left out of the file are derived from `simulation.seed`.

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimators::VarianceMethod;
use crate::montecarlo::{SimulationConfig, StudyKind, DEFAULT_E_GRID, DEFAULT_REPLICATIONS, DEFAULT_Z};
use crate::numeric::mix_seed;
use crate::population::{gamma_base_moments, CaseStudy, NormalGroupsSpec, PopulationSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 271_828;
pub const SHAPE_SCALE: &str = "shape_scale";

const POPULATION_STREAM: u64 = 0x70_6f70;
const BASE_MOMENT_STREAM: u64 = 0x6261_7365;
const REPLICATION_STREAM: u64 = 0x72_6570;

pub const PRESETS: [(&str, &str); 4] = [
    ("table1", include_str!("presets/table1.toml")),
    ("table3", include_str!("presets/table3.toml")),
    ("table4", include_str!("presets/table4.toml")),
    ("figure1", include_str!("presets/figure1.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<StudyConfigFile> {
    let src = preset_source(name).ok_or_else(|| {
        Error::config(format!(
            "unknown preset `{name}`; available: {}",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    StudyConfigFile::from_toml_str(src)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationKindName {
    BivariateGamma,
    NormalGroups,
}

fn default_parameterization() -> String {
    SHAPE_SCALE.to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub kind: PopulationKindName,
    pub total_units: usize,
    /// `2H` values; one study per entry.
    pub strata_counts: Vec<usize>,
    /// Normal-groups case studies; one study per entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub case_studies: Vec<CaseStudy>,
    /// Normal-groups `mu`; derived from a gamma population when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mean: Option<f64>,
    /// Normal-groups `sigma^2`; derived with `base_mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_variance: Option<f64>,
    /// Per-group `[mean, variance]` multipliers; default `[g, g]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<[f64; 2]>>,
    /// Gamma sampling parameterization; only `shape_scale` is accepted.
    #[serde(default = "default_parameterization")]
    pub gamma_parameterization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub kinds: Vec<Design>,
    #[serde(default = "default_true")]
    pub fpc: bool,
}

fn default_margins() -> Vec<f64> {
    DEFAULT_E_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default)]
    pub methods: Vec<VarianceMethod>,
    #[serde(default = "default_margins")]
    pub truncation_margins: Vec<f64>,
}

fn default_replications() -> u64 {
    DEFAULT_REPLICATIONS
}

fn default_z() -> f64 {
    DEFAULT_Z
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub study: StudyKind,
    pub name: String,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub population_draws: u64,
    /// `0` uses all available cores.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub raw_dump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfigFile {
    pub schema_version: u32,
    pub population: PopulationSection,
    pub design: DesignSection,
    #[serde(default = "default_estimators")]
    pub estimators: EstimatorSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_estimators() -> EstimatorSection {
    EstimatorSection {
        methods: Vec::new(),
        truncation_margins: default_margins(),
    }
}

/// One expanded study.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub config: SimulationConfig,
    /// `simulation.seed` of the file the study came from.
    pub master_seed: u64,
    pub case_study: Option<CaseStudy>,
    /// `(mu, sigma^2)` actually used for a normal-groups population.
    pub base_moments: Option<(f64, f64)>,
}

impl Study {
    /// `key=value` lines describing the effective seeds and base moments.
    pub fn header_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("study={}", self.config.name),
            format!("seed={}", self.master_seed),
            format!("replication_seed={}", self.config.master_seed),
            format!("population_seed={}", self.config.population.seed),
        ];
        if let Some((m, v)) = self.base_moments {
            out.push(format!("base_mean={m:?}"));
            out.push(format!("base_variance={v:?}"));
        }
        out
    }
}

impl StudyConfigFile {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: StudyConfigFile = toml::from_str(src).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.population;
        if p.gamma_parameterization != SHAPE_SCALE {
            return Err(Error::config(format!(
                "population.gamma_parameterization must be `{SHAPE_SCALE}`, got `{}`",
                p.gamma_parameterization
            )));
        }
        if p.total_units == 0 {
            return Err(Error::config("population.total_units must be positive"));
        }
        if p.strata_counts.is_empty() {
            return Err(Error::config("population.strata_counts must not be empty"));
        }
        match p.kind {
            PopulationKindName::BivariateGamma => {
                let stray = !p.case_studies.is_empty()
                    || p.base_mean.is_some()
                    || p.base_variance.is_some()
                    || p.multipliers.is_some();
                if stray {
                    return Err(Error::config(
                        "case_studies, base moments and multipliers apply to normal_groups only",
                    ));
                }
            }
            PopulationKindName::NormalGroups => {
                if p.case_studies.is_empty() {
                    return Err(Error::config(
                        "population.case_studies must not be empty for normal_groups",
                    ));
                }
                if p.base_mean.is_some() != p.base_variance.is_some() {
                    return Err(Error::config("base_mean and base_variance must be given together"));
                }
            }
        }
        if self.design.kinds.is_empty() {
            return Err(Error::config("design.kinds must not be empty"));
        }
        Ok(())
    }

    /// Expand into studies and validate each one.
    pub fn studies(&self) -> Result<Vec<Study>> {
        self.validate()?;
        let p = &self.population;
        let s = &self.simulation;
        let cases: Vec<Option<CaseStudy>> = match p.kind {
            PopulationKindName::BivariateGamma => vec![None],
            PopulationKindName::NormalGroups => p.case_studies.iter().copied().map(Some).collect(),
        };
        let pop_seed = p.seed.unwrap_or_else(|| mix_seed(s.seed, POPULATION_STREAM));
        let mut out = Vec::new();
        let mut k = 0u64;
        for &strata in &p.strata_counts {
            for &case in &cases {
                let mut parts = Vec::new();
                if let Some(c) = case {
                    parts.push(c.label().to_string());
                }
                if p.strata_counts.len() > 1 || case.is_none() {
                    parts.push(format!("2h={strata}"));
                }
                let name = format!("{}:{}", s.name, parts.join(":"));
                let seed = mix_seed(pop_seed, k);
                let (population, base_moments) = match case {
                    None => (PopulationSpec::bivariate_gamma(p.total_units, strata, seed), None),
                    Some(c) => {
                        let (mean, var) = match (p.base_mean, p.base_variance) {
                            (Some(m), Some(v)) => (m, v),
                            _ => gamma_base_moments(p.total_units, strata, mix_seed(s.seed, BASE_MOMENT_STREAM))?,
                        };
                        let mut spec = NormalGroupsSpec::new(c, mean, var, strata / 2);
                        if let Some(m) = &p.multipliers {
                            spec.multipliers = m.iter().map(|[a, b]| (*a, *b)).collect();
                        }
                        (
                            PopulationSpec::normal_groups(spec, p.total_units, strata, seed),
                            Some((mean, var)),
                        )
                    }
                };
                let mut cfg =
                    SimulationConfig::new(name, s.study, population, mix_seed(s.seed, REPLICATION_STREAM + k));
                cfg.designs = self.design.kinds.clone();
                cfg.estimators = self.estimators.methods.clone();
                cfg.e_grid = self.estimators.truncation_margins.clone();
                cfg.replications = s.replications;
                cfg.z = s.z;
                cfg.fpc = self.design.fpc;
                cfg.population_draws = s.population_draws;
                cfg.workers = s.workers;
                cfg.raw_dump = self.output.raw_dump;
                cfg.validate()?;
                out.push(Study {
                    config: cfg,
                    master_seed: s.seed,
                    case_study: case,
                    base_moments,
                });
                k += 1;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            let text = cfg.to_toml_string().unwrap();
            let again = StudyConfigFile::from_toml_str(&text).unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(again.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn unknown_preset_and_keys_are_rejected() {
        assert!(matches!(preset("table9"), Err(Error::Config(_))));
        let src = preset_source("table1")
            .unwrap()
            .replace("[design]", "[design]\nbogus = 1");
        let err = StudyConfigFile::from_toml_str(&src).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn zero_units_is_a_config_error() {
        let src = preset_source("table1")
            .unwrap()
            .replace("total_units = 20000", "total_units = 0");
        assert!(matches!(StudyConfigFile::from_toml_str(&src), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_schema_and_parameterization_rejected() {
        let src = preset_source("table1")
            .unwrap()
            .replace("schema_version = 1", "schema_version = 2");
        assert!(StudyConfigFile::from_toml_str(&src).is_err());
        let src = preset_source("table1").unwrap().replace(
            "kind = \"bivariate_gamma\"",
            "kind = \"bivariate_gamma\"\ngamma_parameterization = \"shape_rate\"",
        );
        assert!(StudyConfigFile::from_toml_str(&src).is_err());
    }

    #[test]
    fn expansion_counts() {
        assert_eq!(preset("table1").unwrap().studies().unwrap().len(), 3);
        assert_eq!(preset("table3").unwrap().studies().unwrap().len(), 4);
        assert_eq!(preset("table4").unwrap().studies().unwrap().len(), 4);
        assert_eq!(preset("figure1").unwrap().studies().unwrap().len(), 4);
    }

    #[test]
    fn seed_changes_populations() {
        let mut cfg = preset("table3").unwrap();
        let a = cfg.studies().unwrap();
        cfg.simulation.seed += 1;
        let b = cfg.studies().unwrap();
        assert_ne!(a[0].config.population.seed, b[0].config.population.seed);
        assert_ne!(a[0].base_moments, b[0].base_moments);
    }

    #[test]
    fn derived_base_moments_are_near_gamma_values() {
        let s = &preset("table3").unwrap().studies().unwrap()[0];
        let (m, v) = s.base_moments.unwrap();
        // E y = 2.9; Var y is about 5.45
        assert!((m - 2.9).abs() < 0.1, "{m}");
        assert!((v - 5.45).abs() < 0.5, "{v}");
    }

    #[test]
    fn mismatched_estimator_fails_at_expansion() {
        let mut cfg = preset("table4").unwrap();
        cfg.design.kinds = vec![Design::OnePerStratum];
        assert!(matches!(cfg.studies(), Err(Error::Config(_))));
    }
}
