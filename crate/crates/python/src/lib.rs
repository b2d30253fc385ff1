use std::fs::File;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stratvar::config::{self, StudyConfigFile};
use stratvar::design::{draw_sample, DEFAULT_ENUMERATION_CAP};
use stratvar::estimators::{collapsed_variance, stratified_mean, true_variance, two_per_stratum_variance};
use stratvar::montecarlo::run_study;
use stratvar::population::{CaseStudy, NormalGroupsSpec, PopulationSpec};
use stratvar::shrinkage::{self, DEFAULT_TRUNCATION_MARGIN};
use stratvar::{theory, Design, EbConfig, Error, FinitePopulation, SampleDraw};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::InternalConsistency(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_design(name: &str) -> PyResult<Design> {
    match name {
        "one_per_stratum" => Ok(Design::OnePerStratum),
        "two_per_stratum" => Ok(Design::TwoPerStratum),
        _ => Err(PyValueError::new_err(format!(
            "unknown design `{name}`; expected one_per_stratum or two_per_stratum"
        ))),
    }
}

fn parse_case(name: &str) -> PyResult<CaseStudy> {
    CaseStudy::ALL
        .into_iter()
        .find(|c| c.label() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown case study `{name}`")))
}

/// A finite population of strata paired into collapse groups.
#[pyclass(name = "Population", module = "stratvar", frozen)]
struct PyPopulation {
    inner: FinitePopulation,
}

#[pymethods]
impl PyPopulation {
    /// Build from per-stratum values. `groups` gives the 0-based group of each
    /// stratum; by default strata `2g` and `2g + 1` form group `g`.
    #[new]
    #[pyo3(signature = (strata, groups = None))]
    fn new(strata: Vec<Vec<f64>>, groups: Option<Vec<usize>>) -> PyResult<Self> {
        let inner = match groups {
            Some(g) => FinitePopulation::new(strata, g),
            None => FinitePopulation::with_adjacent_pairs(strata),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn bivariate_gamma(total_units: usize, strata_count: usize, seed: u64) -> PyResult<Self> {
        let inner = PopulationSpec::bivariate_gamma(total_units, strata_count, seed)
            .generate()
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn normal_groups(
        case_study: &str,
        base_mean: f64,
        base_variance: f64,
        total_units: usize,
        strata_count: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = NormalGroupsSpec::new(parse_case(case_study)?, base_mean, base_variance, strata_count / 2);
        let inner = PopulationSpec::normal_groups(spec, total_units, strata_count, seed)
            .generate()
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Read a population CSV with `stratum,group,y` columns.
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        let parsed = stratvar::io::read_population(file).map_err(to_py)?;
        Ok(Self {
            inner: parsed.population,
        })
    }

    #[getter]
    fn strata(&self) -> Vec<Vec<f64>> {
        self.inner.strata().to_vec()
    }

    #[getter]
    fn groups(&self) -> Vec<usize> {
        self.inner.group_of().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    #[getter]
    fn total_units(&self) -> usize {
        self.inner.total_units()
    }

    fn __len__(&self) -> usize {
        self.inner.strata_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Population(strata={}, groups={}, units={})",
            self.inner.strata_count(),
            self.inner.group_count(),
            self.inner.total_units()
        )
    }

    /// Per-stratum size, mean, variance and third and fourth central moments.
    fn summaries<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .summaries()
            .map_err(to_py)?
            .into_iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("size", s.size)?;
                d.set_item("mean", s.mean)?;
                d.set_item("variance", s.variance)?;
                d.set_item("mu3", s.mu3)?;
                d.set_item("mu4", s.mu4)?;
                Ok(d)
            })
            .collect()
    }

    #[pyo3(signature = (design, ignore_fpc = false))]
    fn true_variance(&self, design: &str, ignore_fpc: bool) -> PyResult<f64> {
        true_variance(&self.inner, parse_design(design)?, ignore_fpc).map_err(to_py)
    }

    fn design_effect(&self) -> PyResult<f64> {
        theory::design_effect(&self.inner).map_err(to_py)
    }

    /// Draw one sample; the same seed always gives the same sample.
    fn draw(&self, design: &str, seed: u64) -> PyResult<PySample> {
        let design = parse_design(design)?;
        let draw = draw_sample(&self.inner, design, seed).map_err(to_py)?;
        Ok(PySample {
            weights: design.weights(&self.inner),
            group_of: self.inner.group_of().to_vec(),
            draw,
        })
    }

    /// Closed-form bias, variance of the variance estimator, MSE and design
    /// effects. Oracle columns are filled when enumeration fits under `oracle_cap`.
    #[pyo3(signature = (designs = None, oracle_cap = Some(DEFAULT_ENUMERATION_CAP)))]
    fn theory<'py>(
        &self,
        py: Python<'py>,
        designs: Option<Vec<String>>,
        oracle_cap: Option<u64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let designs = match designs {
            Some(names) => names.iter().map(|n| parse_design(n)).collect::<PyResult<Vec<_>>>()?,
            None => vec![Design::OnePerStratum, Design::TwoPerStratum],
        };
        let report = theory::theory_report(&self.inner, &designs, oracle_cap).map_err(to_py)?;
        let rows = report
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("design", r.design.label())?;
                d.set_item("convention", r.convention.label())?;
                d.set_item("v", r.v)?;
                d.set_item("v_fpc", r.v_fpc)?;
                d.set_item("bias", r.bias)?;
                d.set_item("var_v", r.var_v)?;
                d.set_item("mse", r.mse)?;
                d.set_item("mse_printed", r.mse_printed)?;
                d.set_item("oracle_expectation", r.oracle.map(|o| o.expectation))?;
                d.set_item("oracle_variance", r.oracle.map(|o| o.variance))?;
                d.set_item("oracle_bias", r.oracle.map(|o| o.bias))?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let out = PyDict::new(py);
        out.set_item("rows", rows)?;
        out.set_item("deff", report.deff)?;
        out.set_item("deff_paper", report.deff_paper)?;
        Ok(out)
    }
}

/// One realized sample with the estimators defined for its design.
#[pyclass(name = "Sample", module = "stratvar", frozen)]
struct PySample {
    draw: SampleDraw,
    weights: Vec<f64>,
    group_of: Vec<usize>,
}

#[pymethods]
impl PySample {
    #[getter]
    fn design(&self) -> &'static str {
        self.draw.design.label()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.draw.values.clone()
    }

    #[getter]
    fn units(&self) -> Vec<Vec<usize>> {
        self.draw.units.clone()
    }

    /// Stratified estimate of the population mean.
    fn mean(&self) -> PyResult<f64> {
        Ok(stratified_mean(&self.draw, &self.weights).map_err(to_py)?.value)
    }

    /// Collapsed-strata variance estimate and the per-group `s_g^2`.
    fn collapsed_variance(&self) -> PyResult<(f64, Vec<f64>)> {
        let v = collapsed_variance(&self.draw, &self.group_of).map_err(to_py)?;
        Ok((v.value, v.components))
    }

    #[pyo3(signature = (ignore_fpc = false))]
    fn two_per_stratum_variance(&self, ignore_fpc: bool) -> PyResult<f64> {
        Ok(two_per_stratum_variance(&self.draw, &self.weights, ignore_fpc)
            .map_err(to_py)?
            .value)
    }

    /// EB and CEB design variances built from the collapsed group variances.
    #[pyo3(signature = (margin = DEFAULT_TRUNCATION_MARGIN))]
    fn shrinkage_variance(&self, margin: f64) -> PyResult<(f64, f64)> {
        let (_, s2) = self.collapsed_variance()?;
        let fit = shrinkage::ShrinkageFit::fit(&s2, &EbConfig::new(margin).map_err(to_py)?).map_err(to_py)?;
        Ok((
            shrinkage::eb_design_variance(&fit).value,
            shrinkage::ceb_design_variance(&fit).value,
        ))
    }
}

/// EB and CEB shrinkage of a set of group variances.
#[pyclass(name = "ShrinkageFit", module = "stratvar", frozen)]
struct PyShrinkageFit {
    inner: shrinkage::ShrinkageFit,
}

#[pymethods]
impl PyShrinkageFit {
    #[new]
    #[pyo3(signature = (s2, margin = DEFAULT_TRUNCATION_MARGIN))]
    fn new(s2: Vec<f64>, margin: f64) -> PyResult<Self> {
        let cfg = EbConfig::new(margin).map_err(to_py)?;
        let inner = shrinkage::ShrinkageFit::fit(&s2, &cfg).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn s2(&self) -> Vec<f64> {
        self.inner.s2.clone()
    }

    #[getter]
    fn ensemble_mean(&self) -> f64 {
        self.inner.prior.ensemble_mean
    }

    #[getter]
    fn a_mm(&self) -> Option<f64> {
        self.inner.prior.a_mm
    }

    #[getter]
    fn a_star(&self) -> f64 {
        self.inner.prior.a_star
    }

    #[getter]
    fn eb(&self) -> Vec<f64> {
        self.inner.delta_eb.clone()
    }

    #[getter]
    fn ceb(&self) -> Vec<f64> {
        self.inner.delta_ceb.clone()
    }

    #[getter]
    fn ceb_raw(&self) -> Vec<f64> {
        self.inner.ceb_raw.clone()
    }

    #[getter]
    fn fallback(&self) -> Vec<bool> {
        self.inner.ceb_fallback.clone()
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.degenerate
    }

    #[getter]
    fn bracket(&self) -> f64 {
        self.inner.bracket
    }

    fn posterior_variances(&self) -> PyResult<Vec<f64>> {
        self.inner
            .s2
            .iter()
            .map(|&s| shrinkage::posterior_variance(self.inner.prior.a_star, s).map_err(to_py))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ShrinkageFit(groups={}, a_star={}, degenerate={})",
            self.inner.groups(),
            self.inner.prior.a_star,
            self.inner.degenerate
        )
    }
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    config::preset_names().collect()
}

#[pyfunction]
fn preset_source(name: &str) -> PyResult<&'static str> {
    config::preset_source(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset `{name}`")))
}

/// Run every study of a preset or TOML config and return the report rows.
#[pyfunction]
#[pyo3(signature = (preset = None, config = None, seed = None, replications = None, workers = None))]
fn simulate<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    config: Option<&str>,
    seed: Option<u64>,
    replications: Option<u64>,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = match (preset, config) {
        (Some(name), None) => config::preset(name),
        (None, Some(src)) => StudyConfigFile::from_toml_str(src),
        _ => return Err(PyValueError::new_err("pass exactly one of preset or config")),
    }
    .map_err(to_py)?;
    if let Some(s) = seed {
        cfg.simulation.seed = s;
    }
    if let Some(r) = replications {
        cfg.simulation.replications = r;
    }
    if let Some(w) = workers {
        cfg.simulation.workers = w;
    }
    let studies = cfg.studies().map_err(to_py)?;
    let reports = py
        .detach(|| {
            studies
                .iter()
                .map(|s| run_study(&s.config))
                .collect::<stratvar::Result<Vec<_>>>()
        })
        .map_err(to_py)?;
    let mut rows = Vec::new();
    for row in reports.iter().flat_map(|r| &r.rows) {
        let d = PyDict::new(py);
        d.set_item("study", &row.study)?;
        d.set_item("estimator", &row.estimator)?;
        d.set_item("e", row.e)?;
        d.set_item("metric", row.metric.label())?;
        d.set_item("value", row.value)?;
        d.set_item("mc_se", row.mc_se)?;
        rows.push(d);
    }
    Ok(rows)
}

#[pymodule(name = "stratvar")]
pub fn stratvar_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPopulation>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyShrinkageFit>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_source, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("DEFAULT_SEED", config::DEFAULT_SEED)?;
    Ok(())
}
