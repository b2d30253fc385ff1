//! Variance estimation for stratified designs that draw one unit per stratum.
//!
//! The crate compares two designs over a population of `2H` strata paired
//! into `H` groups: one unit from each stratum, or two units from each merged
//! group. Under the first design the classical collapsed-stratum estimator is
//! biased upward; [`shrinkage`] provides empirical Bayes and constrained
//! empirical Bayes alternatives. [`theory`] gives closed forms and an
//! exhaustive-enumeration oracle, and [`montecarlo`] runs the replication
//! studies.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod error;
pub mod estimators;
pub mod io;
pub mod montecarlo;
pub mod numeric;
pub mod population;
pub mod shrinkage;
pub mod theory;

pub use design::{Design, SampleDraw};
pub use error::{Error, Result};
pub use estimators::{VarianceEstimate, VarianceMethod};
pub use population::{CaseStudy, FinitePopulation, PopulationSpec, StratumSummary};
pub use shrinkage::{EbConfig, ShrinkageFit};
pub use theory::{Convention, TheoryReport};
