//! Design-based inference for panel experiments with population interference
//! and carryover effects.
//!
//! The numerical core is generic over the scalar type; the aliases below fix
//! it to `f64`.

pub mod design;
pub mod error;
pub mod estimators;
pub mod exposure;
pub mod inference;
pub mod numeric;
pub mod outcomes;
pub mod population;
pub mod rng;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};

pub type Design = design::Design<f64>;
pub type PanelDesign = design::PanelDesign<f64>;
pub type ProbabilityEngine<'a> = exposure::ProbabilityEngine<'a, f64>;
pub type ContrastProbs = exposure::ContrastProbs<f64>;
pub type CrossTimeProbs = exposure::CrossTimeProbs<f64>;
pub type MarginalTable = exposure::MarginalTable<f64>;
pub type PotentialOutcomeTable = outcomes::PotentialOutcomeTable<f64>;
pub type OutcomeMatrix = outcomes::OutcomeMatrix<f64>;
pub type HtInput<'a> = estimators::HtInput<'a, f64>;
pub type WeightSolution = estimators::WeightSolution<f64>;
pub type VarianceReport = variance::VarianceReport<f64>;
pub type HouseholdMoments = variance::HouseholdMoments<f64>;
pub type ConfidenceInterval = inference::ConfidenceInterval<f64>;
