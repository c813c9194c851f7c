//! Exposure mappings, realized exposures and the exposure-probability engine.

mod map;
mod probs;
mod value;

pub use map::{stat_of, Contrast, ExposureIds, ExposureIndex, ExposureMap, Targets};
pub use probs::{
    monte_carlo_contrast_probs, monte_carlo_marginal_table, ClassProbs, ContrastProbs, CrossTimeProbs,
    MarginalTable, PairCells, ProbMethod, ProbabilityEngine, NO_ID,
};
pub use value::{Exposure, MAX_PARTS};
