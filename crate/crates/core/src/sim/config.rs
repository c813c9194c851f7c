//! Experiment configuration, loaded from TOML or JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::exposure::{Contrast, Exposure, ExposureMap};
use crate::outcomes::DgpSpec;
use crate::population::{gen_erdos_renyi, partition_to_graph, GroupPartition, InterferenceGraph};
use crate::variance::WithinUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    CltTec,
    CltAtec,
    StabilityRmse,
    StabilityCi,
    EpsilonSensitivity,
    GroupSize,
    HouseholdMixed,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::CltTec,
        Scenario::CltAtec,
        Scenario::StabilityRmse,
        Scenario::StabilityCi,
        Scenario::EpsilonSensitivity,
        Scenario::GroupSize,
        Scenario::HouseholdMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CltTec => "clt-tec",
            Scenario::CltAtec => "clt-atec",
            Scenario::StabilityRmse => "stability-rmse",
            Scenario::StabilityCi => "stability-ci",
            Scenario::EpsilonSensitivity => "epsilon-sensitivity",
            Scenario::GroupSize => "group-size",
            Scenario::HouseholdMixed => "household-mixed",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Replication budget relative to the configured `reps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Full,
    Half,
    Quarter,
}

impl Scale {
    pub fn apply(self, reps: usize) -> usize {
        match self {
            Scale::Full => reps,
            Scale::Half => reps.div_ceil(2),
            Scale::Quarter => reps.div_ceil(4),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Half => "half",
            Scale::Quarter => "quarter",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "half" => Ok(Scale::Half),
            "quarter" => Ok(Scale::Quarter),
            _ => Err(Error::Config(format!("unknown scale {s:?}; expected full, half or quarter"))),
        }
    }
}

/// Number of time steps, fixed or derived from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSteps {
    Fixed(usize),
    Rule(TimeRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeRule {
    /// `⌊√n⌋`.
    SqrtN,
    /// `⌊n^0.8⌋`.
    NPow08,
}

impl Default for TimeSteps {
    fn default() -> Self {
        TimeSteps::Fixed(1)
    }
}

impl TimeSteps {
    pub fn at(self, n: usize) -> usize {
        match self {
            TimeSteps::Fixed(t) => t,
            TimeSteps::Rule(TimeRule::SqrtN) => n.isqrt(),
            TimeSteps::Rule(TimeRule::NPow08) => (n as f64).powf(0.8).floor() as usize,
        }
    }
}

/// Upper size bound of random households.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeBound {
    Fixed(usize),
    Rule(SizeRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeRule {
    /// `⌊n^{1/3}⌋`.
    CubeRoot,
}

impl SizeBound {
    pub fn at(self, n: usize) -> usize {
        match self {
            SizeBound::Fixed(m) => m,
            SizeBound::Rule(SizeRule::CubeRoot) => n.cbrt(),
        }
    }
}

trait Cbrt {
    fn cbrt(self) -> usize;
}

impl Cbrt for usize {
    fn cbrt(self) -> usize {
        let mut r = (self as f64).cbrt().round() as usize;
        while r * r * r > self {
            r -= 1;
        }
        while (r + 1) * (r + 1) * (r + 1) <= self {
            r += 1;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PopulationConfig {
    /// Households with sizes uniform on `min-size..=max-size`; the last may be smaller.
    Households {
        #[serde(rename = "min-size")]
        min_size: usize,
        #[serde(rename = "max-size")]
        max_size: SizeBound,
    },
    /// Households of exactly `size` units (`household-sizes` overrides it per run).
    EqualHouseholds { size: usize },
    /// Erdős–Rényi graph with edge probability `reference-p · reference-n / n`.
    ErdosRenyi {
        #[serde(rename = "reference-p")]
        reference_p: f64,
        #[serde(rename = "reference-n")]
        reference_n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesignConfig {
    Bernoulli {
        p: f64,
    },
    TwoStage {
        #[serde(rename = "p-arm")]
        p_arm: f64,
        #[serde(rename = "p-high")]
        p_high: f64,
        #[serde(rename = "p-low")]
        p_low: f64,
    },
    ClusterRandomized {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapConfig {
    SelfOnly,
    SelfAndAnyNeighbor,
    /// Buckets `[0,1/4), [1/4,1/2), [1/2,3/4), [3/4,1]`.
    QuartileBuckets,
    /// Thresholds written as fractions, e.g. `["1/3", "2/3"]`.
    FractionBuckets { thresholds: Vec<String> },
    SelfAndFraction,
    TwoPeriodSelfAndFraction,
    StratifiedCarryover,
}

impl MapConfig {
    pub fn build(&self) -> Result<ExposureMap> {
        let map = match self {
            MapConfig::SelfOnly => ExposureMap::SelfOnly,
            MapConfig::SelfAndAnyNeighbor => ExposureMap::SelfAndAnyNeighbor,
            MapConfig::QuartileBuckets => ExposureMap::quartile_buckets(),
            MapConfig::FractionBuckets { thresholds } => ExposureMap::SelfAndFractionBuckets {
                thresholds: thresholds
                    .iter()
                    .map(|s| s.trim().parse::<Ratio<i64>>().map_err(|e| Error::Config(format!("threshold {s:?}: {e}"))))
                    .collect::<Result<_>>()?,
            },
            MapConfig::SelfAndFraction => ExposureMap::SelfAndFraction,
            MapConfig::TwoPeriodSelfAndFraction => ExposureMap::TwoPeriodSelfAndFraction,
            MapConfig::StratifiedCarryover => ExposureMap::StratifiedCarryover,
        };
        map.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(map)
    }
}

/// Contrast under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContrastConfig {
    Named(NamedContrast),
    Pair(ExposurePair),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposurePair {
    pub treat: Exposure,
    pub control: Exposure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedContrast {
    /// Everyone treated versus everyone untreated.
    TotalEffect,
    /// `(1,1,r−1,r−1)` versus `(0,0,0,0)` for households of size `r`.
    HouseholdExtremes,
}

impl ContrastConfig {
    pub fn build(&self, household_size: Option<usize>) -> Result<Contrast> {
        match self {
            ContrastConfig::Named(NamedContrast::TotalEffect) => Ok(Contrast::TotalEffect),
            ContrastConfig::Named(NamedContrast::HouseholdExtremes) => {
                let r = household_size
                    .ok_or_else(|| Error::Config("household-extremes needs equal households".into()))?
                    as i64;
                Ok(Contrast::Exposures(Exposure::ints(&[1, 1, r - 1, r - 1]), Exposure::ints(&[0, 0, 0, 0])))
            }
            ContrastConfig::Pair(p) => Ok(Contrast::Exposures(p.treat, p.control)),
        }
    }
}

/// Variance estimator plugged into convex weights and intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceChoice {
    #[default]
    Upper,
    Lower,
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n: Vec<usize>,
    #[serde(default)]
    pub time_steps: TimeSteps,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `δ` of the Gaussian interval `τ̂ ± z √V̂ / √(1−δ)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `δ` of the Chebyshev interval.
    #[serde(default = "default_chebyshev_delta")]
    pub chebyshev_delta: f64,
    pub population: PopulationConfig,
    pub design: DesignConfig,
    pub map: MapConfig,
    pub dgp: DgpSpec,
    pub contrast: ContrastConfig,
    /// Numbers of time steps combined by convex estimators.
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub variance: VarianceChoice,
    /// Within-unit term of the contrast variance estimator.
    #[serde(default)]
    pub within_unit: WithinUnit,
    #[serde(default = "default_multipliers")]
    pub epsilon_multipliers: Vec<f64>,
    /// Independent networks (fresh graph and outcomes) per `n`.
    #[serde(default = "default_networks")]
    pub networks: usize,
    #[serde(default)]
    pub household_sizes: Vec<usize>,
    /// Write Q-Q points of standardized estimates.
    #[serde(default)]
    pub qq: bool,
}

fn default_seed() -> u64 {
    20_240_101
}

fn default_alpha() -> f64 {
    0.05
}

fn default_delta() -> f64 {
    0.04
}

fn default_chebyshev_delta() -> f64 {
    0.05
}

fn default_k() -> Vec<usize> {
    vec![2, 5]
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0]
}

fn default_networks() -> usize {
    1
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`, and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if json { Self::from_json(&text) } else { Self::from_toml(&text) }.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n must list at least one positive size".into());
        }
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0,1)", self.alpha));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside [0,1)", self.delta));
        }
        if !(self.chebyshev_delta > 0.0 && self.chebyshev_delta < 1.0) {
            return bad(format!("chebyshev-delta {} outside (0,1)", self.chebyshev_delta));
        }
        if self.networks == 0 {
            return bad("networks must be positive".into());
        }
        for &n in &self.n {
            if self.time_steps.at(n) == 0 {
                return bad(format!("no time steps at n = {n}"));
            }
        }
        self.dgp.validate().map_err(|e| Error::Config(e.to_string()))?;
        let map = self.map.build()?;
        match &self.population {
            PopulationConfig::Households { min_size, max_size } => {
                for &n in &self.n {
                    if *min_size == 0 || max_size.at(n) < *min_size {
                        return bad(format!("household sizes {min_size}..={} are empty at n = {n}", max_size.at(n)));
                    }
                }
            }
            PopulationConfig::EqualHouseholds { size } if *size == 0 => return bad("household size must be positive".into()),
            PopulationConfig::ErdosRenyi { reference_p, reference_n } => {
                if !(*reference_p >= 0.0 && *reference_p <= 1.0) || *reference_n == 0 {
                    return bad("erdos-renyi needs reference-p in [0,1] and reference-n > 0".into());
                }
                if self.design_needs_partition() {
                    return bad("cluster and two-stage designs need a household population".into());
                }
            }
            _ => {}
        }
        let probs: Vec<f64> = match self.design {
            DesignConfig::Bernoulli { p } | DesignConfig::ClusterRandomized { p } => vec![p],
            DesignConfig::TwoStage { p_arm, p_high, p_low } => vec![p_arm, p_high, p_low],
        };
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("design probabilities must lie in [0,1]".into());
        }
        if self.epsilon_multipliers.is_empty() || self.epsilon_multipliers.iter().any(|m| !(*m >= 0.0)) {
            return bad("epsilon-multipliers must be non-negative and non-empty".into());
        }
        if self.k.contains(&0) {
            return bad("k entries must be at least 1".into());
        }
        match self.scenario {
            Scenario::StabilityRmse | Scenario::EpsilonSensitivity | Scenario::StabilityCi => {
                let kmax = self.k.iter().copied().max().unwrap_or(1).max(2);
                for &n in &self.n {
                    if self.time_steps.at(n) < kmax {
                        return bad(format!("{} needs at least {kmax} time steps", self.scenario));
                    }
                }
                if self.scenario == Scenario::StabilityCi && !self.k.contains(&2) {
                    return bad("stability-ci uses k = 2; include it in k".into());
                }
            }
            Scenario::GroupSize | Scenario::HouseholdMixed => {
                if self.household_sizes.is_empty() || self.household_sizes.contains(&0) {
                    return bad(format!("{} needs positive household-sizes", self.scenario));
                }
                for &r in &self.household_sizes {
                    if let Some(n) = self.n.iter().find(|&&n| n % r != 0) {
                        return bad(format!("n = {n} is not a multiple of household size {r}"));
                    }
                }
                if !matches!(self.population, PopulationConfig::EqualHouseholds { .. }) {
                    return bad(format!("{} needs an equal-households population", self.scenario));
                }
                if self.scenario == Scenario::HouseholdMixed {
                    if map != ExposureMap::StratifiedCarryover || self.design != (DesignConfig::Bernoulli { p: 0.5 }) {
                        return bad("household-mixed needs the stratified-carryover map and Bernoulli(1/2)".into());
                    }
                    if self.contrast != ContrastConfig::Named(NamedContrast::HouseholdExtremes) {
                        return bad("household-mixed uses the household-extremes contrast".into());
                    }
                }
            }
            Scenario::CltTec | Scenario::CltAtec => {}
        }
        if self.contrast == ContrastConfig::Named(NamedContrast::HouseholdExtremes) && map != ExposureMap::StratifiedCarryover {
            return bad("household-extremes applies to the stratified-carryover map".into());
        }
        Ok(())
    }

    fn design_needs_partition(&self) -> bool {
        !matches!(self.design, DesignConfig::Bernoulli { .. })
    }

    /// Graph and, for household populations, the partition at size `n`.
    pub(crate) fn population<R: Rng + ?Sized>(
        &self,
        n: usize,
        household_size: Option<usize>,
        rng: &mut R,
    ) -> Result<(Arc<InterferenceGraph>, Option<Arc<GroupPartition>>)> {
        let partition = match &self.population {
            PopulationConfig::Households { min_size, max_size } => GroupPartition::random_sizes(n, *min_size, max_size.at(n), rng)?,
            PopulationConfig::EqualHouseholds { size } => GroupPartition::equal(n, household_size.unwrap_or(*size))?,
            PopulationConfig::ErdosRenyi { reference_p, reference_n } => {
                let p = (reference_p * *reference_n as f64 / n as f64).min(1.0);
                return Ok((Arc::new(gen_erdos_renyi(n, p, rng)?), None));
            }
        };
        Ok((Arc::new(partition_to_graph(&partition)), Some(Arc::new(partition))))
    }

    pub(crate) fn design(&self, partition: Option<&Arc<GroupPartition>>) -> Result<Design<f64>> {
        let need = || partition.cloned().ok_or_else(|| Error::Config("design needs a household partition".into()));
        Ok(match self.design {
            DesignConfig::Bernoulli { p } => Design::Bernoulli { p },
            DesignConfig::TwoStage { p_arm, p_high, p_low } => Design::TwoStage {
                p_arm,
                p_high,
                p_low,
                partition: need()?,
            },
            DesignConfig::ClusterRandomized { p } => Design::ClusterRandomized { p, partition: need()? },
        })
    }
}

/// Bundled preset configurations.
pub fn preset(scenario: Scenario) -> ExperimentConfig {
    let text = match scenario {
        Scenario::CltTec => include_str!("../../../../configs/clt-tec.toml"),
        Scenario::CltAtec => include_str!("../../../../configs/clt-atec.toml"),
        Scenario::StabilityRmse => include_str!("../../../../configs/stability-rmse.toml"),
        Scenario::StabilityCi => include_str!("../../../../configs/stability-ci.toml"),
        Scenario::EpsilonSensitivity => include_str!("../../../../configs/epsilon-sensitivity.toml"),
        Scenario::GroupSize => include_str!("../../../../configs/group-size.toml"),
        Scenario::HouseholdMixed => include_str!("../../../../configs/household-mixed.toml"),
    };
    ExperimentConfig::from_toml(text).expect("bundled preset parses")
}

/// Default output directory for a scenario.
pub fn default_out_dir(scenario: Scenario) -> PathBuf {
    PathBuf::from("results").join(scenario.name())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for sc in Scenario::ALL {
            let cfg = preset(sc);
            assert_eq!(cfg.scenario, sc);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = include_str!("../../../../configs/clt-tec.toml");
        let top = format!("bogus = 1\n{base}");
        assert!(matches!(ExperimentConfig::from_toml(&top), Err(Error::Config(_))));
        let nested = format!("{base}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
        let text = include_str!("../../../../configs/clt-tec.toml").replace("p-arm", "p-army");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn semantic_checks() {
        let mut cfg = preset(Scenario::CltTec);
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = preset(Scenario::GroupSize);
        cfg.n = vec![650];
        assert!(cfg.validate().is_err());
        let mut cfg = preset(Scenario::StabilityRmse);
        cfg.design = DesignConfig::TwoStage { p_arm: 0.5, p_high: 0.9, p_low: 0.1 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_sizes() {
        assert_eq!(TimeSteps::Rule(TimeRule::SqrtN).at(1000), 31);
        assert_eq!(TimeSteps::Rule(TimeRule::NPow08).at(1000), 251);
        assert_eq!(SizeBound::Rule(SizeRule::CubeRoot).at(1000), 10);
        assert_eq!(SizeBound::Rule(SizeRule::CubeRoot).at(999), 9);
        assert_eq!(Scale::Quarter.apply(50_000), 12_500);
        assert_eq!(Scale::Half.apply(101), 51);
    }
}
