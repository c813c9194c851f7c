use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, PopulationConfig, Scenario, VarianceChoice};
use super::{QqSeries, ResultRow};
use crate::design::{Design, PanelDesign};
use crate::error::{Error, Result};
use crate::estimators::{convex_estimate, estimate_epsilon, optimal_alpha_pair, solve_weights, HtInput};
use crate::exposure::{ContrastProbs, ExposureIds, ExposureIndex, ProbabilityEngine, Targets};
use crate::inference::{chebyshev_ci, gaussian_ci, normality_diagnostics, proportion};
use crate::outcomes::{contrast_value, realize, stability_violation, OutcomeMatrix, PotentialOutcomeTable};
use crate::population::GroupPartition;
use crate::rng::{index, stream, Domain};
use crate::variance::{
    aggregate_atec, atec_var_estimator, household_closed_form, plugin_convex, true_covariance,
    true_variance, var_estimators_total_effect, var_tec,
};

pub(super) fn dispatch(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<QqSeries>)> {
    let mut sink = Sink::new(cfg);
    match cfg.scenario {
        Scenario::CltTec | Scenario::CltAtec => {
            for &n in &cfg.n {
                clt_cell(cfg, n, None, "", &mut sink)?;
            }
        }
        Scenario::GroupSize => {
            for &r in &cfg.household_sizes {
                for &n in &cfg.n {
                    clt_cell(cfg, n, Some(r), &format!("r={r}/"), &mut sink)?;
                }
            }
        }
        Scenario::StabilityRmse | Scenario::EpsilonSensitivity => {
            for &n in &cfg.n {
                stability_rmse(cfg, n, &mut sink)?;
            }
        }
        Scenario::StabilityCi => {
            for net in 0..cfg.networks {
                for &n in &cfg.n {
                    stability_ci(cfg, n, net, &mut sink)?;
                }
            }
        }
        Scenario::HouseholdMixed => {
            for &r in &cfg.household_sizes {
                for &n in &cfg.n {
                    household_mixed(cfg, n, r, &mut sink)?;
                }
            }
        }
    }
    Ok((sink.rows, sink.qq))
}

struct Sink {
    scenario: String,
    seed: u64,
    hash: String,
    reps: usize,
    rows: Vec<ResultRow>,
    qq: Vec<QqSeries>,
}

impl Sink {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            scenario: cfg.scenario.name().to_string(),
            seed: cfg.seed,
            hash: cfg.hash(),
            reps: cfg.reps,
            rows: Vec::new(),
            qq: Vec::new(),
        }
    }

    fn push(&mut self, n: usize, t: usize, metric: String, value: f64, se: Option<f64>) {
        self.rows.push(ResultRow {
            scenario: self.scenario.clone(),
            n,
            t,
            reps: self.reps,
            metric,
            value,
            se,
            seed: self.seed,
            config_hash: self.hash.clone(),
        });
    }

    /// Moment summaries and normality diagnostics of standardized draws.
    fn normality(&mut self, n: usize, t: usize, prefix: &str, z: &[f64], qq: Option<String>) -> Result<()> {
        if z.len() < 20 {
            return Ok(());
        }
        let r = normality_diagnostics(z)?;
        let (ss, sk) = r.moment_ses();
        let m = (z.len() as f64).sqrt();
        self.push(n, t, format!("{prefix}std_mean"), r.mean, Some(r.sd / m));
        self.push(n, t, format!("{prefix}std_sd"), r.sd, None);
        self.push(n, t, format!("{prefix}skewness"), r.skewness, Some(ss));
        self.push(n, t, format!("{prefix}excess_kurtosis"), r.excess_kurtosis, Some(sk));
        self.push(n, t, format!("{prefix}jarque_bera"), r.jarque_bera, None);
        self.push(n, t, format!("{prefix}jb_p_value"), r.p_value, None);
        self.push(n, t, format!("{prefix}ks_distance"), r.ks_distance, None);
        if let Some(label) = qq {
            self.qq.push(QqSeries { label, points: r.qq });
        }
        Ok(())
    }
}

/// A fixed population, design and potential-outcome table.
struct Cell {
    index: ExposureIndex,
    design: Design<f64>,
    partition: Option<Arc<GroupPartition>>,
    panel: PanelDesign<f64>,
    targets: Targets,
    probs: ContrastProbs<f64>,
    table: PotentialOutcomeTable<f64>,
    t: usize,
    key: [u64; 3],
}

impl Cell {
    fn build(cfg: &ExperimentConfig, n: usize, network: usize, household_size: Option<usize>) -> Result<Self> {
        let key = [n as u64, network as u64, household_size.unwrap_or(0) as u64];
        let mut rng = stream(cfg.seed, Domain::Population, index(&key));
        let (graph, partition) = cfg.population(n, household_size, &mut rng)?;
        let design = cfg.design(partition.as_ref())?;
        let index_ = ExposureIndex::new(cfg.map.build()?, graph)?;
        let t = cfg.time_steps.at(n);
        let r = household_size.or(match cfg.population {
            PopulationConfig::EqualHouseholds { size } => Some(size),
            _ => None,
        });
        let contrast = cfg.contrast.build(r)?;
        let targets = Targets::new(index_.map(), index_.graph(), &contrast)?;
        let probs = ProbabilityEngine::new(&index_, &design)?.contrast_probs(&targets)?;
        for tt in 0..t {
            probs.ensure_overlap(tt)?;
        }
        let mut rng = stream(cfg.seed, Domain::Outcomes, index(&key));
        let table = cfg.dgp.generate::<f64, _>(&index_, t, &mut rng)?;
        Ok(Self {
            panel: PanelDesign::new(design.clone(), n, t)?,
            index: index_,
            design,
            partition,
            targets,
            probs,
            table,
            t,
            key,
        })
    }

    fn draw(&self, seed: u64, rep: usize) -> Result<(ExposureIds, OutcomeMatrix<f64>)> {
        let [a, b, c] = self.key;
        let mut rng = stream(seed, Domain::Assignment, index(&[a, b, c, rep as u64]));
        let w = self.panel.sample(&mut rng);
        let ids = self.index.realize(&w);
        let y = realize(&self.table, &ids)?;
        Ok((ids, y))
    }

    fn truth(&self) -> Result<Vec<f64>> {
        (0..self.t).map(|t| contrast_value(&self.table, &self.targets, t)).collect()
    }

    fn min_probability(&self) -> f64 {
        (0..self.t).map(|t| self.probs.min_probability(t)).fold(1.0, f64::min)
    }

    /// Exact variance of the time-averaged estimator.
    fn true_atec_variance(&self) -> Result<f64> {
        let vars: Vec<f64> = (0..self.t).map(|t| true_variance(&self.table, &self.probs, t)).collect::<Result<_>>()?;
        let covs = if self.index.map().lea_order() > 1 && self.t > 1 {
            let engine = ProbabilityEngine::new(&self.index, &self.design)?;
            (1..self.t)
                .map(|t| true_covariance(&self.table, &self.probs, &engine.crosstime_probs(&self.targets, t - 1, t)?))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(aggregate_atec(&vars, &covs))
    }
}

fn replicate<T: Send>(reps: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..reps).into_par_iter().map(f).collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    (mean, (var / m).sqrt())
}

/// Sample variance and its large-sample standard error.
fn variance_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m;
    let var = if xs.len() > 1 { m2 * m / (m - 1.0) } else { 0.0 };
    (var, ((m4 - m2 * m2).max(0.0) / m).sqrt())
}

/// Root mean squared error and its delta-method standard error.
fn rmse_se(errors: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let (mse, se) = mean_se(&sq);
    let rmse = mse.sqrt();
    (rmse, if rmse > 0.0 { se / (2.0 * rmse) } else { 0.0 })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central-limit study of the exposure contrast, averaged over time when `T > 1`.
fn clt_cell(cfg: &ExperimentConfig, n: usize, household_size: Option<usize>, prefix: &str, sink: &mut Sink) -> Result<()> {
    let cell = Cell::build(cfg, n, 0, household_size)?;
    let t = cell.t;
    let truth = cell.truth()?.iter().sum::<f64>() / t as f64;
    let var = cell.true_atec_variance()?;
    let draws = replicate(cfg.reps, |rep| {
        let (ids, y) = cell.draw(cfg.seed, rep)?;
        let input = HtInput::new(&y, &ids, &cell.probs)?;
        let est = input.ht_atec()?;
        let reports = (0..t).map(|tt| var_tec(&input, tt, cfg.within_unit)).collect::<Result<Vec<_>>>()?;
        Ok((est, atec_var_estimator(&reports)?.point))
    })?;
    let mut hits = 0;
    let mut length = 0.0;
    for &(est, vhat) in &draws {
        let ci = gaussian_ci(est, vhat.max(0.0), cfg.alpha, cfg.delta)?;
        hits += usize::from(ci.contains(truth));
        length += ci.length();
    }
    let estimates: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let (coverage, coverage_se) = proportion(hits, draws.len());
    let (mean, mean_se_) = mean_se(&estimates);
    let (emp_var, emp_var_se) = variance_se(&estimates);
    sink.push(n, t, format!("{prefix}true_estimand"), truth, None);
    sink.push(n, t, format!("{prefix}true_variance"), var, None);
    sink.push(n, t, format!("{prefix}min_probability"), cell.min_probability(), None);
    sink.push(n, t, format!("{prefix}mean_estimate"), mean, Some(mean_se_));
    sink.push(n, t, format!("{prefix}empirical_variance"), emp_var, Some(emp_var_se));
    sink.push(n, t, format!("{prefix}coverage"), coverage, Some(coverage_se));
    sink.push(n, t, format!("{prefix}mean_ci_length"), length / draws.len() as f64, None);
    if var > 0.0 {
        let mut ratios: Vec<f64> = draws.iter().map(|d| d.1 / var).collect();
        ratios.sort_by(f64::total_cmp);
        sink.push(n, t, format!("{prefix}vhat_ratio_q1"), quantile(&ratios, 0.25), None);
        sink.push(n, t, format!("{prefix}vhat_ratio_median"), quantile(&ratios, 0.5), None);
        sink.push(n, t, format!("{prefix}vhat_ratio_q3"), quantile(&ratios, 0.75), None);
        let sd = var.sqrt();
        let z: Vec<f64> = estimates.iter().map(|e| (e - truth) / sd).collect();
        let label = cfg.qq.then(|| format!("{}n{n}", household_size.map_or(String::new(), |r| format!("r{r}_"))));
        sink.normality(n, t, prefix, &z, label)?;
    }
    Ok(())
}

/// Combines the last `k` estimates with weights from their variance estimates.
fn combine(ht: &[f64], vars: &[f64], k: usize, eps: f64) -> Result<f64> {
    let m = ht.len();
    if k == 1 {
        return Ok(ht[m - 1]);
    }
    match solve_weights(&vars[m - k..], eps, None, None) {
        Ok(sol) => convex_estimate(&ht[m - k..], &sol.weights),
        Err(Error::Degenerate(_)) => Ok(ht[m - 1]),
        Err(e) => Err(e),
    }
}

fn pick_variance(input: &HtInput<f64>, t: usize, choice: VarianceChoice) -> Result<f64> {
    let (u, d) = var_estimators_total_effect(input, t)?;
    Ok(match choice {
        VarianceChoice::Upper => u.point,
        VarianceChoice::Lower => d.point,
    }
    .max(0.0))
}

/// RMSE of the current-step estimator and of convex combinations.
fn stability_rmse(cfg: &ExperimentConfig, n: usize, sink: &mut Sink) -> Result<()> {
    let cell = Cell::build(cfg, n, 0, None)?;
    let t = cell.t;
    let truth = contrast_value(&cell.table, &cell.targets, t - 1)?;
    let kmax = cfg.k.iter().copied().max().unwrap_or(1);
    let first = t - kmax;
    let draws = replicate(cfg.reps, |rep| {
        let (ids, y) = cell.draw(cfg.seed, rep)?;
        let input = HtInput::new(&y, &ids, &cell.probs)?;
        let ht = (first..t).map(|tt| input.ht_tec(tt)).collect::<Result<Vec<_>>>()?;
        let vars = (first..t).map(|tt| pick_variance(&input, tt, cfg.variance)).collect::<Result<Vec<_>>>()?;
        let eps = estimate_epsilon(&y, &ids).value;
        let mut conv = Vec::with_capacity(cfg.epsilon_multipliers.len() * cfg.k.len());
        for &mult in &cfg.epsilon_multipliers {
            for &k in &cfg.k {
                conv.push(combine(&ht, &vars, k, eps * mult)?);
            }
        }
        Ok((ht[kmax - 1], conv, eps))
    })?;
    let ht_err: Vec<f64> = draws.iter().map(|d| d.0 - truth).collect();
    let (rmse, se) = rmse_se(&ht_err);
    let eps_hat: Vec<f64> = draws.iter().map(|d| d.2).collect();
    let (eps_mean, eps_se) = mean_se(&eps_hat);
    sink.push(n, t, "true_effect".into(), truth, None);
    sink.push(n, t, "true_epsilon".into(), stability_violation(&cell.table), None);
    sink.push(n, t, "mean_epsilon_hat".into(), eps_mean, Some(eps_se));
    let labelled = cfg.scenario == crate::sim::Scenario::EpsilonSensitivity;
    for (mi, &mult) in cfg.epsilon_multipliers.iter().enumerate() {
        let prefix = if labelled { format!("mult={mult}/") } else { String::new() };
        sink.push(n, t, format!("{prefix}rmse_ht"), rmse, Some(se));
        sink.push(n, t, format!("{prefix}bias_ht"), mean_se(&ht_err).0, Some(mean_se(&ht_err).1));
        for (ki, &k) in cfg.k.iter().enumerate() {
            let err: Vec<f64> = draws.iter().map(|d| d.1[mi * cfg.k.len() + ki] - truth).collect();
            let (r, s) = rmse_se(&err);
            let (b, bs) = mean_se(&err);
            sink.push(n, t, format!("{prefix}rmse_k{k}"), r, Some(s));
            sink.push(n, t, format!("{prefix}bias_k{k}"), b, Some(bs));
        }
    }
    Ok(())
}

/// Coverage and length of Gaussian and Chebyshev intervals around the
/// two-step convex estimator, for both variance estimators.
fn stability_ci(cfg: &ExperimentConfig, n: usize, network: usize, sink: &mut Sink) -> Result<()> {
    let cell = Cell::build(cfg, n, network, None)?;
    let t = cell.t;
    let truth = contrast_value(&cell.table, &cell.targets, t - 1)?;
    let draws = replicate(cfg.reps, |rep| {
        let (ids, y) = cell.draw(cfg.seed, rep)?;
        let input = HtInput::new(&y, &ids, &cell.probs)?;
        let (cur, prev) = (input.ht_tec(t - 1)?, input.ht_tec(t - 2)?);
        let (uc, dc) = var_estimators_total_effect(&input, t - 1)?;
        let (up, dp) = var_estimators_total_effect(&input, t - 2)?;
        let eps = estimate_epsilon(&y, &ids).value;
        let mut out = [(false, 0.0); 4];
        for (slot, (vc, vp)) in [(dc.point, dp.point), (uc.point, up.point)].into_iter().enumerate() {
            let (vc, vp) = (vc.max(0.0), vp.max(0.0));
            let alpha = match optimal_alpha_pair(vc, vp, eps, 1) {
                Ok(a) => a,
                Err(Error::Degenerate(_)) => 1.0,
                Err(e) => return Err(e),
            };
            let est = alpha * cur + (1.0 - alpha) * prev;
            let v = plugin_convex(alpha, vc, vp).point;
            let g = gaussian_ci(est, v, cfg.alpha, cfg.delta)?;
            let c = chebyshev_ci(est, v, (1.0 - alpha) * (prev - cur), cfg.chebyshev_delta)?;
            out[2 * slot] = (g.contains(truth), g.length());
            out[2 * slot + 1] = (c.contains(truth), c.length());
        }
        Ok(out)
    })?;
    let prefix = format!("net={}/", network + 1);
    sink.push(n, t, format!("{prefix}true_effect"), truth, None);
    for (slot, name) in ["gaussian_lower", "chebyshev_lower", "gaussian_upper", "chebyshev_upper"].iter().enumerate() {
        let hits = draws.iter().filter(|d| d[slot].0).count();
        let (p, se) = proportion(hits, draws.len());
        let lengths: Vec<f64> = draws.iter().map(|d| d[slot].1).collect();
        let (len, len_se) = mean_se(&lengths);
        sink.push(n, t, format!("{prefix}{name}_coverage"), p, Some(se));
        sink.push(n, t, format!("{prefix}{name}_mean_length"), len, Some(len_se));
    }
    Ok(())
}

/// Households with spillovers and carryover, standardized by the closed-form variance.
fn household_mixed(cfg: &ExperimentConfig, n: usize, r: usize, sink: &mut Sink) -> Result<()> {
    let cell = Cell::build(cfg, n, 0, Some(r))?;
    let t = cell.t;
    let partition = cell.partition.as_ref().expect("household population");
    let moments = household_closed_form(&cell.table, partition, cell.index.map(), &cell.design)?;
    let var = moments.atec_variance();
    if !(var > 0.0) {
        return Err(Error::Assumption(format!(
            "the time-averaged contrast has zero variance at n = {n}, r = {r}; the non-degeneracy condition fails"
        )));
    }
    let truth = cell.truth()?.iter().sum::<f64>() / t as f64;
    let estimates = replicate(cfg.reps, |rep| {
        let (ids, y) = cell.draw(cfg.seed, rep)?;
        HtInput::new(&y, &ids, &cell.probs)?.ht_atec()
    })?;
    let prefix = format!("r={r}/");
    let (mean, mse) = mean_se(&estimates);
    let (emp, emp_se) = variance_se(&estimates);
    sink.push(n, t, format!("{prefix}true_estimand"), truth, None);
    sink.push(n, t, format!("{prefix}closed_form_variance"), var, None);
    sink.push(n, t, format!("{prefix}mean_estimate"), mean, Some(mse));
    sink.push(n, t, format!("{prefix}empirical_variance"), emp, Some(emp_se));
    sink.push(n, t, format!("{prefix}variance_ratio"), emp / var, Some(emp_se / var));
    let sd = var.sqrt();
    let z: Vec<f64> = estimates.iter().map(|e| (e - truth) / sd).collect();
    sink.normality(n, t, &prefix, &z, cfg.qq.then(|| format!("r{r}_n{n}")))
}
