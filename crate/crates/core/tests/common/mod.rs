//! Exhaustive-enumeration oracle shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use interference_core::design::{Design, PanelDesign};
use interference_core::error::Error;
use interference_core::estimators::HtInput;
use interference_core::exposure::{Contrast, ContrastProbs, ExposureIndex, ExposureMap, ProbabilityEngine, Targets};
use interference_core::outcomes::{contrast_value, realize, stability_violation, PotentialOutcomeTable};
use interference_core::population::{gen_erdos_renyi, GroupPartition};
use interference_core::rng::{stream, Domain};
use interference_core::variance::{
    conservative_var_tec, cov_estimator_total_effect, true_covariance, true_variance, var_estimators_total_effect,
};
use rand::Rng;

/// Worst-case deviations and counts gathered over the instances.
#[derive(Debug, Default, Clone)]
pub struct OracleSummary {
    pub instances: usize,
    pub contrasts: usize,
    pub families: [usize; 3],
    pub maps: [usize; 3],
    pub ht_bias: f64,
    pub var_formula: f64,
    pub cov_formula: f64,
    pub cov_checks: usize,
    /// Smallest `E[V̂] − Var` for the conservative estimator.
    pub conservative_slack: f64,
    /// Smallest `E[V̂^u] − Var` and `Var − E[V̂^d]` on non-negative tables.
    pub upper_slack: f64,
    pub lower_slack: f64,
    pub cov_estimator_bias: f64,
    pub cov_estimator_checks: usize,
    /// Checks where the true covariance is non-zero.
    pub cov_estimator_nontrivial: usize,
    pub positivity_errors: usize,
    /// Largest `|E τ̂_c − τ_t| − 2(1−α)ε*` for convex combinations.
    pub convex_excess: f64,
    pub convex_checks: usize,
}

impl OracleSummary {
    fn new() -> Self {
        Self {
            conservative_slack: f64::INFINITY,
            upper_slack: f64::INFINITY,
            lower_slack: f64::INFINITY,
            convex_excess: f64::NEG_INFINITY,
            ..Default::default()
        }
    }
}

pub struct Instance {
    pub index: ExposureIndex,
    pub design: Design<f64>,
    pub t: usize,
    pub family: usize,
    pub map: usize,
}

/// Smallest target probability admitted, keeping HT magnitudes within f64 resolution of the tolerances.
pub const MIN_TARGET_PROB: f64 = 2e-3;

pub fn random_instance(seed: u64, id: u64, attempt: u64, max_n: usize, max_t: usize) -> Instance {
    let mut rng = stream(seed, Domain::Instance, id * 1024 + attempt);
    let n = rng.random_range(2..=max_n);
    let t = if rng.random_bool(0.7) { max_t } else { rng.random_range(1..=max_t) };
    let graph = gen_erdos_renyi(n, rng.random_range(0.3..0.8), &mut rng).unwrap();
    let part = Arc::new(GroupPartition::random_sizes(n, 1, 3, &mut rng).unwrap());
    let family = (id % 3) as usize;
    let design = match family {
        0 => Design::Bernoulli { p: rng.random_range(0.2..0.8) },
        1 => Design::TwoStage {
            p_arm: rng.random_range(0.2..0.8),
            p_high: rng.random_range(0.5..0.9),
            p_low: rng.random_range(0.1..0.5),
            partition: part,
        },
        _ => Design::ClusterRandomized {
            p: rng.random_range(0.2..0.8),
            partition: part,
        },
    };
    let map_id = ((id / 3) % 3) as usize;
    let map = [ExposureMap::SelfOnly, ExposureMap::SelfAndAnyNeighbor, ExposureMap::StratifiedCarryover][map_id].clone();
    Instance {
        index: ExposureIndex::new(map, Arc::new(graph)).unwrap(),
        design,
        t,
        family,
        map: map_id,
    }
}

fn well_conditioned(probs: &ContrastProbs<f64>, t: usize) -> bool {
    (0..t).all(|t| probs.ensure_overlap(t).is_ok() && probs.min_probability(t) >= MIN_TARGET_PROB)
}

/// Exposure pairs with well-conditioned overlap at every time, preferring
/// pairs whose cross-time joints between the last two times are all positive.
fn pick_contrast(engine: &ProbabilityEngine<f64>, inst: &Instance, rng: &mut impl Rng) -> Option<Targets> {
    let idx = &inst.index;
    let common: Vec<_> = idx.support()[0]
        .iter()
        .filter(|k| idx.support().iter().all(|d| d.contains(k)))
        .copied()
        .collect();
    let mut good = Vec::new();
    let mut positive = Vec::new();
    for a in &common {
        for b in &common {
            if a >= b {
                continue;
            }
            let targets = Targets::new(idx.map(), idx.graph(), &Contrast::Exposures(*a, *b)).unwrap();
            let probs = engine.contrast_probs(&targets).unwrap();
            if !well_conditioned(&probs, inst.t) {
                continue;
            }
            if inst.t >= 2 {
                let cross = engine.crosstime_probs(&targets, inst.t - 2, inst.t - 1).unwrap();
                let all_pos = cross.own.iter().all(|c| c.iter().all(|&p| p > 1e-15))
                    && cross.pairs.iter().all(|c| c.cells.iter().all(|&p| p > 1e-15));
                if all_pos {
                    positive.push(targets.clone());
                }
            }
            good.push(targets);
        }
    }
    let pool = if positive.is_empty() { good } else { positive };
    if pool.is_empty() {
        None
    } else {
        let k = rng.random_range(0..pool.len());
        Some(pool[k].clone())
    }
}

fn check_contrast(
    inst: &Instance,
    engine: &ProbabilityEngine<f64>,
    targets: &Targets,
    any_sign: &PotentialOutcomeTable<f64>,
    nonneg: &PotentialOutcomeTable<f64>,
    s: &mut OracleSummary,
) {
    let probs: ContrastProbs<f64> = engine.contrast_probs(targets).unwrap();
    if !well_conditioned(&probs, inst.t) {
        return;
    }
    s.contrasts += 1;
    let big_t = inst.t;
    let panel = PanelDesign::new(inst.design.clone(), inst.index.n(), big_t).unwrap();
    let cross: Vec<_> = (1..big_t).map(|t| engine.crosstime_probs(targets, t - 1, t).unwrap()).collect();
    let tables = [any_sign, nonneg];
    let mut mean = vec![vec![0.0; big_t]; 2];
    let mut draws: [Vec<(f64, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
    let mut cons = vec![vec![0.0; big_t]; 2];
    let (mut up, mut down) = ([0.0; 2], [0.0; 2]);
    let mut cov_hat = vec![vec![0.0; cross.len()]; 2];
    let mut cov_ok = vec![vec![true; cross.len()]; 2];
    for (w, p) in panel.enumerate_support(24).unwrap() {
        let ids = inst.index.realize(&w);
        for (k, table) in tables.iter().enumerate() {
            let y = realize(table, &ids).unwrap();
            let input = HtInput::new(&y, &ids, &probs).unwrap();
            let mut ests = vec![0.0; big_t];
            for t in 0..big_t {
                let est = input.ht_tec(t).unwrap();
                ests[t] = est;
                mean[k][t] += p * est;
                cons[k][t] += p * conservative_var_tec(&input, t).unwrap().point;
            }
            let (u, d) = var_estimators_total_effect(&input, big_t - 1).unwrap();
            up[k] += p * u.point;
            down[k] += p * d.point;
            draws[k].push((p, ests));
            for (c, cp) in cross.iter().enumerate() {
                match cov_estimator_total_effect(&input, cp) {
                    Ok(r) => cov_hat[k][c] += p * r.point,
                    Err(Error::Positivity(_)) => cov_ok[k][c] = false,
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    for (k, table) in tables.iter().enumerate() {
        let truth: Vec<f64> = (0..big_t).map(|t| contrast_value(table, targets, t).unwrap()).collect();
        let moment = |a: usize, b: usize| -> f64 {
            draws[k]
                .iter()
                .map(|(p, e)| p * (e[a] - mean[k][a]) * (e[b] - mean[k][b]))
                .sum()
        };
        for t in 0..big_t {
            s.ht_bias = s.ht_bias.max((mean[k][t] - truth[t]).abs());
            let var = true_variance(table, &probs, t).unwrap();
            s.var_formula = s.var_formula.max((var - moment(t, t)).abs());
            s.conservative_slack = s.conservative_slack.min(cons[k][t] - var);
            if t == big_t - 1 && k == 1 {
                s.upper_slack = s.upper_slack.min(up[k] - var);
                s.lower_slack = s.lower_slack.min(var - down[k]);
            }
        }
        let atec_mean = mean[k].iter().sum::<f64>() / big_t as f64;
        let atec = truth.iter().sum::<f64>() / big_t as f64;
        s.ht_bias = s.ht_bias.max((atec_mean - atec).abs());
        for (c, cp) in cross.iter().enumerate() {
            let cov = true_covariance(table, &probs, cp).unwrap();
            s.cov_formula = s.cov_formula.max((cov - moment(c, c + 1)).abs());
            s.cov_checks += 1;
            if cov_ok[k][c] {
                s.cov_estimator_bias = s.cov_estimator_bias.max((cov_hat[k][c] - cov).abs());
                s.cov_estimator_checks += 1;
                if cov.abs() > 1e-8 {
                    s.cov_estimator_nontrivial += 1;
                }
            } else {
                s.positivity_errors += 1;
            }
        }
        if big_t >= 2 {
            let eps = stability_violation(table);
            let (cur, prev) = (big_t - 1, big_t - 2);
            for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let expected = alpha * mean[k][cur] + (1.0 - alpha) * mean[k][prev];
                let excess = (expected - truth[cur]).abs() - 2.0 * (1.0 - alpha) * eps;
                s.convex_excess = s.convex_excess.max(excess);
                s.convex_checks += 1;
            }
        }
    }
}

/// Runs the exact checks over `count` random instances.
pub fn run_exact_oracle(seed: u64, count: usize, max_n: usize, max_t: usize) -> OracleSummary {
    let mut s = OracleSummary::new();
    for id in 0..count as u64 {
        let mut attempt = 0;
        let inst = loop {
            let inst = random_instance(seed, id, attempt, max_n, max_t);
            let te = Targets::new(inst.index.map(), inst.index.graph(), &Contrast::TotalEffect).unwrap();
            let engine = ProbabilityEngine::new(&inst.index, &inst.design).unwrap();
            if well_conditioned(&engine.contrast_probs(&te).unwrap(), inst.t) {
                break inst;
            }
            attempt += 1;
        };
        s.instances += 1;
        s.families[inst.family] += 1;
        s.maps[inst.map] += 1;
        let engine = ProbabilityEngine::new(&inst.index, &inst.design).unwrap();
        let mut rng = stream(seed, Domain::Outcomes, id);
        let any_sign = PotentialOutcomeTable::from_fn(inst.index.support().clone(), inst.t, |_, _, _| rng.random_range(-3.0..3.0));
        let nonneg = PotentialOutcomeTable::from_fn(inst.index.support().clone(), inst.t, |_, _, _| rng.random_range(0.0..5.0));
        let te = Targets::new(inst.index.map(), inst.index.graph(), &Contrast::TotalEffect).unwrap();
        check_contrast(&inst, &engine, &te, &any_sign, &nonneg, &mut s);
        if let Some(targets) = pick_contrast(&engine, &inst, &mut rng) {
            check_contrast(&inst, &engine, &targets, &any_sign, &nonneg, &mut s);
        }
    }
    s
}
