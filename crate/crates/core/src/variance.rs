//! True variances and covariances of HT estimators, their estimators, and the
//! household closed forms. Every quantity is on the scale of the estimator
//! itself, `Var(τ̂)`, not `Var(√n τ̂)`.

use sha2::{Digest, Sha256};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimators::HtInput;
use crate::exposure::{ContrastProbs, CrossTimeProbs, ExposureIds, ExposureMap, ProbMethod, NO_ID};
use crate::numeric::{is_zero_prob, Scalar};
use crate::outcomes::{OutcomeMatrix, PotentialOutcomeTable};
use crate::population::GroupPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceKind {
    TrueFormula,
    ConservativeTec,
    UpperTe,
    LowerTe,
    CovTe,
    PluginConvex,
    AtecAggregate,
    HouseholdClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport<S> {
    pub point: S,
    pub kind: VarianceKind,
    /// Set when a guarantee of the estimator does not apply to these inputs.
    pub warning: Option<String>,
    pub inputs_hash: Option<String>,
}

impl<S: Scalar> VarianceReport<S> {
    fn new(point: S, kind: VarianceKind) -> Self {
        Self {
            point,
            kind,
            warning: None,
            inputs_hash: None,
        }
    }

    /// Records a SHA-256 fingerprint of the observed data behind the report.
    pub fn with_inputs_hash(mut self, observed: &OutcomeMatrix<S>, exposures: &ExposureIds) -> Self {
        let mut h = Sha256::new();
        for t in 0..observed.t() {
            for (y, id) in observed.column(t).iter().zip(exposures.column(t)) {
                h.update(y.f64().to_le_bytes());
                h.update(id.to_le_bytes());
            }
        }
        self.inputs_hash = Some(h.finalize().iter().map(|b| format!("{b:02x}")).collect());
        self
    }
}

fn require_exact<S>(probs: &ContrastProbs<S>) -> Result<()> {
    match probs.method {
        ProbMethod::Exact => Ok(()),
        ProbMethod::MonteCarlo { .. } => Err(Error::Parameter("true variances need exact probabilities".into())),
    }
}

/// Potential outcomes of every unit under its two targets at `t`.
fn target_outcomes<S: Scalar>(table: &PotentialOutcomeTable<S>, probs: &ContrastProbs<S>, t: usize) -> Result<(Vec<S>, Vec<S>)> {
    probs.ensure_overlap(t)?;
    let n = probs.n();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        a.push(table.value(i, t, &probs.targets.treat[i])?);
        b.push(table.value(i, t, &probs.targets.control[i])?);
    }
    Ok((a, b))
}

/// `[cells[xy] − π_x π_y] / (π_x π_y) · Y_x Y_y` combined with signs `+ − − +`.
fn bracket<S: Scalar>(cells: &[S; 4], pi_i: [S; 2], pi_j: [S; 2], y_i: [S; 2], y_j: [S; 2]) -> S {
    let mut s = S::zero();
    for (x, sx) in [(0, S::one()), (1, -S::one())] {
        for (y, sy) in [(0, S::one()), (1, -S::one())] {
            let prod = pi_i[x] * pi_j[y];
            s += sx * sy * (cells[2 * x + y] - prod) / prod * y_i[x] * y_j[y];
        }
    }
    s
}

/// Exact `Var(τ̂_t)` of the HT contrast estimator.
pub fn true_variance<S: Scalar>(table: &PotentialOutcomeTable<S>, probs: &ContrastProbs<S>, t: usize) -> Result<S> {
    require_exact(probs)?;
    let (a, b) = target_outcomes(table, probs, t)?;
    let c = probs.at(t);
    let n = probs.n();
    let mut s = S::zero();
    for i in 0..n {
        let (p1, p0) = (c.treat[i], c.control[i]);
        s += a[i] * a[i] * (S::one() - p1) / p1 + b[i] * b[i] * (S::one() - p0) / p0 + S::of(2.0) * a[i] * b[i];
    }
    for pc in &c.pairs {
        let (i, j) = (pc.i, pc.j);
        s += S::of(2.0)
            * bracket(
                &pc.cells,
                [c.treat[i], c.control[i]],
                [c.treat[j], c.control[j]],
                [a[i], b[i]],
                [a[j], b[j]],
            );
    }
    let nn = S::of_usize(n);
    Ok(s / (nn * nn))
}

/// Exact `Cov(τ̂_t, τ̂_{t2})` for the times of `cross`.
pub fn true_covariance<S: Scalar>(table: &PotentialOutcomeTable<S>, probs: &ContrastProbs<S>, cross: &CrossTimeProbs<S>) -> Result<S> {
    require_exact(probs)?;
    let (t, t2) = (cross.t, cross.t2);
    let (a, b) = target_outcomes(table, probs, t)?;
    let (a2, b2) = target_outcomes(table, probs, t2)?;
    let (c, c2) = (probs.at(t), probs.at(t2));
    let n = probs.n();
    let mut s = S::zero();
    for i in 0..n {
        s += bracket(
            &cross.own[i],
            [c.treat[i], c.control[i]],
            [c2.treat[i], c2.control[i]],
            [a[i], b[i]],
            [a2[i], b2[i]],
        );
    }
    for pc in &cross.pairs {
        let (i, j) = (pc.i, pc.j);
        s += bracket(
            &pc.cells,
            [c.treat[i], c.control[i]],
            [c2.treat[j], c2.control[j]],
            [a[i], b[i]],
            [a2[j], b2[j]],
        );
    }
    let nn = S::of_usize(n);
    Ok(s / (nn * nn))
}

/// `(Var(τ̂_t), Cov(τ̂_t, τ̂_{t2}))` for total-effect (or any) targets.
pub fn true_var_cov_total_effect<S: Scalar>(
    table: &PotentialOutcomeTable<S>,
    probs: &ContrastProbs<S>,
    cross: &CrossTimeProbs<S>,
) -> Result<(S, S)> {
    Ok((true_variance(table, probs, cross.t)?, true_covariance(table, probs, cross)?))
}

/// Which target, if any, each unit realized at `t`, with its outcome.
fn realized<S: Scalar>(input: &HtInput<S>, t: usize) -> Result<Vec<(Option<usize>, S)>> {
    if t >= input.t() {
        return Err(Error::Parameter(format!("time {t} beyond horizon {}", input.t())));
    }
    input.probs.ensure_overlap(t)?;
    let ids = input.exposures.column(t);
    let y = input.observed.column(t);
    Ok((0..ids.len())
        .map(|i| {
            let p = input.probs;
            let which = if ids[i] == p.treat_id(i) && ids[i] != NO_ID {
                Some(0)
            } else if ids[i] == p.control_id(i) && ids[i] != NO_ID {
                Some(1)
            } else {
                None
            };
            (which, y[i])
        })
        .collect())
}

/// `1(H = x) Y² / (2π_x)` for a unit.
fn half_square<S: Scalar>(obs: (Option<usize>, S), x: usize, pi: [S; 2]) -> S {
    match obs.0 {
        Some(w) if w == x => obs.1 * obs.1 / (S::of(2.0) * pi[x]),
        _ => S::zero(),
    }
}

/// `1(H_i = x) 1(H_j = y) (π_xy − π_x π_y) / π_xy · Y_i Y_j / (π_x π_y)`.
fn cell_term<S: Scalar>(oi: (Option<usize>, S), oj: (Option<usize>, S), x: usize, y: usize, pij: S, pi: [S; 2], pj: [S; 2]) -> S {
    if oi.0 == Some(x) && oj.0 == Some(y) {
        let prod = pi[x] * pj[y];
        (pij - prod) / pij * oi.1 * oj.1 / prod
    } else {
        S::zero()
    }
}

/// Conservative variance estimator for the contrast estimator at `t`.
///
/// Zero joint probabilities are replaced by Young-inequality bounds, and the
/// unobservable within-unit product `2 Y_i(k) Y_i(k′)` is bounded by
/// `Y_i(k)² + Y_i(k′)²`, so the expectation is at least the true variance for
/// outcomes of any sign.
pub fn conservative_var_tec<S: Scalar>(input: &HtInput<S>, t: usize) -> Result<VarianceReport<S>> {
    var_tec(input, t, WithinUnit::YoungBound)
}

/// Treatment of the unobservable within-unit product `2 Y_i(k) Y_i(k′)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WithinUnit {
    /// Bounded by `Y_i(k)² + Y_i(k′)²`; conservative for any outcomes.
    #[default]
    YoungBound,
    /// Dropped; only `(1 − π) Y² / π²` is kept per unit. Not conservative in
    /// general, but tighter when the product is small relative to the variance.
    Omitted,
}

/// Variance estimator for the contrast estimator at `t` with the given
/// within-unit treatment; pair terms are as in [`conservative_var_tec`].
pub fn var_tec<S: Scalar>(input: &HtInput<S>, t: usize, within: WithinUnit) -> Result<VarianceReport<S>> {
    let obs = realized(input, t)?;
    let c = input.probs.at(t);
    let two = S::of(2.0);
    let mut s = S::zero();
    for (i, o) in obs.iter().enumerate() {
        if let Some(x) = o.0 {
            let p = if x == 0 { c.treat[i] } else { c.control[i] };
            s += match within {
                WithinUnit::YoungBound => o.1 * o.1 / (p * p),
                WithinUnit::Omitted => (S::one() - p) * o.1 * o.1 / (p * p),
            };
        }
    }
    for pc in &c.pairs {
        let (i, j) = (pc.i, pc.j);
        let (oi, oj) = (obs[i], obs[j]);
        let (pi, pj) = ([c.treat[i], c.control[i]], [c.treat[j], c.control[j]]);
        for x in 0..2 {
            let pxx = pc.cells[3 * x];
            s += two
                * if is_zero_prob(pxx) {
                    half_square(oi, x, pi) + half_square(oj, x, pj)
                } else {
                    cell_term(oi, oj, x, x, pxx, pi, pj)
                };
        }
        for (x, y, cell) in [(0, 1, pc.cells[1]), (1, 0, pc.cells[2])] {
            let (first, second, p_first, p_second) = if x == 0 { (oi, oj, pi, pj) } else { (oj, oi, pj, pi) };
            s += if is_zero_prob(cell) {
                two * (half_square(first, 0, p_first) + half_square(second, 1, p_second))
            } else {
                -two * cell_term(oi, oj, x, y, cell, pi, pj)
            };
        }
    }
    let n = S::of_usize(obs.len());
    Ok(VarianceReport::new(s / (n * n), VarianceKind::ConservativeTec))
}

/// Upper and lower variance estimators for the total-effect estimator at `t`.
///
/// They bracket the true variance in expectation when all potential outcomes
/// are non-negative; a warning is attached when a negative outcome is seen.
pub fn var_estimators_total_effect<S: Scalar>(input: &HtInput<S>, t: usize) -> Result<(VarianceReport<S>, VarianceReport<S>)> {
    let obs = realized(input, t)?;
    let c = input.probs.at(t);
    let two = S::of(2.0);
    let mut common = S::zero();
    let mut own = S::zero();
    let mut negative = false;
    for (i, o) in obs.iter().enumerate() {
        if let Some(x) = o.0 {
            let p = if x == 0 { c.treat[i] } else { c.control[i] };
            common += (S::one() - p) * o.1 * o.1 / (p * p);
            own += o.1 * o.1 / p;
            negative |= o.1 < S::zero();
        }
    }
    let (mut up, mut down) = (S::zero(), S::zero());
    for pc in &c.pairs {
        let (i, j) = (pc.i, pc.j);
        let (oi, oj) = (obs[i], obs[j]);
        let (pi, pj) = ([c.treat[i], c.control[i]], [c.treat[j], c.control[j]]);
        for x in 0..2 {
            let p = pc.cells[3 * x];
            if is_zero_prob(p) {
                down -= half_square(oi, x, pi) + half_square(oj, x, pj);
            } else {
                let v = cell_term(oi, oj, x, x, p, pi, pj);
                up += v;
                down += v;
            }
        }
        for (x, y, p) in [(1, 0, pc.cells[2]), (0, 1, pc.cells[1])] {
            if is_zero_prob(p) {
                up += half_square(oi, x, pi) + half_square(oj, y, pj);
            } else {
                let v = cell_term(oi, oj, x, y, p, pi, pj);
                up -= v;
                down -= v;
            }
        }
    }
    let n = S::of_usize(obs.len());
    let scale = S::one() / (n * n);
    let mut upper = VarianceReport::new((common + own + two * up) * scale, VarianceKind::UpperTe);
    let mut lower = VarianceReport::new((common + two * down) * scale, VarianceKind::LowerTe);
    if negative {
        let msg = "negative observed outcome: bracketing of the true variance is not guaranteed".to_string();
        upper.warning = Some(msg.clone());
        lower.warning = Some(msg);
    }
    Ok((upper, lower))
}

/// Unbiased estimator of `Cov(τ̂_t, τ̂_{t2})`; every needed joint
/// probability must be positive.
pub fn cov_estimator_total_effect<S: Scalar>(input: &HtInput<S>, cross: &CrossTimeProbs<S>) -> Result<VarianceReport<S>> {
    let (t, t2) = (cross.t, cross.t2);
    if t == t2 {
        return Err(Error::Parameter("covariance estimator needs distinct times".into()));
    }
    let (o1, o2) = (realized(input, t)?, realized(input, t2)?);
    let (c1, c2) = (input.probs.at(t), input.probs.at(t2));
    for (i, cells) in cross.own.iter().enumerate() {
        if cells.iter().any(|&p| is_zero_prob(p)) {
            return Err(Error::Positivity(format!("unit {i} has a zero joint probability between times {t} and {t2}")));
        }
    }
    if let Some(pc) = cross.pairs.iter().find(|pc| pc.cells.iter().any(|&p| is_zero_prob(p))) {
        return Err(Error::Positivity(format!(
            "units {} and {} have a zero joint probability between times {t} and {t2}",
            pc.i, pc.j
        )));
    }
    let term = |i: usize, j: usize, cells: &[S; 4]| {
        let (pi, pj) = ([c1.treat[i], c1.control[i]], [c2.treat[j], c2.control[j]]);
        let mut s = S::zero();
        for (x, sx) in [(0, S::one()), (1, -S::one())] {
            for (y, sy) in [(0, S::one()), (1, -S::one())] {
                s += sx * sy * cell_term(o1[i], o2[j], x, y, cells[2 * x + y], pi, pj);
            }
        }
        s
    };
    let mut s = S::zero();
    for (i, cells) in cross.own.iter().enumerate() {
        s += term(i, i, cells);
    }
    for pc in &cross.pairs {
        s += term(pc.i, pc.j, &pc.cells);
    }
    let n = S::of_usize(o1.len());
    Ok(VarianceReport::new(s / (n * n), VarianceKind::CovTe))
}

/// Per-time variances and lag-one covariances of the household contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdMoments<S> {
    pub var: Vec<S>,
    /// `cov[t] = Cov(τ̂_t, τ̂_{t+1})`.
    pub cov: Vec<S>,
}

impl<S: Scalar> HouseholdMoments<S> {
    /// `Var` of the time-averaged estimator.
    pub fn atec_variance(&self) -> S {
        aggregate_atec(&self.var, &self.cov)
    }
}

/// Closed-form moments for equal households under Bernoulli(1/2) with the
/// stratified carryover map, contrasting all-treated `(1,1,r−1,r−1)` with
/// all-untreated `(0,0,0,0)`.
pub fn household_closed_form<S: Scalar>(
    table: &PotentialOutcomeTable<S>,
    partition: &GroupPartition,
    map: &ExposureMap,
    design: &Design<S>,
) -> Result<HouseholdMoments<S>> {
    let contract = |m: &str| Err(Error::Parameter(format!("household closed form: {m}")));
    if *map != ExposureMap::StratifiedCarryover {
        return contract("requires the stratified carryover map");
    }
    match design {
        Design::Bernoulli { p } if *p == S::of(0.5) => {}
        _ => return contract("requires a Bernoulli(1/2) design"),
    }
    let r = partition.groups().first().map_or(0, Vec::len);
    if r == 0 || partition.groups().iter().any(|g| g.len() != r) || partition.n() != table.n() {
        return contract("requires equal household sizes covering the table");
    }
    let ri = r as i64 - 1;
    let treat = crate::exposure::Exposure::ints(&[1, 1, ri, ri]);
    let control = crate::exposure::Exposure::ints(&[0, 0, 0, 0]);
    let big_t = table.t();
    let mut sums = vec![Vec::with_capacity(partition.groups().len()); big_t];
    for (t, row) in sums.iter_mut().enumerate() {
        for g in partition.groups() {
            let (mut a, mut b) = (S::zero(), S::zero());
            for &u in g {
                a += table.value(u, t, &treat)?;
                b += table.value(u, t, &control)?;
            }
            row.push((a, b));
        }
    }
    let two_r = S::of(2f64.powi(r as i32));
    let n_units = S::of_usize(table.n());
    let scale = S::one() / (n_units * n_units);
    let var = (0..big_t)
        .map(|t| {
            let f = if t == 0 { two_r - S::one() } else { two_r * two_r - S::one() };
            sums[t].iter().map(|&(a, b)| f * (a * a + b * b) + S::of(2.0) * a * b).sum::<S>() * scale
        })
        .collect();
    let g = two_r - S::one();
    let cov = (0..big_t.saturating_sub(1))
        .map(|t| {
            sums[t]
                .iter()
                .zip(&sums[t + 1])
                .map(|(&(a, b), &(a2, b2))| g * (a * a2 + b * b2) + b * a2 + a * b2)
                .sum::<S>()
                * scale
        })
        .collect();
    Ok(HouseholdMoments { var, cov })
}

/// `(1/T²)[Σ_t V_t + 2 Σ_t C_t]` for lag-one covariances `C_t`.
pub fn aggregate_atec<S: Scalar>(vars: &[S], lag_one_covs: &[S]) -> S {
    let t = S::of_usize(vars.len());
    (vars.iter().copied().sum::<S>() + S::of(2.0) * lag_one_covs.iter().copied().sum::<S>()) / (t * t)
}

/// `(1/T²) Σ_t V̂_t` for the time-averaged estimator.
pub fn atec_var_estimator<S: Scalar>(reports: &[VarianceReport<S>]) -> Result<VarianceReport<S>> {
    if reports.is_empty() {
        return Err(Error::Parameter("no per-time variance reports".into()));
    }
    let t = S::of_usize(reports.len());
    let point = reports.iter().map(|r| r.point).sum::<S>() / (t * t);
    let mut out = VarianceReport::new(point, VarianceKind::AtecAggregate);
    out.warning = reports.iter().find_map(|r| r.warning.clone());
    Ok(out)
}

/// `α² V_t + (1−α)² V_{t−1}`, negative inputs clamped to 0.
pub fn plugin_convex<S: Scalar>(alpha: S, var_t: S, var_prev: S) -> VarianceReport<S> {
    let a = S::one() - alpha;
    let point = alpha * alpha * var_t.max(S::zero()) + a * a * var_prev.max(S::zero());
    VarianceReport::new(point, VarianceKind::PluginConvex)
}
