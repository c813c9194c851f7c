//! Horvitz–Thompson estimators, the ε scan and stability-weighted combinations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exposure::{ContrastProbs, ExposureIds};
use crate::numeric::Scalar;
use crate::outcomes::OutcomeMatrix;

/// Observed data plus the exposure probabilities of one contrast.
#[derive(Debug, Clone, Copy)]
pub struct HtInput<'a, S> {
    pub observed: &'a OutcomeMatrix<S>,
    pub exposures: &'a ExposureIds,
    pub probs: &'a ContrastProbs<S>,
}

impl<'a, S: Scalar> HtInput<'a, S> {
    pub fn new(observed: &'a OutcomeMatrix<S>, exposures: &'a ExposureIds, probs: &'a ContrastProbs<S>) -> Result<Self> {
        let n = probs.n();
        if observed.n() != n || exposures.n() != n || observed.t() != exposures.t() {
            return Err(Error::Parameter("observed outcomes, exposures and probabilities disagree in shape".into()));
        }
        Ok(Self {
            observed,
            exposures,
            probs,
        })
    }

    pub fn t(&self) -> usize {
        self.observed.t()
    }

    /// Contrast estimate at a 0-based time (Eq. 1, or Eq. 3 for total-effect targets).
    pub fn ht_tec(&self, t: usize) -> Result<S> {
        if t >= self.t() {
            return Err(Error::Parameter(format!("time {t} beyond horizon {}", self.t())));
        }
        self.probs.ensure_overlap(t)?;
        let c = self.probs.at(t);
        let y = self.observed.column(t);
        let ids = self.exposures.column(t);
        let mut sum = S::zero();
        for i in 0..y.len() {
            if ids[i] == self.probs.treat_id(i) {
                sum += y[i] / c.treat[i];
            } else if ids[i] == self.probs.control_id(i) {
                sum -= y[i] / c.control[i];
            }
        }
        Ok(sum / S::of_usize(y.len()))
    }

    /// Estimates at every time.
    pub fn ht_series(&self) -> Result<Vec<S>> {
        (0..self.t()).map(|t| self.ht_tec(t)).collect()
    }

    /// Temporal average of the per-time estimates (Eq. 2, or Eq. 4).
    pub fn ht_atec(&self) -> Result<S> {
        let series = self.ht_series()?;
        Ok(series.iter().copied().sum::<S>() / S::of_usize(series.len()))
    }

    pub fn ht_total_effect(&self, t: usize) -> Result<S> {
        self.ht_tec(t)
    }

    pub fn ht_avg_total_effect(&self) -> Result<S> {
        self.ht_atec()
    }
}

/// Result of the ε scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonEstimate<S> {
    pub value: S,
    /// False when no unit ever kept its exposure between consecutive times.
    pub informative: bool,
}

/// Largest one-step change of an observed outcome among units whose exposure
/// did not change.
pub fn estimate_epsilon<S: Scalar>(observed: &OutcomeMatrix<S>, exposures: &ExposureIds) -> EpsilonEstimate<S> {
    let mut value = S::zero();
    let mut informative = false;
    for t in 1..observed.t().min(exposures.t()) {
        let (h0, h1) = (exposures.column(t - 1), exposures.column(t));
        let (y0, y1) = (observed.column(t - 1), observed.column(t));
        for i in 0..h0.len() {
            if h0[i] == h1[i] {
                informative = true;
                value = value.max((y0[i] - y1[i]).abs());
            }
        }
    }
    EpsilonEstimate { value, informative }
}

/// Weight on the current estimate minimizing the MSE bound of a two-term
/// combination with an estimate `lag` steps back.
pub fn optimal_alpha_pair<S: Scalar>(var_t: S, var_tp: S, eps: S, lag: usize) -> Result<S> {
    if var_t < S::zero() || var_tp < S::zero() || eps < S::zero() || lag == 0 {
        return Err(Error::Parameter("variances and ε must be non-negative and lag ≥ 1".into()));
    }
    let l = S::of_usize(lag);
    let denom = S::of(4.0) * l * l * eps * eps + var_t + var_tp;
    if denom <= S::zero() {
        return Err(Error::Degenerate("both variances and ε are zero".into()));
    }
    Ok((S::one() - var_t / denom).max(S::zero()).min(S::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMethod {
    ClosedFormK2,
    EqualityKkt,
    ActiveSetBiasCap,
}

/// Weights over estimates ordered oldest to current.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution<S> {
    pub weights: Vec<S>,
    pub objective: S,
    pub bias_bound: S,
    pub method: WeightMethod,
}

/// `2 ε |Σ_m (k−1−m) α_m|`, with weights ordered oldest to current.
pub fn bias_bound<S: Scalar>(weights: &[S], eps: S) -> S {
    let k = weights.len();
    let lagged: S = weights.iter().enumerate().map(|(m, &a)| S::of_usize(k - 1 - m) * a).sum();
    S::of(2.0) * eps * lagged.abs()
}

fn objective(q: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    (a.transpose() * q * a)[(0, 0)]
}

/// Minimizes `Σ α_m² V_m + αᵀCα + 4ε² (Σ (k−1−m) α_m)²` subject to `Σ α = 1`
/// and, optionally, a bias bound of at most `bias_cap`.
///
/// `vars` and the optional covariance matrix `cov` (diagonal ignored)
/// are ordered oldest to current.
pub fn solve_weights<S: Scalar>(vars: &[S], eps: S, cov: Option<&[Vec<S>]>, bias_cap: Option<S>) -> Result<WeightSolution<S>> {
    let k = vars.len();
    if k < 2 {
        return Err(Error::Parameter("need at least two estimates to combine".into()));
    }
    if vars.iter().any(|v| *v < S::zero()) || eps < S::zero() {
        return Err(Error::Parameter("variances and ε must be non-negative".into()));
    }
    if let Some(c) = cov {
        if c.len() != k || c.iter().any(|row| row.len() != k) {
            return Err(Error::Parameter("covariance matrix has the wrong shape".into()));
        }
    }
    if let Some(d) = bias_cap {
        if d < S::zero() {
            return Err(Error::Parameter("bias cap must be non-negative".into()));
        }
    }
    let e = eps.f64();
    if k == 2 && cov.is_none() && bias_cap.is_none() {
        let alpha = optimal_alpha_pair(vars[1], vars[0], eps, 1)?;
        let weights = vec![S::one() - alpha, alpha];
        let a = S::one() - alpha;
        let objective = alpha * alpha * vars[1] + a * a * (vars[0] + S::of(4.0) * eps * eps);
        return Ok(WeightSolution {
            bias_bound: bias_bound(&weights, eps),
            weights,
            objective,
            method: WeightMethod::ClosedFormK2,
        });
    }
    let c = DVector::from_fn(k, |m, _| (k - 1 - m) as f64);
    let mut q = DMatrix::from_fn(k, k, |a, b| {
        let v = if a == b { vars[a].f64() } else { 0.0 };
        v + cov.map_or(0.0, |c| if a == b { 0.0 } else { c[a][b].f64() })
    });
    q += &c * c.transpose() * (4.0 * e * e);
    let solve = |extra: Option<f64>| -> Result<DVector<f64>> {
        let size = k + 1 + usize::from(extra.is_some());
        let mut m = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        m.view_mut((0, 0), (k, k)).copy_from(&(&q * 2.0));
        for a in 0..k {
            m[(a, k)] = 1.0;
            m[(k, a)] = 1.0;
        }
        rhs[k] = 1.0;
        if let Some(target) = extra {
            for a in 0..k {
                m[(a, k + 1)] = c[a];
                m[(k + 1, a)] = c[a];
            }
            rhs[k + 1] = target;
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::Degenerate("singular weight system (all variances and ε zero)".into()))?;
        Ok(sol.rows(0, k).into_owned())
    };
    let mut alpha = solve(None)?;
    let mut method = WeightMethod::EqualityKkt;
    if let Some(cap) = bias_cap {
        let lagged = c.dot(&alpha);
        if 2.0 * e * lagged.abs() > cap.f64() + 1e-12 {
            alpha = solve(Some(lagged.signum() * cap.f64() / (2.0 * e)))?;
            method = WeightMethod::ActiveSetBiasCap;
        }
    }
    let weights: Vec<S> = alpha.iter().map(|&x| S::of(x)).collect();
    Ok(WeightSolution {
        objective: S::of(objective(&q, &alpha)),
        bias_bound: bias_bound(&weights, eps),
        weights,
        method,
    })
}

/// Weighted sum of per-time estimates.
pub fn convex_estimate<S: Scalar>(estimates: &[S], weights: &[S]) -> Result<S> {
    if estimates.len() != weights.len() || weights.is_empty() {
        return Err(Error::Parameter("estimates and weights differ in length".into()));
    }
    let total: S = weights.iter().copied().sum();
    if (total - S::one()).abs().f64() > 1e-10 {
        return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
    }
    Ok(estimates.iter().zip(weights).map(|(&e, &w)| e * w).sum())
}
