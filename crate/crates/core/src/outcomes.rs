//! Potential-outcome tables, data-generating processes, true estimands and
//! observed outcomes.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{Contrast, Exposure, ExposureIds, ExposureIndex, ExposureMap, Targets};
use crate::numeric::Scalar;
use crate::population::InterferenceGraph;

/// `Y_{i,t}(k)` for every unit, time and `k ∈ Δ_i`.
///
/// Cells that were never supplied hold NaN and fail lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable<S> {
    support: Arc<Vec<Vec<Exposure>>>,
    t: usize,
    offsets: Vec<usize>,
    values: Vec<S>,
    bound: Option<S>,
}

impl<S: Scalar> PotentialOutcomeTable<S> {
    /// Builds a table by evaluating `f(i, t, k)` on every cell.
    pub fn from_fn(support: Arc<Vec<Vec<Exposure>>>, t: usize, mut f: impl FnMut(usize, usize, &Exposure) -> S) -> Self {
        let mut offsets = Vec::with_capacity(support.len());
        let mut total = 0;
        for delta in support.iter() {
            offsets.push(total);
            total += t * delta.len();
        }
        let mut values = Vec::with_capacity(total);
        for delta in support.iter().enumerate() {
            let (i, delta) = delta;
            for tt in 0..t {
                for k in delta {
                    values.push(f(i, tt, k));
                }
            }
        }
        Self {
            support,
            t,
            offsets,
            values,
            bound: None,
        }
    }

    pub fn constant(support: Arc<Vec<Vec<Exposure>>>, t: usize, value: S) -> Self {
        Self::from_fn(support, t, |_, _, _| value)
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn support(&self) -> &Arc<Vec<Vec<Exposure>>> {
        &self.support
    }

    /// Certified bound `|Y| ≤ M`, when the generating process guarantees one.
    pub fn bound(&self) -> Option<S> {
        self.bound
    }

    pub fn with_bound(mut self, bound: S) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Cells of unit `i` at time `t`, indexed by exposure id.
    pub fn cells(&self, i: usize, t: usize) -> &[S] {
        let len = self.support[i].len();
        let start = self.offsets[i] + t * len;
        &self.values[start..start + len]
    }

    pub fn get(&self, i: usize, t: usize, id: u32) -> S {
        self.cells(i, t)[id as usize]
    }

    fn id(&self, i: usize, t: usize, k: &Exposure) -> Result<u32> {
        self.support[i].binary_search(k).map(|x| x as u32).map_err(|_| Error::Completeness {
            unit: i,
            time: t,
            exposure: k.to_string(),
        })
    }

    /// `Y_{i,t}(k)`, failing for missing cells.
    pub fn value(&self, i: usize, t: usize, k: &Exposure) -> Result<S> {
        let v = self.get(i, t, self.id(i, t, k)?);
        if v.is_nan() {
            return Err(Error::Completeness {
                unit: i,
                time: t,
                exposure: k.to_string(),
            });
        }
        Ok(v)
    }

    pub fn set(&mut self, i: usize, t: usize, k: &Exposure, v: S) -> Result<()> {
        let id = self.id(i, t, k)? as usize;
        let len = self.support[i].len();
        self.values[self.offsets[i] + t * len + id] = v;
        Ok(())
    }

    /// Multiplies every cell by `c`.
    pub fn scaled(&self, c: S) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.bound = self.bound.map(|b| b * c.abs());
        out
    }

    pub fn min_value(&self) -> S {
        self.values.iter().copied().filter(|v| !v.is_nan()).fold(S::infinity(), |a, b| a.min(b))
    }

    /// Errors on the first missing cell that `reachable(i, t, k)` requires.
    pub fn check_complete(&self, mut reachable: impl FnMut(usize, usize, &Exposure) -> bool) -> Result<()> {
        for (i, delta) in self.support.iter().enumerate() {
            for t in 0..self.t {
                for (id, k) in delta.iter().enumerate() {
                    if self.cells(i, t)[id].is_nan() && reachable(i, t, k) {
                        return Err(Error::Completeness {
                            unit: i,
                            time: t,
                            exposure: k.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes `unit,time,exposure,value` rows, skipping missing cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["unit", "time", "exposure", "value"])?;
        for (i, delta) in self.support.iter().enumerate() {
            for t in 0..self.t {
                for (k, v) in delta.iter().zip(self.cells(i, t)) {
                    if !v.is_nan() {
                        wtr.write_record([i.to_string(), t.to_string(), k.to_string(), format!("{v:?}")])?;
                    }
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<outcome table>", e))?;
        Ok(())
    }

    /// Reads rows written by [`write_csv`](Self::write_csv); absent cells stay missing.
    pub fn read_csv<R: Read>(reader: R, support: Arc<Vec<Vec<Exposure>>>, t: usize) -> Result<Self> {
        let mut table = Self::constant(support, t, S::nan());
        let mut rdr = csv::Reader::from_reader(reader);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parameter(format!("outcome CSV row {}: bad {what}", line + 2));
            if rec.len() != 4 {
                return Err(bad("field count"));
            }
            let i: usize = rec[0].trim().parse().map_err(|_| bad("unit"))?;
            let tt: usize = rec[1].trim().parse().map_err(|_| bad("time"))?;
            let k: Exposure = rec[2].trim().parse().map_err(|_| bad("exposure"))?;
            let v: f64 = rec[3].trim().parse().map_err(|_| bad("value"))?;
            if i >= table.n() || tt >= t {
                return Err(bad("unit or time index"));
            }
            table.set(i, tt, &k, S::of(v))?;
        }
        Ok(table)
    }
}

/// Observed outcomes `y_{i,t}`, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMatrix<S> {
    n: usize,
    t: usize,
    data: Vec<S>,
}

impl<S: Scalar> OutcomeMatrix<S> {
    pub fn from_columns(n: usize, t: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != n * t {
            return Err(Error::Parameter(format!("expected {} outcomes, got {}", n * t, data.len())));
        }
        Ok(Self { n, t, data })
    }

    pub fn empty() -> Self {
        Self {
            n: 0,
            t: 0,
            data: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, t: usize) -> S {
        self.data[t * self.n + i]
    }

    pub fn column(&self, t: usize) -> &[S] {
        &self.data[t * self.n..(t + 1) * self.n]
    }
}

/// Observed outcomes implied by realized exposures.
pub fn realize<S: Scalar>(table: &PotentialOutcomeTable<S>, ids: &ExposureIds) -> Result<OutcomeMatrix<S>> {
    let mut out = OutcomeMatrix::empty();
    realize_into(table, ids, &mut out)?;
    Ok(out)
}

/// As [`realize`], reusing `out`'s allocation.
pub fn realize_into<S: Scalar>(table: &PotentialOutcomeTable<S>, ids: &ExposureIds, out: &mut OutcomeMatrix<S>) -> Result<()> {
    let (n, t) = (ids.n(), ids.t());
    if n != table.n() || t > table.t() {
        return Err(Error::Parameter("exposures do not match the outcome table".into()));
    }
    out.n = n;
    out.t = t;
    out.data.clear();
    for tt in 0..t {
        for (i, &id) in ids.column(tt).iter().enumerate() {
            let v = table.get(i, tt, id);
            if v.is_nan() {
                return Err(Error::Completeness {
                    unit: i,
                    time: tt,
                    exposure: table.support[i][id as usize].to_string(),
                });
            }
            out.data.push(v);
        }
    }
    Ok(())
}

/// Smallest ε for which the table is ε-weakly stable.
pub fn stability_violation<S: Scalar>(table: &PotentialOutcomeTable<S>) -> S {
    let mut eps = S::zero();
    for i in 0..table.n() {
        for t in 1..table.t() {
            for (a, b) in table.cells(i, t - 1).iter().zip(table.cells(i, t)) {
                let d = (*a - *b).abs();
                if !d.is_nan() && d > eps {
                    eps = d;
                }
            }
        }
    }
    eps
}

/// Data-generating process for potential outcomes.
///
/// Linear families use the mean `intercept + Σ_j coef_j · k_j` over the parts
/// of the exposure `k`; missing coefficients count as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DgpSpec {
    NormalLinear {
        coef: Vec<f64>,
        intercept: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    PoissonLinear {
        coef: Vec<f64>,
        intercept: f64,
    },
    /// Success probability `(intercept + coef·k) / scale`.
    BernoulliLinear {
        coef: Vec<f64>,
        intercept: f64,
        scale: f64,
    },
    /// Normal linear with a shock `±shock` drawn once per time and shared by all units.
    NormalLinearTemporal {
        coef: Vec<f64>,
        intercept: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default = "one")]
        shock: f64,
    },
    /// `N(mean, sd²)` at the first time, then a uniform walk of half-width `epsilon`.
    StabilityChain {
        mean: f64,
        sd: f64,
        epsilon: f64,
    },
    /// `N(w + u/2 + 5, 1)`.
    GroupSize,
    Constant {
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DgpSpec {
    pub fn normal() -> Self {
        DgpSpec::NormalLinear {
            coef: vec![3.0, 2.0],
            intercept: 5.0,
            sd: 1.0,
        }
    }

    pub fn poisson() -> Self {
        DgpSpec::PoissonLinear {
            coef: vec![3.0, 2.0],
            intercept: 5.0,
        }
    }

    pub fn bernoulli() -> Self {
        DgpSpec::BernoulliLinear {
            coef: vec![3.0, 2.0],
            intercept: 2.0,
            scale: 18.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        match self {
            DgpSpec::NormalLinear { sd, .. } | DgpSpec::NormalLinearTemporal { sd, .. } if !(*sd >= 0.0 && sd.is_finite()) => {
                bad("sd must be finite and non-negative")
            }
            DgpSpec::NormalLinearTemporal { shock, .. } if !shock.is_finite() => bad("shock must be finite"),
            DgpSpec::BernoulliLinear { scale, .. } if !(*scale > 0.0) => bad("scale must be positive"),
            DgpSpec::StabilityChain { sd, epsilon, .. } if !(*sd >= 0.0) || !(*epsilon >= 0.0) => {
                bad("sd and epsilon must be non-negative")
            }
            _ => Ok(()),
        }
    }

    fn linear(coef: &[f64], intercept: f64, k: &Exposure) -> f64 {
        intercept + coef.iter().zip(k.as_f64()).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Draws a table with one independent draw per cell, in unit, time,
    /// exposure order.
    pub fn generate<S: Scalar, R: Rng + ?Sized>(&self, index: &ExposureIndex, t: usize, rng: &mut R) -> Result<PotentialOutcomeTable<S>> {
        self.validate()?;
        let support = index.support().clone();
        let normal = |mean: f64, sd: f64, rng: &mut R| mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let table = match self {
            DgpSpec::NormalLinear { coef, intercept, sd } => {
                PotentialOutcomeTable::from_fn(support, t, |_, _, k| S::of(normal(Self::linear(coef, *intercept, k), *sd, rng)))
            }
            DgpSpec::GroupSize => PotentialOutcomeTable::from_fn(support, t, |_, _, k| {
                S::of(normal(Self::linear(&[1.0, 0.5], 5.0, k), 1.0, rng))
            }),
            DgpSpec::NormalLinearTemporal {
                coef,
                intercept,
                sd,
                shock,
            } => {
                let shocks: Vec<f64> = (0..t).map(|_| if rng.random::<bool>() { *shock } else { -*shock }).collect();
                PotentialOutcomeTable::from_fn(support, t, |_, tt, k| {
                    S::of(normal(Self::linear(coef, *intercept, k) + shocks[tt], *sd, rng))
                })
            }
            DgpSpec::PoissonLinear { coef, intercept } => {
                let mut err = None;
                let table = PotentialOutcomeTable::from_fn(support, t, |_, _, k| {
                    let mean = Self::linear(coef, *intercept, k);
                    if mean == 0.0 {
                        return S::zero();
                    }
                    match Poisson::new(mean) {
                        Ok(d) => S::of(d.sample(rng)),
                        Err(_) => {
                            err = Some(Error::Parameter(format!("Poisson mean {mean} at exposure {k} is invalid")));
                            S::zero()
                        }
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                table
            }
            DgpSpec::BernoulliLinear { coef, intercept, scale } => {
                let mut err = None;
                let table = PotentialOutcomeTable::from_fn(support, t, |_, _, k| {
                    let p = Self::linear(coef, *intercept, k) / scale;
                    match Bernoulli::new(p) {
                        Ok(d) => S::of(f64::from(u8::from(d.sample(rng)))),
                        Err(_) => {
                            err = Some(Error::Parameter(format!("Bernoulli probability {p} at exposure {k} is outside [0,1]")));
                            S::zero()
                        }
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                table.with_bound(S::one())
            }
            DgpSpec::StabilityChain { mean, sd, epsilon } => {
                let sizes: Vec<usize> = support.iter().map(Vec::len).collect();
                let mut cells: Vec<Vec<f64>> = sizes
                    .iter()
                    .map(|&m| {
                        let mut v = Vec::with_capacity(m * t);
                        for _ in 0..m {
                            v.push(normal(*mean, *sd, rng));
                        }
                        for tt in 1..t {
                            for id in 0..m {
                                let prev = v[(tt - 1) * m + id];
                                let step = if *epsilon > 0.0 { rng.random_range(-*epsilon..*epsilon) } else { 0.0 };
                                v.push(prev + step);
                            }
                        }
                        v
                    })
                    .collect();
                if t == 0 {
                    cells.iter_mut().for_each(Vec::clear);
                }
                PotentialOutcomeTable::from_fn(support, t, |i, tt, k| {
                    let id = index.id_of(i, k).expect("exposure in support") as usize;
                    S::of(cells[i][tt * sizes[i] + id])
                })
            }
            DgpSpec::Constant { value } => PotentialOutcomeTable::constant(support, t, S::of(*value)).with_bound(S::of(value.abs())),
        };
        Ok(table)
    }
}

/// Population-level causal quantity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Estimand {
    /// Exposure contrast at a 0-based time.
    Tec { t: usize, treat: Exposure, control: Exposure },
    /// Exposure contrast averaged over all times.
    Atec { treat: Exposure, control: Exposure },
    TotalEffect { t: usize },
    AvgTotalEffect,
}

impl Estimand {
    pub fn contrast(&self) -> Contrast {
        match self {
            Estimand::Tec { treat, control, .. } | Estimand::Atec { treat, control } => Contrast::Exposures(*treat, *control),
            _ => Contrast::TotalEffect,
        }
    }
}

/// A computed estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandValue<S> {
    pub kind: Estimand,
    pub value: S,
}

/// `(1/n) Σ_i [Y_{i,t}(treat_i) − Y_{i,t}(control_i)]`.
pub fn contrast_value<S: Scalar>(table: &PotentialOutcomeTable<S>, targets: &Targets, t: usize) -> Result<S> {
    let n = table.n();
    let mut sum = S::zero();
    for i in 0..n {
        sum += table.value(i, t, &targets.treat[i])? - table.value(i, t, &targets.control[i])?;
    }
    Ok(sum / S::of_usize(n))
}

/// Exact value of an estimand on a table.
pub fn true_estimand<S: Scalar>(
    table: &PotentialOutcomeTable<S>,
    kind: &Estimand,
    map: &ExposureMap,
    graph: &InterferenceGraph,
) -> Result<EstimandValue<S>> {
    let targets = Targets::new(map, graph, &kind.contrast())?;
    let value = match kind {
        Estimand::Tec { t, .. } | Estimand::TotalEffect { t } => {
            if *t >= table.t() {
                return Err(Error::Parameter(format!("time {t} beyond horizon {}", table.t())));
            }
            contrast_value(table, &targets, *t)?
        }
        Estimand::Atec { .. } | Estimand::AvgTotalEffect => {
            let mut s = S::zero();
            for t in 0..table.t() {
                s += contrast_value(table, &targets, t)?;
            }
            s / S::of_usize(table.t())
        }
    };
    Ok(EstimandValue { kind: kind.clone(), value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::AssignmentMatrix;
    use crate::rng::{stream, Domain};

    fn index(map: ExposureMap, graph: InterferenceGraph) -> ExposureIndex {
        ExposureIndex::new(map, Arc::new(graph)).unwrap()
    }

    #[test]
    fn normal_linear_cell_mean() {
        let idx = index(ExposureMap::SelfAndAnyNeighbor, InterferenceGraph::from_edges(2, &[(0, 1)]).unwrap());
        let mut rng = stream(1, Domain::Outcomes, 0);
        let k = Exposure::ints(&[1, 1]);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| DgpSpec::normal().generate::<f64, _>(&idx, 1, &mut rng).unwrap().value(0, 0, &k).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.0).abs() < 3.0 / (draws.len() as f64).sqrt());
    }

    #[test]
    fn bernoulli_linear_control_mean() {
        let idx = index(ExposureMap::SelfAndAnyNeighbor, InterferenceGraph::from_edges(2, &[(0, 1)]).unwrap());
        let mut rng = stream(2, Domain::Outcomes, 0);
        let k = Exposure::ints(&[0, 0]);
        let reps = 100_000;
        let hits: f64 = (0..reps)
            .map(|_| DgpSpec::bernoulli().generate::<f64, _>(&idx, 1, &mut rng).unwrap().value(1, 0, &k).unwrap())
            .sum();
        let p = 2.0 / 18.0;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((hits / reps as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn invalid_bernoulli_probability_is_rejected() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(2));
        let dgp = DgpSpec::BernoulliLinear {
            coef: vec![30.0],
            intercept: 0.0,
            scale: 18.0,
        };
        assert!(dgp.generate::<f64, _>(&idx, 1, &mut stream(0, Domain::Outcomes, 0)).is_err());
    }

    #[test]
    fn stability_chain_respects_epsilon() {
        let idx = index(ExposureMap::SelfAndFraction, InterferenceGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        let mut rng = stream(3, Domain::Outcomes, 0);
        for eps in [0.0, 0.5, 3.0] {
            let dgp = DgpSpec::StabilityChain {
                mean: 10.0,
                sd: 1.0,
                epsilon: eps,
            };
            let table: PotentialOutcomeTable<f64> = dgp.generate(&idx, 20, &mut rng).unwrap();
            assert!(stability_violation(&table) <= eps);
            if eps == 0.0 {
                assert_eq!(table.cells(1, 0), table.cells(1, 19));
            }
        }
    }

    #[test]
    fn temporal_shock_is_shared() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(3));
        let dgp = DgpSpec::NormalLinearTemporal {
            coef: vec![0.0],
            intercept: 0.0,
            sd: 0.0,
            shock: 1.0,
        };
        let table: PotentialOutcomeTable<f64> = dgp.generate(&idx, 4, &mut stream(4, Domain::Outcomes, 0)).unwrap();
        for t in 0..4 {
            let v = table.get(0, t, 0);
            assert!(v == 1.0 || v == -1.0);
            assert!((0..3).all(|i| table.cells(i, t).iter().all(|&x| x == v)));
        }
    }

    #[test]
    fn tec_hand_example() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(2));
        let k = Exposure::ints(&[1]);
        let kp = Exposure::ints(&[0]);
        let mut table = PotentialOutcomeTable::constant(idx.support().clone(), 1, 0.0);
        table.set(0, 0, &k, 4.0).unwrap();
        table.set(1, 0, &k, 2.0).unwrap();
        let est = Estimand::Tec { t: 0, treat: k, control: kp };
        let v = true_estimand(&table, &est, idx.map(), idx.graph()).unwrap();
        assert_eq!(v.value, 3.0);
        let same = PotentialOutcomeTable::constant(idx.support().clone(), 3, 7.0);
        let atec = Estimand::Atec { treat: k, control: kp };
        assert_eq!(true_estimand(&same, &atec, idx.map(), idx.graph()).unwrap().value, 0.0);
    }

    #[test]
    fn estimand_is_permutation_invariant() {
        let g = InterferenceGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let perm = [2usize, 0, 3, 1];
        let edges: Vec<_> = g.edges().into_iter().map(|(a, b)| (perm[a], perm[b])).collect();
        let h = InterferenceGraph::from_edges(4, &edges).unwrap();
        let a = index(ExposureMap::SelfAndAnyNeighbor, g);
        let b = index(ExposureMap::SelfAndAnyNeighbor, h);
        let ta: PotentialOutcomeTable<f64> = DgpSpec::normal().generate(&a, 2, &mut stream(5, Domain::Outcomes, 0)).unwrap();
        let tb = PotentialOutcomeTable::from_fn(b.support().clone(), 2, |i, t, k| {
            let src = perm.iter().position(|&p| p == i).unwrap();
            ta.value(src, t, k).unwrap()
        });
        let est = Estimand::AvgTotalEffect;
        let va = true_estimand(&ta, &est, a.map(), a.graph()).unwrap().value;
        let vb = true_estimand(&tb, &est, b.map(), b.graph()).unwrap().value;
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn realize_picks_cells_exactly() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(2));
        let table = PotentialOutcomeTable::from_fn(idx.support().clone(), 2, |i, t, k| (10 * i + 100 * t) as f64 + k.as_f64()[0]);
        let w = AssignmentMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let y = realize(&table, &idx.realize(&w)).unwrap();
        assert_eq!(y.column(0), &[1.0, 10.0]);
        assert_eq!(y.column(1), &[100.0, 111.0]);
    }

    #[test]
    fn missing_cells_are_reported() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(1));
        let mut table = PotentialOutcomeTable::constant(idx.support().clone(), 1, f64::NAN);
        table.set(0, 0, &Exposure::ints(&[0]), 1.0).unwrap();
        let w = AssignmentMatrix::from_rows(&[vec![1]]).unwrap();
        match realize(&table, &idx.realize(&w)) {
            Err(Error::Completeness { unit: 0, time: 0, exposure }) => assert_eq!(exposure, "(1)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(table.check_complete(|_, _, k| k.as_f64()[0] == 0.0).is_ok());
        assert!(table.check_complete(|_, _, _| true).is_err());
    }

    #[test]
    fn stability_violation_single_jump() {
        let idx = index(ExposureMap::SelfOnly, InterferenceGraph::empty(2));
        let mut table = PotentialOutcomeTable::constant(idx.support().clone(), 3, 1.0);
        assert_eq!(stability_violation(&table), 0.0);
        table.set(1, 2, &Exposure::ints(&[1]), 3.5).unwrap();
        assert_eq!(stability_violation(&table), 2.5);
    }

    #[test]
    fn csv_round_trip() {
        let idx = index(ExposureMap::SelfAndFraction, InterferenceGraph::from_edges(3, &[(0, 1), (0, 2)]).unwrap());
        let table: PotentialOutcomeTable<f64> = DgpSpec::normal().generate(&idx, 2, &mut stream(6, Domain::Outcomes, 0)).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = PotentialOutcomeTable::<f64>::read_csv(buf.as_slice(), idx.support().clone(), 2).unwrap();
        assert_eq!(back, table);
    }
}
