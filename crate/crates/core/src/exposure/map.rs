use std::collections::BTreeSet;
use std::sync::Arc;

use num_rational::Ratio;

use super::value::Exposure;
use crate::design::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::population::InterferenceGraph;

/// Exposure mapping `f_{i,t}`.
///
/// Every shipped map depends on the assignment matrix only through, for each
/// column in its window, the unit's own assignment and its count of treated
/// neighbors. Those per-column summaries are called column stats below and are
/// indexed as `own * (deg + 1) + count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExposureMap {
    /// `w_{i,t}`.
    SelfOnly,
    /// `(w_{i,t}, 1{at least one treated neighbor})`.
    SelfAndAnyNeighbor,
    /// `(w_{i,t}, b)` where `b` counts the thresholds at or below the treated
    /// neighbor fraction; buckets are half-open except the last.
    SelfAndFractionBuckets { thresholds: Vec<Ratio<i64>> },
    /// `(w_{i,t}, treated neighbor fraction)`.
    SelfAndFraction,
    /// `(w_{i,t-1}, w_{i,t}, u_{i,t-1}, u_{i,t})` with `u` the treated neighbor fraction.
    TwoPeriodSelfAndFraction,
    /// `(w_{i,t-1}, w_{i,t}, Σ_{j∈N_i} w_{j,t-1}, Σ_{j∈N_i} w_{j,t})`.
    StratifiedCarryover,
}

impl ExposureMap {
    /// Quartile buckets `[0,1/4), [1/4,1/2), [1/2,3/4), [3/4,1]`.
    pub fn quartile_buckets() -> Self {
        ExposureMap::SelfAndFractionBuckets {
            thresholds: vec![Ratio::new(1, 4), Ratio::new(1, 2), Ratio::new(3, 4)],
        }
    }

    /// Validates bucket thresholds: strictly increasing within `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if let ExposureMap::SelfAndFractionBuckets { thresholds } = self {
            let ok = thresholds.windows(2).all(|w| w[0] < w[1])
                && thresholds
                    .iter()
                    .all(|t| *t > Ratio::from_integer(0) && *t <= Ratio::from_integer(1));
            if !ok {
                return Err(Error::Parameter(
                    "bucket thresholds must be strictly increasing within (0,1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Order `p` of local effectiveness: number of columns in the window.
    pub fn lea_order(&self) -> usize {
        match self {
            ExposureMap::TwoPeriodSelfAndFraction | ExposureMap::StratifiedCarryover => 2,
            _ => 1,
        }
    }

    /// Whether the map divides by the neighborhood size.
    pub fn uses_fraction(&self) -> bool {
        matches!(
            self,
            ExposureMap::SelfAndFractionBuckets { .. }
                | ExposureMap::SelfAndFraction
                | ExposureMap::TwoPeriodSelfAndFraction
        )
    }

    /// Column feeding window slot `slot` at time `t` (0-based); missing early
    /// columns are replaced by column 0.
    pub fn window_column(&self, t: usize, slot: usize) -> usize {
        (t + slot + 1).saturating_sub(self.lea_order())
    }

    /// Exposure from the column stats of the window, oldest first.
    pub fn from_stats(&self, degree: usize, window: &[(u8, usize)]) -> Exposure {
        let frac = |c: usize| {
            if degree == 0 {
                Ratio::from_integer(0)
            } else {
                Ratio::new(c as i64, degree as i64)
            }
        };
        let int = |v: usize| Ratio::from_integer(v as i64);
        match self {
            ExposureMap::SelfOnly => Exposure::new(&[int(window[0].0 as usize)]),
            ExposureMap::SelfAndAnyNeighbor => {
                Exposure::new(&[int(window[0].0 as usize), int(usize::from(window[0].1 > 0))])
            }
            ExposureMap::SelfAndFractionBuckets { thresholds } => {
                let f = frac(window[0].1);
                let b = thresholds.iter().filter(|&&th| f >= th).count();
                Exposure::new(&[int(window[0].0 as usize), int(b)])
            }
            ExposureMap::SelfAndFraction => Exposure::new(&[int(window[0].0 as usize), frac(window[0].1)]),
            ExposureMap::TwoPeriodSelfAndFraction => Exposure::new(&[
                int(window[0].0 as usize),
                int(window[1].0 as usize),
                frac(window[0].1),
                frac(window[1].1),
            ]),
            ExposureMap::StratifiedCarryover => Exposure::new(&[
                int(window[0].0 as usize),
                int(window[1].0 as usize),
                int(window[0].1),
                int(window[1].1),
            ]),
        }
    }

    /// Realized exposure `H_{i,t} = f_{i,t}(W)`; `t` is 0-based.
    pub fn eval(&self, w: &AssignmentMatrix, graph: &InterferenceGraph, i: usize, t: usize) -> Exposure {
        let window: Vec<(u8, usize)> = (0..self.lea_order())
            .map(|slot| {
                let col = self.window_column(t, slot);
                let cnt = graph.neighbors(i).iter().filter(|&&j| w.get(j, col) == 1).count();
                (w.get(i, col), cnt)
            })
            .collect();
        self.from_stats(graph.degree(i), &window)
    }

    /// Exposure of unit `i` when every unit is treated (`value = 1`) or untreated (`0`).
    pub fn constant_exposure(&self, degree: usize, value: u8) -> Exposure {
        let stat = (value, if value == 1 { degree } else { 0 });
        self.from_stats(degree, &vec![stat; self.lea_order()])
    }

    /// Units whose empty neighborhood makes the treated fraction a convention (0).
    pub fn empty_neighborhood_flags(&self, graph: &InterferenceGraph) -> Vec<usize> {
        if self.uses_fraction() {
            graph.isolated()
        } else {
            Vec::new()
        }
    }

    /// Allowed column stats per window slot for the event `H_i = k`.
    ///
    /// Every shipped map factorises over slots, so the event is the product of
    /// the returned per-slot sets.
    pub fn slot_events(&self, degree: usize, k: &Exposure) -> Vec<Vec<bool>> {
        let m = 2 * (degree + 1);
        let p = self.lea_order();
        let mut slots = vec![vec![false; m]; p];
        if p == 1 {
            for (s, allowed) in slots[0].iter_mut().enumerate() {
                *allowed = self.from_stats(degree, &[stat_of(s, degree)]) == *k;
            }
        } else {
            for s0 in 0..m {
                for s1 in 0..m {
                    if self.from_stats(degree, &[stat_of(s0, degree), stat_of(s1, degree)]) == *k {
                        slots[0][s0] = true;
                        slots[1][s1] = true;
                    }
                }
            }
        }
        slots
    }
}

/// Decodes a column-stat index into `(own, treated neighbor count)`.
pub fn stat_of(s: usize, degree: usize) -> (u8, usize) {
    ((s / (degree + 1)) as u8, s % (degree + 1))
}

/// Per-unit exposure sets Δ_i with fast lookup from column stats.
#[derive(Debug, Clone)]
pub struct ExposureIndex {
    map: ExposureMap,
    graph: Arc<InterferenceGraph>,
    support: Arc<Vec<Vec<Exposure>>>,
    ids: Vec<Vec<u32>>,
}

impl ExposureIndex {
    pub fn new(map: ExposureMap, graph: Arc<InterferenceGraph>) -> Result<Self> {
        map.validate()?;
        let p = map.lea_order();
        let mut support = Vec::with_capacity(graph.n());
        let mut ids = Vec::with_capacity(graph.n());
        for i in 0..graph.n() {
            let d = graph.degree(i);
            let m = 2 * (d + 1);
            let values: Vec<Exposure> = if p == 1 {
                (0..m).map(|s| map.from_stats(d, &[stat_of(s, d)])).collect()
            } else {
                (0..m * m)
                    .map(|s| map.from_stats(d, &[stat_of(s / m, d), stat_of(s % m, d)]))
                    .collect()
            };
            let delta: Vec<Exposure> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let table = values
                .iter()
                .map(|v| delta.binary_search(v).expect("value in support") as u32)
                .collect();
            support.push(delta);
            ids.push(table);
        }
        Ok(Self {
            map,
            graph,
            support: Arc::new(support),
            ids,
        })
    }

    pub fn map(&self) -> &ExposureMap {
        &self.map
    }

    pub fn graph(&self) -> &Arc<InterferenceGraph> {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Δ_i for every unit, sorted.
    pub fn support(&self) -> &Arc<Vec<Vec<Exposure>>> {
        &self.support
    }

    pub fn exposure(&self, i: usize, id: u32) -> Exposure {
        self.support[i][id as usize]
    }

    pub fn id_of(&self, i: usize, k: &Exposure) -> Option<u32> {
        self.support[i].binary_search(k).ok().map(|x| x as u32)
    }

    /// Exposure ids of every unit at every time.
    pub fn realize(&self, w: &AssignmentMatrix) -> ExposureIds {
        let mut out = ExposureIds {
            n: w.n(),
            t: w.t(),
            ids: vec![0; w.n() * w.t()],
        };
        self.realize_into(w, &mut out);
        out
    }

    /// As [`realize`](Self::realize), reusing `out`'s allocation.
    pub fn realize_into(&self, w: &AssignmentMatrix, out: &mut ExposureIds) {
        let n = w.n();
        out.n = n;
        out.t = w.t();
        out.ids.resize(n * w.t(), 0);
        let mut prev = vec![0usize; n];
        let mut cur = vec![0usize; n];
        let p = self.map.lea_order();
        for t in 0..w.t() {
            let col = w.column(t);
            for i in 0..n {
                let cnt: usize = self.graph.neighbors(i).iter().map(|&j| col[j] as usize).sum();
                cur[i] = col[i] as usize * (self.graph.degree(i) + 1) + cnt;
            }
            if t == 0 {
                prev.copy_from_slice(&cur);
            }
            let row = &mut out.ids[t * n..(t + 1) * n];
            for i in 0..n {
                row[i] = if p == 1 {
                    self.ids[i][cur[i]]
                } else {
                    let m = 2 * (self.graph.degree(i) + 1);
                    self.ids[i][prev[i] * m + cur[i]]
                };
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }
}

/// Realized exposure ids, `n × T`, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureIds {
    n: usize,
    t: usize,
    ids: Vec<u32>,
}

impl ExposureIds {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, t: usize) -> u32 {
        self.ids[t * self.n + i]
    }

    pub fn column(&self, t: usize) -> &[u32] {
        &self.ids[t * self.n..(t + 1) * self.n]
    }

    pub fn empty() -> Self {
        Self { n: 0, t: 0, ids: Vec::new() }
    }
}

/// Per-unit target exposures of a contrast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Targets {
    pub treat: Vec<Exposure>,
    pub control: Vec<Exposure>,
}

/// What is being contrasted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Contrast {
    /// The same pair `(k, k')` for every unit.
    Exposures(Exposure, Exposure),
    /// Everyone treated versus everyone untreated, `h_i^1` versus `h_i^0`.
    TotalEffect,
}

impl Targets {
    pub fn new(map: &ExposureMap, graph: &InterferenceGraph, contrast: &Contrast) -> Result<Self> {
        let n = graph.n();
        let targets = match contrast {
            Contrast::Exposures(k, kp) => {
                if k == kp {
                    return Err(Error::Parameter(format!("contrast compares {k} with itself")));
                }
                Self {
                    treat: vec![*k; n],
                    control: vec![*kp; n],
                }
            }
            Contrast::TotalEffect => Self {
                treat: (0..n).map(|i| map.constant_exposure(graph.degree(i), 1)).collect(),
                control: (0..n).map(|i| map.constant_exposure(graph.degree(i), 0)).collect(),
            },
        };
        Ok(targets)
    }
}
