use std::collections::BTreeMap;
use std::io::Write;


use super::map::{ExposureIndex, Targets};
use super::value::Exposure;
use crate::design::{Blocks, Design, PanelDesign};
use crate::error::{Error, Result};
use crate::numeric::{is_zero_prob, Scalar};
use crate::population::dependency_lists;
use crate::rng::{stream, Domain};

/// How a probability table was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbMethod {
    Exact,
    MonteCarlo { reps: usize },
}

impl std::fmt::Display for ProbMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbMethod::Exact => write!(f, "exact"),
            ProbMethod::MonteCarlo { reps } => write!(f, "monte-carlo({reps})"),
        }
    }
}

/// Allowed column stats in one column, for one unit.
type ColumnSet = (usize, Vec<usize>);

/// Exact exposure probabilities under a temporally independent design.
///
/// Column stats of one or two units in a single column are computed by a
/// dynamic program over assignment blocks; windows spanning several columns
/// multiply because columns are independent.
pub struct ProbabilityEngine<'a, S> {
    index: &'a ExposureIndex,
    blocks: Blocks,
    components: Vec<(S, S)>,
    deps: Vec<Vec<usize>>,
    singles: Vec<Vec<S>>,
}

impl<'a, S: Scalar> ProbabilityEngine<'a, S> {
    pub fn new(index: &'a ExposureIndex, design: &Design<S>) -> Result<Self> {
        let n = index.n();
        design.validate(n)?;
        let blocks = design.blocks(n);
        let deps = dependency_lists(index.graph(), &blocks.block_of);
        let mut engine = Self {
            index,
            blocks,
            components: design.components(),
            deps,
            singles: Vec::new(),
        };
        engine.singles = (0..n).map(|i| engine.column_dist(i, None)).collect();
        Ok(engine)
    }

    pub fn index(&self) -> &ExposureIndex {
        self.index
    }

    /// Units whose exposures may depend on unit `i`'s.
    pub fn dependents(&self, i: usize) -> &[usize] {
        &self.deps[i]
    }

    pub fn is_dependent(&self, i: usize, j: usize) -> bool {
        self.deps[i].binary_search(&j).is_ok()
    }

    fn stats_len(&self, i: usize) -> usize {
        2 * (self.index.graph().degree(i) + 1)
    }

    /// Distribution of the column stats of `i` (and jointly of `j`) in one column.
    fn column_dist(&self, i: usize, j: Option<usize>) -> Vec<S> {
        let g = self.index.graph();
        let di = g.degree(i);
        let mj = j.map_or(1, |j| self.stats_len(j));
        let size = self.stats_len(i) * mj;
        let mut relevant: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        let mut add = |u: usize, delta: usize| {
            let b = self.blocks.block_of[u];
            let list = relevant.entry(b).or_default();
            match list.iter_mut().find(|(v, _)| *v == u) {
                Some(entry) => entry.1 += delta,
                None => list.push((u, delta)),
            }
        };
        add(i, (di + 1) * mj);
        for &u in g.neighbors(i) {
            add(u, mj);
        }
        if let Some(j) = j {
            add(j, g.degree(j) + 1);
            for &u in g.neighbors(j) {
                add(u, 1);
            }
        }
        let mut dist = vec![S::zero(); size];
        dist[0] = S::one();
        let mut tmp = vec![S::zero(); size];
        let mut acc = vec![S::zero(); size];
        for members in relevant.values() {
            acc.iter_mut().for_each(|a| *a = S::zero());
            for &(weight, q) in &self.components {
                if weight == S::zero() {
                    continue;
                }
                tmp.copy_from_slice(&dist);
                for &(_, delta) in members {
                    for idx in (0..size - delta).rev() {
                        let v = tmp[idx];
                        if v != S::zero() {
                            tmp[idx + delta] += q * v;
                            tmp[idx] = (S::one() - q) * v;
                        }
                    }
                }
                for (a, t) in acc.iter_mut().zip(&tmp) {
                    *a += weight * *t;
                }
            }
            std::mem::swap(&mut dist, &mut acc);
        }
        dist
    }

    /// Event `H_{i,t} = k` as allowed column stats per absolute column.
    fn placed_event(&self, i: usize, t: usize, k: &Exposure) -> Vec<ColumnSet> {
        let map = self.index.map();
        let slots = map.slot_events(self.index.graph().degree(i), k);
        let mut cols: Vec<(usize, Vec<bool>)> = Vec::new();
        for (slot, allowed) in slots.into_iter().enumerate() {
            let col = map.window_column(t, slot);
            match cols.iter_mut().find(|(c, _)| *c == col) {
                Some((_, existing)) => existing.iter_mut().zip(&allowed).for_each(|(e, a)| *e &= *a),
                None => cols.push((col, allowed)),
            }
        }
        cols.into_iter()
            .map(|(c, set)| (c, set.iter().enumerate().filter(|(_, &a)| a).map(|(s, _)| s).collect()))
            .collect()
    }

    fn sum_single(&self, i: usize, set: &[usize]) -> S {
        set.iter().map(|&s| self.singles[i][s]).sum()
    }

    /// Probability that both events hold (`ev_j` may be on the same unit).
    fn joint(&self, i: usize, ev_i: &[ColumnSet], j: usize, ev_j: &[ColumnSet], pair: Option<&[S]>) -> S {
        let mut p = S::one();
        for (col, set_i) in ev_i {
            match ev_j.iter().find(|(c, _)| c == col) {
                None => p *= self.sum_single(i, set_i),
                Some((_, set_j)) if i == j => {
                    let both: Vec<usize> = set_i.iter().copied().filter(|s| set_j.contains(s)).collect();
                    p *= self.sum_single(i, &both);
                }
                Some((_, set_j)) => match pair {
                    Some(dist) => {
                        let mj = self.stats_len(j);
                        let mut s = S::zero();
                        for &a in set_i {
                            for &b in set_j {
                                s += dist[a * mj + b];
                            }
                        }
                        p *= s;
                    }
                    None => p *= self.sum_single(i, set_i) * self.sum_single(j, set_j),
                },
            }
            if p == S::zero() {
                return p;
            }
        }
        for (col, set_j) in ev_j {
            if !ev_i.iter().any(|(c, _)| c == col) {
                p *= self.sum_single(j, set_j);
            }
        }
        p
    }

    /// `P(H_{i,t} = k)`.
    pub fn marginal(&self, i: usize, t: usize, k: &Exposure) -> S {
        let ev = self.placed_event(i, t, k);
        ev.iter().map(|(_, set)| self.sum_single(i, set)).fold(S::one(), |a, b| a * b)
    }

    /// `P(H_{i,t} = k, H_{j,t2} = k2)`; `i` may equal `j` when `t != t2`.
    pub fn joint_prob(&self, i: usize, t: usize, k: &Exposure, j: usize, t2: usize, k2: &Exposure) -> S {
        let ev_i = self.placed_event(i, t, k);
        let ev_j = self.placed_event(j, t2, k2);
        let pair = (i != j && self.is_dependent(i, j)).then(|| self.column_dist(i, Some(j)));
        self.joint(i, &ev_i, j, &ev_j, pair.as_deref())
    }

    /// Representative times of the time classes: interior first, then the
    /// boundary `t = 0` when the window is longer than one column.
    pub fn class_times(&self) -> Vec<usize> {
        match self.index.map().lea_order() {
            1 => vec![0],
            p => vec![p - 1, 0],
        }
    }

    /// Marginal, pairwise and (optionally) nothing else for a contrast.
    pub fn contrast_probs(&self, targets: &Targets) -> Result<ContrastProbs<S>> {
        let n = self.index.n();
        if targets.treat.len() != n || targets.control.len() != n {
            return Err(Error::Parameter("targets do not cover every unit".into()));
        }
        let mut classes = Vec::new();
        for t in self.class_times() {
            let ev_t: Vec<_> = (0..n).map(|i| self.placed_event(i, t, &targets.treat[i])).collect();
            let ev_c: Vec<_> = (0..n).map(|i| self.placed_event(i, t, &targets.control[i])).collect();
            let prod = |i: usize, ev: &[ColumnSet]| {
                ev.iter().map(|(_, set)| self.sum_single(i, set)).fold(S::one(), |a, b| a * b)
            };
            let treat: Vec<S> = (0..n).map(|i| prod(i, &ev_t[i])).collect();
            let control: Vec<S> = (0..n).map(|i| prod(i, &ev_c[i])).collect();
            let mut pairs = Vec::new();
            for i in 0..n {
                for &j in self.deps[i].iter().filter(|&&j| j > i) {
                    let dist = self.column_dist(i, Some(j));
                    let d = Some(dist.as_slice());
                    pairs.push(PairCells {
                        i,
                        j,
                        cells: [
                            self.joint(i, &ev_t[i], j, &ev_t[j], d),
                            self.joint(i, &ev_t[i], j, &ev_c[j], d),
                            self.joint(i, &ev_c[i], j, &ev_t[j], d),
                            self.joint(i, &ev_c[i], j, &ev_c[j], d),
                        ],
                    });
                }
            }
            classes.push(ClassProbs {
                treat,
                control,
                treat_se: None,
                control_se: None,
                pairs,
            });
        }
        ContrastProbs::assemble(self.index, targets.clone(), classes, ProbMethod::Exact)
    }

    /// Joint probabilities of target events at two distinct times.
    pub fn crosstime_probs(&self, targets: &Targets, t: usize, t2: usize) -> Result<CrossTimeProbs<S>> {
        if t == t2 {
            return Err(Error::Parameter("cross-time probabilities need distinct times".into()));
        }
        let n = self.index.n();
        let ev = |tt: usize| -> (Vec<Vec<ColumnSet>>, Vec<Vec<ColumnSet>>) {
            (
                (0..n).map(|i| self.placed_event(i, tt, &targets.treat[i])).collect(),
                (0..n).map(|i| self.placed_event(i, tt, &targets.control[i])).collect(),
            )
        };
        let (a_t, a_c) = ev(t);
        let (b_t, b_c) = ev(t2);
        let cells = |i: usize, j: usize, pair: Option<&[S]>| {
            [
                self.joint(i, &a_t[i], j, &b_t[j], pair),
                self.joint(i, &a_t[i], j, &b_c[j], pair),
                self.joint(i, &a_c[i], j, &b_t[j], pair),
                self.joint(i, &a_c[i], j, &b_c[j], pair),
            ]
        };
        let own = (0..n).map(|i| cells(i, i, None)).collect();
        let shares_column = |i: usize, j: usize| a_t[i].iter().any(|(c, _)| b_t[j].iter().any(|(c2, _)| c == c2));
        let mut pairs = Vec::new();
        for i in 0..n {
            for &j in &self.deps[i] {
                if shares_column(i, j) {
                    let dist = self.column_dist(i, Some(j));
                    pairs.push(PairCells {
                        i,
                        j,
                        cells: cells(i, j, Some(&dist)),
                    });
                }
            }
        }
        Ok(CrossTimeProbs { t, t2, own, pairs })
    }

    /// `P(H_{i,t} = k)` for every `k ∈ Δ_i`, per time class.
    pub fn marginal_table(&self) -> MarginalTable<S> {
        let support = self.index.support();
        let classes = self
            .class_times()
            .into_iter()
            .map(|t| {
                (0..self.index.n())
                    .map(|i| support[i].iter().map(|k| (*k, self.marginal(i, t, k), S::zero())).collect())
                    .collect()
            })
            .collect();
        MarginalTable {
            classes,
            method: ProbMethod::Exact,
        }
    }

    /// Joint table of `(H_{i,t}, H_{j,t})` at the interior time.
    pub fn pairwise_table(&self, i: usize, j: usize) -> Result<Vec<(Exposure, Exposure, S)>> {
        if i == j {
            return Err(Error::Parameter("pairwise probabilities need two distinct units".into()));
        }
        let t = self.class_times()[0];
        self.table_between(i, t, j, t)
    }

    /// Joint table of `(H_{i,t}, H_{j,t2})` for `t != t2`.
    pub fn crosstime_table(&self, i: usize, t: usize, j: usize, t2: usize) -> Result<Vec<(Exposure, Exposure, S)>> {
        if t == t2 {
            return Err(Error::Parameter("cross-time probabilities need distinct times".into()));
        }
        self.table_between(i, t, j, t2)
    }

    fn table_between(&self, i: usize, t: usize, j: usize, t2: usize) -> Result<Vec<(Exposure, Exposure, S)>> {
        let support = self.index.support();
        let pair = (i != j && self.is_dependent(i, j)).then(|| self.column_dist(i, Some(j)));
        let evs_j: Vec<_> = support[j].iter().map(|k| self.placed_event(j, t2, k)).collect();
        let mut out = Vec::with_capacity(support[i].len() * support[j].len());
        for k in &support[i] {
            let ev_i = self.placed_event(i, t, k);
            for (k2, ev_j) in support[j].iter().zip(&evs_j) {
                out.push((*k, *k2, self.joint(i, &ev_i, j, ev_j, pair.as_deref())));
            }
        }
        Ok(out)
    }
}

/// Joint target cells for a pair: `[treat/treat, treat/control, control/treat,
/// control/control]`, the first label referring to unit `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCells<S> {
    pub i: usize,
    pub j: usize,
    pub cells: [S; 4],
}

/// Target probabilities for one time class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs<S> {
    pub treat: Vec<S>,
    pub control: Vec<S>,
    pub treat_se: Option<Vec<S>>,
    pub control_se: Option<Vec<S>>,
    /// Dependent pairs `i < j`; every other pair has product joints.
    pub pairs: Vec<PairCells<S>>,
}

/// Exposure probabilities needed by the estimators of one contrast.
#[derive(Debug, Clone)]
pub struct ContrastProbs<S> {
    pub targets: Targets,
    treat_id: Vec<u32>,
    control_id: Vec<u32>,
    lea: usize,
    pub classes: Vec<ClassProbs<S>>,
    pub method: ProbMethod,
}

/// Sentinel id for a target outside a unit's exposure set.
pub const NO_ID: u32 = u32::MAX;

impl<S: Scalar> ContrastProbs<S> {
    fn assemble(index: &ExposureIndex, targets: Targets, classes: Vec<ClassProbs<S>>, method: ProbMethod) -> Result<Self> {
        let n = index.n();
        let ids = |ks: &[Exposure]| (0..n).map(|i| index.id_of(i, &ks[i]).unwrap_or(NO_ID)).collect();
        Ok(Self {
            treat_id: ids(&targets.treat),
            control_id: ids(&targets.control),
            targets,
            lea: index.map().lea_order(),
            classes,
            method,
        })
    }

    pub fn n(&self) -> usize {
        self.treat_id.len()
    }

    /// Time class of a 0-based time.
    pub fn class_of(&self, t: usize) -> usize {
        usize::from(self.lea > 1 && t + 1 < self.lea)
    }

    pub fn at(&self, t: usize) -> &ClassProbs<S> {
        &self.classes[self.class_of(t)]
    }

    pub fn treat_id(&self, i: usize) -> u32 {
        self.treat_id[i]
    }

    pub fn control_id(&self, i: usize) -> u32 {
        self.control_id[i]
    }

    /// Errors unless every unit has positive probability of both targets at `t`.
    pub fn ensure_overlap(&self, t: usize) -> Result<()> {
        let c = self.at(t);
        let units: Vec<usize> = (0..self.n())
            .filter(|&i| is_zero_prob(c.treat[i]) || is_zero_prob(c.control[i]))
            .collect();
        if units.is_empty() {
            Ok(())
        } else {
            Err(Error::Overlap { time: t, units })
        }
    }

    /// Smallest target probability at `t`.
    pub fn min_probability(&self, t: usize) -> S {
        let c = self.at(t);
        c.treat.iter().chain(&c.control).copied().fold(S::one(), |a, b| a.min(b))
    }
}

/// Joint target probabilities between times `t` and `t2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTimeProbs<S> {
    pub t: usize,
    pub t2: usize,
    /// Same-unit cells, first label at `t`.
    pub own: Vec<[S; 4]>,
    /// Ordered dependent pairs sharing a window column, first label `i` at `t`.
    pub pairs: Vec<PairCells<S>>,
}

/// Marginal exposure probabilities per time class and unit.
#[derive(Debug, Clone)]
pub struct MarginalTable<S> {
    /// `classes[class][unit]` lists `(k, π, se)`.
    pub classes: Vec<Vec<Vec<(Exposure, S, S)>>>,
    pub method: ProbMethod,
}

impl<S: Scalar> MarginalTable<S> {
    /// Writes `unit,exposure,probability,method,se` rows for one time class.
    pub fn write_csv<W: Write>(&self, class: usize, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["unit", "exposure", "probability", "method", "se"])?;
        for (i, row) in self.classes[class].iter().enumerate() {
            for (k, p, se) in row {
                wtr.write_record([
                    i.to_string(),
                    k.to_string(),
                    format!("{}", p.f64()),
                    self.method.to_string(),
                    format!("{}", se.f64()),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<probability table>", e))?;
        Ok(())
    }
}

/// Monte-Carlo estimates of a contrast's probabilities, with binomial SEs.
pub fn monte_carlo_contrast_probs<S: Scalar>(
    index: &ExposureIndex,
    design: &Design<S>,
    targets: &Targets,
    reps: usize,
    seed: u64,
) -> Result<ContrastProbs<S>> {
    if reps == 0 {
        return Err(Error::Parameter("Monte-Carlo mode needs reps > 0".into()));
    }
    let n = index.n();
    let p = index.map().lea_order();
    let panel = PanelDesign::new(design.clone(), n, p)?;
    let blocks = design.blocks(n);
    let deps = dependency_lists(index.graph(), &blocks.block_of);
    let probe = ContrastProbs::<S>::assemble(index, targets.clone(), Vec::new(), ProbMethod::MonteCarlo { reps })?;
    let times: Vec<usize> = if p == 1 { vec![0] } else { vec![p - 1, 0] };
    let mut treat = vec![vec![0usize; n]; times.len()];
    let mut control = vec![vec![0usize; n]; times.len()];
    let pair_list: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| deps[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .collect();
    let mut pair_counts = vec![vec![[0usize; 4]; pair_list.len()]; times.len()];
    let mut rng = stream(seed, Domain::MonteCarlo, 0);
    let mut ids = super::map::ExposureIds::empty();
    for _ in 0..reps {
        let w = panel.sample(&mut rng);
        index.realize_into(&w, &mut ids);
        for (c, &t) in times.iter().enumerate() {
            let label = |i: usize| {
                let id = ids.get(i, t);
                (id == probe.treat_id[i], id == probe.control_id[i])
            };
            for i in 0..n {
                let (a, b) = label(i);
                treat[c][i] += usize::from(a);
                control[c][i] += usize::from(b);
            }
            for (k, &(i, j)) in pair_list.iter().enumerate() {
                let (ti, ci) = label(i);
                let (tj, cj) = label(j);
                let cell = &mut pair_counts[c][k];
                cell[0] += usize::from(ti && tj);
                cell[1] += usize::from(ti && cj);
                cell[2] += usize::from(ci && tj);
                cell[3] += usize::from(ci && cj);
            }
        }
    }
    let r = S::of_usize(reps);
    let freq = |c: usize| S::of_usize(c) / r;
    let se = |c: usize| {
        let f = freq(c);
        (f * (S::one() - f) / r).sqrt()
    };
    let classes = (0..times.len())
        .map(|c| ClassProbs {
            treat: treat[c].iter().map(|&x| freq(x)).collect(),
            control: control[c].iter().map(|&x| freq(x)).collect(),
            treat_se: Some(treat[c].iter().map(|&x| se(x)).collect()),
            control_se: Some(control[c].iter().map(|&x| se(x)).collect()),
            pairs: pair_list
                .iter()
                .zip(&pair_counts[c])
                .map(|(&(i, j), cnt)| PairCells {
                    i,
                    j,
                    cells: cnt.map(freq),
                })
                .collect(),
        })
        .collect();
    ContrastProbs::assemble(index, targets.clone(), classes, ProbMethod::MonteCarlo { reps })
}

/// Monte-Carlo marginal table with per-cell binomial SEs.
pub fn monte_carlo_marginal_table<S: Scalar>(
    index: &ExposureIndex,
    design: &Design<S>,
    reps: usize,
    seed: u64,
) -> Result<MarginalTable<S>> {
    if reps == 0 {
        return Err(Error::Parameter("Monte-Carlo mode needs reps > 0".into()));
    }
    let n = index.n();
    let p = index.map().lea_order();
    let panel = PanelDesign::new(design.clone(), n, p)?;
    let times: Vec<usize> = if p == 1 { vec![0] } else { vec![p - 1, 0] };
    let support = index.support();
    let mut counts: Vec<Vec<Vec<usize>>> = times
        .iter()
        .map(|_| (0..n).map(|i| vec![0usize; support[i].len()]).collect())
        .collect();
    let mut rng = stream(seed, Domain::MonteCarlo, 1);
    let mut ids = super::map::ExposureIds::empty();
    for _ in 0..reps {
        index.realize_into(&panel.sample(&mut rng), &mut ids);
        for (c, &t) in times.iter().enumerate() {
            for i in 0..n {
                counts[c][i][ids.get(i, t) as usize] += 1;
            }
        }
    }
    let r = reps as f64;
    let classes = counts
        .into_iter()
        .map(|per_unit| {
            per_unit
                .into_iter()
                .enumerate()
                .map(|(i, cs)| {
                    cs.into_iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let f = c as f64 / r;
                            (support[i][k], S::of(f), S::of((f * (1.0 - f) / r).sqrt()))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(MarginalTable {
        classes,
        method: ProbMethod::MonteCarlo { reps },
    })
}
