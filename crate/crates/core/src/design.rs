//! Assignment mechanisms: sampling, point probabilities and support enumeration.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::Scalar;
use crate::population::{DesignFamily, GroupPartition};

/// Default cap on binary dimensions for exhaustive support enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Cross-sectional assignment mechanism for one time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Design<S> {
    /// Each unit treated independently with probability `p`.
    Bernoulli { p: S },
    /// Each group independently joins the high arm with probability `p_arm`;
    /// members are then treated independently with `p_high` or `p_low`.
    TwoStage {
        p_arm: S,
        p_high: S,
        p_low: S,
        partition: Arc<GroupPartition>,
    },
    /// Each cluster is treated as a whole with probability `p`.
    ClusterRandomized { p: S, partition: Arc<GroupPartition> },
}

/// Assignment blocks: units in different blocks are assigned independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocks {
    pub block_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl<S: Scalar> Design<S> {
    pub fn family(&self) -> DesignFamily {
        match self {
            Design::Bernoulli { .. } => DesignFamily::Bernoulli,
            Design::TwoStage { .. } => DesignFamily::TwoStage,
            Design::ClusterRandomized { .. } => DesignFamily::ClusterRandomized,
        }
    }

    pub fn partition(&self) -> Option<&GroupPartition> {
        match self {
            Design::Bernoulli { .. } => None,
            Design::TwoStage { partition, .. } | Design::ClusterRandomized { partition, .. } => Some(partition),
        }
    }

    /// Checks parameter ranges and, for grouped designs, the unit count.
    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |name: &str, p: S| {
            let v = p.f64();
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name}={v} outside [0,1]")))
            }
        };
        match self {
            Design::Bernoulli { p } => check("p", *p),
            Design::TwoStage {
                p_arm,
                p_high,
                p_low,
                partition,
            } => {
                check("p_arm", *p_arm)?;
                check("p_high", *p_high)?;
                check("p_low", *p_low)?;
                check_units(partition, n)
            }
            Design::ClusterRandomized { p, partition } => {
                check("p", *p)?;
                check_units(partition, n)
            }
        }
    }

    /// Independent assignment blocks for `n` units.
    pub fn blocks(&self, n: usize) -> Blocks {
        match self.partition() {
            None => Blocks {
                block_of: (0..n).collect(),
                members: (0..n).map(|i| vec![i]).collect(),
            },
            Some(p) => Blocks {
                block_of: (0..n).map(|u| p.group_of(u)).collect(),
                members: p.groups().to_vec(),
            },
        }
    }

    /// Within a block, assignments are a mixture over latent components of
    /// i.i.d. Bernoulli(q) draws; returns `(weight, q)` pairs.
    pub fn components(&self) -> Vec<(S, S)> {
        match self {
            Design::Bernoulli { p } => vec![(S::one(), *p)],
            Design::TwoStage {
                p_arm, p_high, p_low, ..
            } => vec![(*p_arm, *p_high), (S::one() - *p_arm, *p_low)],
            Design::ClusterRandomized { p, .. } => vec![(*p, S::one()), (S::one() - *p, S::zero())],
        }
    }

    /// Exact probability of one cross-sectional assignment `w`.
    pub fn prob_of(&self, w: &[u8]) -> S {
        let blocks = self.blocks(w.len());
        let comps = self.components();
        let mut total = S::one();
        for members in &blocks.members {
            let ones = members.iter().filter(|&&u| w[u] == 1).count() as i32;
            let zeros = members.len() as i32 - ones;
            let mass = comps
                .iter()
                .map(|&(weight, q)| weight * q.powi(ones) * (S::one() - q).powi(zeros))
                .fold(S::zero(), |a, b| a + b);
            total *= mass;
        }
        total
    }

    /// Draws one column of assignments into `out`.
    pub fn sample_column<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        match self {
            Design::Bernoulli { p } => {
                let p = p.f64();
                for w in out.iter_mut() {
                    *w = u8::from(rng.random::<f64>() < p);
                }
            }
            Design::TwoStage {
                p_arm,
                p_high,
                p_low,
                partition,
            } => {
                let (pa, ph, pl) = (p_arm.f64(), p_high.f64(), p_low.f64());
                for group in partition.groups() {
                    let q = if rng.random::<f64>() < pa { ph } else { pl };
                    for &u in group {
                        out[u] = u8::from(rng.random::<f64>() < q);
                    }
                }
            }
            Design::ClusterRandomized { p, partition } => {
                let p = p.f64();
                for group in partition.groups() {
                    let w = u8::from(rng.random::<f64>() < p);
                    for &u in group {
                        out[u] = w;
                    }
                }
            }
        }
    }
}

fn check_units(partition: &GroupPartition, n: usize) -> Result<()> {
    if partition.n() == n {
        Ok(())
    } else {
        Err(Error::Parameter(format!("partition covers {} units, expected {n}", partition.n())))
    }
}

/// How assignments at different times relate; only independence is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemporalCoupling {
    #[default]
    Independent,
}

/// A design repeated independently over `t` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDesign<S> {
    pub base: Design<S>,
    pub n: usize,
    pub t: usize,
    pub coupling: TemporalCoupling,
}

impl<S: Scalar> PanelDesign<S> {
    pub fn new(base: Design<S>, n: usize, t: usize) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(Error::Parameter("panel needs n ≥ 1 and T ≥ 1".into()));
        }
        base.validate(n)?;
        Ok(Self {
            base,
            n,
            t,
            coupling: TemporalCoupling::Independent,
        })
    }

    /// Draws an `n × T` assignment matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentMatrix {
        let mut w = AssignmentMatrix::zeros(self.n, self.t);
        for t in 0..self.t {
            self.base.sample_column(rng, w.column_mut(t));
        }
        w
    }

    /// Exact probability of a full matrix.
    pub fn prob_of(&self, w: &AssignmentMatrix) -> S {
        (0..self.t).map(|t| self.base.prob_of(w.column(t))).fold(S::one(), |a, b| a * b)
    }

    /// Every matrix with positive probability, once each, with its probability.
    pub fn enumerate_support(&self, cap: usize) -> Result<SupportIter<S>> {
        let dims = self.n * self.t;
        if dims > cap {
            return Err(Error::EnumerationCap { dims, cap });
        }
        let mut col = vec![0u8; self.n];
        let column_probs = (0..1usize << self.n)
            .map(|code| {
                for (i, w) in col.iter_mut().enumerate() {
                    *w = ((code >> i) & 1) as u8;
                }
                self.base.prob_of(&col)
            })
            .collect();
        Ok(SupportIter {
            n: self.n,
            t: self.t,
            column_probs,
            next: 0,
            end: 1u64 << dims,
        })
    }
}

/// Iterator over `(matrix, probability)` for a panel's support.
pub struct SupportIter<S> {
    n: usize,
    t: usize,
    column_probs: Vec<S>,
    next: u64,
    end: u64,
}

impl<S: Scalar> Iterator for SupportIter<S> {
    type Item = (AssignmentMatrix, S);

    fn next(&mut self) -> Option<Self::Item> {
        let mask = (1u64 << self.n) - 1;
        while self.next < self.end {
            let code = self.next;
            self.next += 1;
            let mut p = S::one();
            for t in 0..self.t {
                p *= self.column_probs[((code >> (t * self.n)) & mask) as usize];
                if p == S::zero() {
                    break;
                }
            }
            if p > S::zero() {
                let mut w = AssignmentMatrix::zeros(self.n, self.t);
                for t in 0..self.t {
                    for i in 0..self.n {
                        w.set(i, t, ((code >> (t * self.n + i)) & 1) as u8);
                    }
                }
                return Some((w, p));
            }
        }
        None
    }
}

/// Binary `n × T` treatment panel, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentMatrix {
    n: usize,
    t: usize,
    data: Vec<u8>,
}

impl AssignmentMatrix {
    pub fn zeros(n: usize, t: usize) -> Self {
        Self {
            n,
            t,
            data: vec![0; n * t],
        }
    }

    pub fn filled(n: usize, t: usize, value: u8) -> Self {
        Self {
            n,
            t,
            data: vec![value.min(1); n * t],
        }
    }

    /// Builds a matrix from rows `values[i][t]`.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, t);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Parameter("ragged assignment rows".into()));
            }
            for (s, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::Parameter(format!("assignment entry {v} is not binary")));
                }
                m.set(i, s, v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, t: usize) -> u8 {
        self.data[t * self.n + i]
    }

    pub fn set(&mut self, i: usize, t: usize, v: u8) {
        self.data[t * self.n + i] = v;
    }

    pub fn column(&self, t: usize) -> &[u8] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn column_mut(&mut self, t: usize) -> &mut [u8] {
        &mut self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn treated_fraction(&self) -> f64 {
        self.data.iter().map(|&v| v as usize).sum::<usize>() as f64 / self.data.len().max(1) as f64
    }
}
