//! Interference structure: graphs, group partitions and dependency degrees.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected interference graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterferenceGraph {
    adjacency: Vec<Vec<usize>>,
}

impl InterferenceGraph {
    /// Graph on `n` units with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected edges; duplicates are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Parameter(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop at unit {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn are_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// `{i} ∪ N_i`, sorted.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut out = self.adjacency[i].clone();
        let pos = out.partition_point(|&j| j < i);
        out.insert(pos, i);
        out
    }

    /// Units with no neighbors.
    pub fn isolated(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.adjacency[i].is_empty()).collect()
    }

    /// Reads a two-column edge list; a non-numeric first row is taken as a header.
    /// Indices are 0-based unless `one_based` is set.
    pub fn read_edge_list<R: Read>(reader: R, n: Option<usize>, one_based: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut edges = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::Parameter(format!("edge list row {} has fewer than two columns", row + 1)));
            }
            let parsed = (record[0].parse::<usize>(), record[1].parse::<usize>());
            match parsed {
                (Ok(a), Ok(b)) => {
                    let shift = usize::from(one_based);
                    if one_based && (a == 0 || b == 0) {
                        return Err(Error::Parameter(format!("row {}: index 0 in a 1-based edge list", row + 1)));
                    }
                    edges.push((a - shift, b - shift));
                }
                _ if row == 0 => continue,
                _ => return Err(Error::Parameter(format!("edge list row {} is not two integers", row + 1))),
            }
        }
        let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
        let n = match n {
            Some(n) if n < inferred => {
                return Err(Error::Parameter(format!("edge list references unit {} but n={n}", inferred - 1)))
            }
            Some(n) => n,
            None => inferred,
        };
        Self::from_edges(n, &edges)
    }

    /// Writes `i,j` rows (0-based, `i < j`) with a header.
    pub fn write_edge_list<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["source", "target"])?;
        for (i, j) in self.edges() {
            wtr.write_record([i.to_string(), j.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<edge list>", e))?;
        Ok(())
    }
}

/// Erdős–Rényi graph: every unordered pair is an edge independently with probability `p`.
///
/// Uses geometric skipping, so the cost is linear in the number of edges.
pub fn gen_erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<InterferenceGraph> {
    if n == 0 {
        return Err(Error::Parameter("graph needs at least one unit".into()));
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::Parameter(format!("edge probability {p} outside [0,1]")));
    }
    let mut edges = Vec::new();
    if p == 1.0 {
        for v in 1..n {
            edges.extend((0..v).map(|w| (v, w)));
        }
    } else if p > 0.0 {
        let log_q = (1.0 - p).ln();
        let (mut v, mut w) = (1usize, -1i64);
        while v < n {
            let u: f64 = rng.random();
            let skip = ((1.0 - u).ln() / log_q).floor();
            w += 1 + if skip.is_finite() { skip as i64 } else { i64::MAX / 4 };
            while v < n && w >= v as i64 {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((v, w as usize));
            }
        }
    }
    InterferenceGraph::from_edges(n, &edges)
}

/// Partition of the units into disjoint, non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl GroupPartition {
    /// Validates that `groups` is an exact partition of `0..n`.
    pub fn new(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut membership = vec![usize::MAX; n];
        let mut groups = groups;
        for (g, members) in groups.iter_mut().enumerate() {
            if members.is_empty() {
                return Err(Error::Parameter(format!("group {g} is empty")));
            }
            members.sort_unstable();
            for &u in members.iter() {
                if u >= n {
                    return Err(Error::Parameter(format!("unit {u} out of range for n={n}")));
                }
                if membership[u] != usize::MAX {
                    return Err(Error::Parameter(format!("unit {u} belongs to more than one group")));
                }
                membership[u] = g;
            }
        }
        if let Some(u) = membership.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Parameter(format!("unit {u} belongs to no group")));
        }
        Ok(Self { groups, membership })
    }

    /// Consecutive groups with the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&s| {
                let g: Vec<usize> = (start..start + s).collect();
                start += s;
                g
            })
            .collect();
        Self::new(start, groups)
    }

    /// `n / r` groups of exactly `r` consecutive units.
    pub fn equal(n: usize, r: usize) -> Result<Self> {
        if r == 0 || n % r != 0 {
            return Err(Error::Parameter(format!("cannot split {n} units into groups of {r}")));
        }
        Self::from_sizes(&vec![r; n / r])
    }

    /// Consecutive groups with sizes drawn uniformly from `min..=max`,
    /// redrawing so that no leftover smaller than `min` remains. When the
    /// remainder lies strictly between `max` and `2 min` it cannot be split
    /// within the range, and the final group is smaller than `min`.
    pub fn random_sizes<R: Rng + ?Sized>(n: usize, min: usize, max: usize, rng: &mut R) -> Result<Self> {
        if min == 0 || min > max {
            return Err(Error::Parameter(format!("invalid group size range {min}..={max}")));
        }
        let mut sizes = Vec::new();
        let mut remaining = n;
        while remaining > 0 {
            if remaining < 2 * min && remaining <= max || remaining < min {
                sizes.push(remaining);
                break;
            }
            if remaining > max && remaining < 2 * min {
                sizes.push(max);
                remaining -= max;
                continue;
            }
            let s = rng.random_range(min..=max.min(remaining));
            let rest = remaining - s;
            if rest != 0 && rest < min {
                continue;
            }
            sizes.push(s);
            remaining = rest;
        }
        Self::from_sizes(&sizes)
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, unit: usize) -> usize {
        self.membership[unit]
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Reads `unit,group` rows with a header; group labels may be arbitrary integers.
    pub fn read_csv<R: Read>(reader: R, one_based: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut labels: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        let mut n = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let unit: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parameter(format!("partition row {}: bad unit", row + 1)))?;
            let group: i64 = record
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parameter(format!("partition row {}: bad group", row + 1)))?;
            if one_based && unit == 0 {
                return Err(Error::Parameter(format!("row {}: unit 0 in a 1-based partition", row + 1)));
            }
            let unit = unit - usize::from(one_based);
            n = n.max(unit + 1);
            labels.entry(group).or_default().push(unit);
        }
        Self::new(n, labels.into_values().collect())
    }

    /// Writes `unit,group` rows (0-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["unit", "group"])?;
        for (u, g) in self.membership.iter().enumerate() {
            wtr.write_record([u.to_string(), g.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<partition>", e))?;
        Ok(())
    }
}

/// Graph in which units are adjacent iff they share a group.
pub fn partition_to_graph(partition: &GroupPartition) -> InterferenceGraph {
    let mut adjacency = vec![Vec::new(); partition.n()];
    for group in partition.groups() {
        for &u in group {
            adjacency[u] = group.iter().copied().filter(|&v| v != u).collect();
        }
    }
    InterferenceGraph { adjacency }
}

/// Coarse design family, enough to decide which assignments are dependent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignFamily {
    Bernoulli,
    TwoStage,
    ClusterRandomized,
}

/// Dependency-degree diagnostics for one `(graph, design)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeReport {
    pub delta_n: usize,
    pub c_n: usize,
    pub r_n: usize,
    pub d_n: usize,
    pub rate_ratios: BTreeMap<String, f64>,
}

/// Maximum number of other units whose exposures may depend on a unit's exposure.
///
/// Two units are dependent when some member of one closed neighborhood shares an
/// assignment block with some member of the other; blocks are single units for
/// Bernoulli designs and the supplied groups otherwise. This is an upper bound on
/// probabilistic dependence for arbitrary exposure maps.
pub fn dependency_degree(
    graph: &InterferenceGraph,
    family: DesignFamily,
    clusters: Option<&GroupPartition>,
) -> Result<DegreeReport> {
    let n = graph.n();
    let block_of: Vec<usize> = match (family, clusters) {
        (DesignFamily::Bernoulli, _) => (0..n).collect(),
        (_, Some(p)) if p.n() == n => (0..n).map(|u| p.group_of(u)).collect(),
        (_, Some(p)) => {
            return Err(Error::Parameter(format!("partition covers {} units, graph has {n}", p.n())))
        }
        (_, None) => return Err(Error::Parameter(format!("{family:?} design requires a partition"))),
    };
    let d_n = dependency_lists(graph, &block_of).iter().map(Vec::len).max().unwrap_or(0);
    let delta_n = graph.max_degree();
    let c_n = match family {
        DesignFamily::ClusterRandomized => clusters.map_or(1, GroupPartition::max_group_size),
        _ => 1,
    };
    let r_n = clusters.map_or(1, GroupPartition::max_group_size);
    let nf = n as f64;
    let mut rate_ratios = BTreeMap::new();
    rate_ratios.insert("d_n/n^(1/4)".to_string(), d_n as f64 / nf.powf(0.25));
    rate_ratios.insert("delta_n/n^(1/8)".to_string(), delta_n as f64 / nf.powf(0.125));
    rate_ratios.insert(
        "(delta_n^2+delta_n*c_n)/n^(1/4)".to_string(),
        ((delta_n * delta_n + delta_n * c_n) as f64) / nf.powf(0.25),
    );
    rate_ratios.insert("r_n/n^(1/4)".to_string(), r_n as f64 / nf.powf(0.25));
    Ok(DegreeReport {
        delta_n,
        c_n,
        r_n,
        d_n,
        rate_ratios,
    })
}

/// For each unit, the sorted list of other units it is dependent on.
pub fn dependency_lists(graph: &InterferenceGraph, block_of: &[usize]) -> Vec<Vec<usize>> {
    let n = graph.n();
    let blocks = block_of.iter().copied().max().map_or(0, |m| m + 1);
    // units whose closed neighborhood touches each block
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); blocks];
    let mut unit_blocks: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut bs: Vec<usize> = graph.closed_neighborhood(i).iter().map(|&a| block_of[a]).collect();
        bs.sort_unstable();
        bs.dedup();
        for &b in &bs {
            touching[b].push(i);
        }
        unit_blocks.push(bs);
    }
    let mut mark = vec![usize::MAX; n];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut deps = Vec::new();
        for &b in &unit_blocks[i] {
            for &j in &touching[b] {
                if j != i && mark[j] != i {
                    mark[j] = i;
                    deps.push(j);
                }
            }
        }
        deps.sort_unstable();
        out.push(deps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn path(n: usize) -> InterferenceGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        InterferenceGraph::from_edges(n, &edges).unwrap()
    }

    fn brute_force_dn(g: &InterferenceGraph) -> usize {
        let n = g.n();
        (0..n)
            .map(|i| {
                let ci = g.closed_neighborhood(i);
                (0..n)
                    .filter(|&j| j != i)
                    .filter(|&j| g.closed_neighborhood(j).iter().any(|a| ci.contains(a)))
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn erdos_renyi_extremes() {
        let mut rng = stream(1, Domain::Population, 0);
        let g = gen_erdos_renyi(5, 0.0, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = gen_erdos_renyi(4, 1.0, &mut rng).unwrap();
        assert!((0..4).all(|i| g.degree(i) == 3));
        assert!(gen_erdos_renyi(4, 1.5, &mut rng).is_err());
        assert!(gen_erdos_renyi(4, -0.1, &mut rng).is_err());
    }

    #[test]
    fn erdos_renyi_mean_edge_count() {
        let reps = 10_000;
        let counts: Vec<f64> = (0..reps)
            .map(|s| gen_erdos_renyi(50, 0.1, &mut stream(s, Domain::Population, 0)).unwrap().edge_count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let sd = (1225.0 * 0.1 * 0.9f64).sqrt();
        assert!((mean - 122.5).abs() < 3.0 * sd / (reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn erdos_renyi_is_reproducible() {
        let a = gen_erdos_renyi(200, 0.05, &mut stream(9, Domain::Population, 1)).unwrap();
        let b = gen_erdos_renyi(200, 0.05, &mut stream(9, Domain::Population, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_graph_cliques() {
        let p = GroupPartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let g = partition_to_graph(&p);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert!(g.neighbors(2).is_empty());
        let g = partition_to_graph(&GroupPartition::new(3, vec![vec![0, 1, 2]]).unwrap());
        assert!((0..3).all(|i| g.degree(i) == 2));
        let p = GroupPartition::equal(640, 4).unwrap();
        let g = partition_to_graph(&p);
        assert!((0..640).all(|i| g.degree(i) == 3));
        let rep = dependency_degree(&g, DesignFamily::Bernoulli, None).unwrap();
        assert_eq!(rep.d_n, 3);
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(GroupPartition::new(3, vec![vec![0, 1]]).is_err());
        assert!(GroupPartition::new(2, vec![vec![0, 1], vec![]]).is_err());
    }

    #[test]
    fn random_sizes_respect_bounds() {
        for s in 0..200 {
            let p = GroupPartition::random_sizes(101, 2, 4, &mut stream(s, Domain::Population, 0)).unwrap();
            assert_eq!(p.n(), 101);
            assert!(p.groups().iter().all(|g| (2..=4).contains(&g.len())));
        }
    }

    #[test]
    fn dependency_degree_examples() {
        let rep = dependency_degree(&InterferenceGraph::empty(5), DesignFamily::Bernoulli, None).unwrap();
        assert_eq!(rep.d_n, 0);
        let g = path(5);
        let rep = dependency_degree(&g, DesignFamily::Bernoulli, None).unwrap();
        assert_eq!(rep.d_n, brute_force_dn(&g));
        assert_eq!(rep.d_n, 4);
        assert_eq!(rep.delta_n, 2);
        assert!(dependency_degree(&g, DesignFamily::ClusterRandomized, None).is_err());
    }

    #[test]
    fn cluster_dependence_links_neighbors_of_cluster_mates() {
        // 0-1, 2-3; cluster {1,2}: units 0 and 3 become dependent.
        let g = InterferenceGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let p = GroupPartition::new(4, vec![vec![0], vec![1, 2], vec![3]]).unwrap();
        let bern = dependency_degree(&g, DesignFamily::Bernoulli, None).unwrap();
        let clus = dependency_degree(&g, DesignFamily::ClusterRandomized, Some(&p)).unwrap();
        assert_eq!(bern.d_n, 1);
        assert_eq!(clus.d_n, 3);
        assert_eq!(clus.c_n, 2);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = path(4);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = InterferenceGraph::read_edge_list(buf.as_slice(), Some(4), false).unwrap();
        assert_eq!(g, back);
        let headerless = "1,2\n2,3\n";
        let one = InterferenceGraph::read_edge_list(headerless.as_bytes(), None, true).unwrap();
        assert_eq!(one.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn partition_round_trip() {
        let p = GroupPartition::from_sizes(&[2, 3, 1]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(GroupPartition::read_csv(buf.as_slice(), false).unwrap(), p);
    }
}
