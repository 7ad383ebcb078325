//! Weighted undirected sparse graphs and the matrix views built on them.
//!
//! A [`Graph`] is immutable once built. External node ids are remapped to
//! dense indices `0..n` in ascending id order; the original ids stay
//! available through [`Graph::ids`] so reports can map results back.
//!
//! The Laplacian `L = D - A` is never materialized. [`Graph::laplacian_apply`]
//! works directly on the compressed adjacency rows, and [`IncidenceView`]
//! exposes the factorization `L = BᵀWB` over the canonical edge list.

use std::collections::HashMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type NodeId = u64;

/// Rows at or above this count are applied in parallel.
const PARALLEL_ROWS: usize = 1 << 15;

/// A stored undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Graph {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    w_min: f64,
    w_max: f64,
}

/// What [`GraphBuilder::build`] did besides producing the graph.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    declared: Vec<NodeId>,
    raw: Vec<(NodeId, NodeId, f64)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a node that may have no incident edges.
    pub fn add_node(&mut self, id: NodeId) -> &mut Self {
        self.declared.push(id);
        self
    }

    /// Adds an edge. `line` is only used to label the error for a bad weight.
    pub fn add_edge_at(&mut self, u: NodeId, v: NodeId, weight: f64, line: usize) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight { line, weight });
        }
        self.raw.push((u, v, weight));
        Ok(())
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, weight: f64) -> Result<()> {
        let line = self.raw.len() + 1;
        self.add_edge_at(u, v, weight, line)
    }

    pub fn build(self) -> Result<BuildOutcome> {
        if self.raw.is_empty() && self.declared.is_empty() {
            return Err(Error::EmptyInput("no edges and no declared nodes".into()));
        }

        let mut ids: Vec<NodeId> =
            self.declared.iter().copied().chain(self.raw.iter().flat_map(|&(u, v, _)| [u, v])).collect();
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut self_loops_dropped = 0;
        let mut canon: Vec<(usize, usize, f64)> = Vec::with_capacity(self.raw.len());
        for &(a, b, w) in &self.raw {
            let (ia, ib) = (index[&a], index[&b]);
            if ia == ib {
                self_loops_dropped += 1;
                continue;
            }
            canon.push((ia.min(ib), ia.max(ib), w));
        }
        // Stable: parallel edges are summed in input order.
        canon.sort_by_key(|&(u, v, _)| (u, v));
        let mut edges: Vec<Edge> = Vec::with_capacity(canon.len());
        let mut duplicates_merged = 0;
        for (u, v, w) in canon {
            match edges.last_mut() {
                Some(last) if last.u == u && last.v == v => {
                    last.weight += w;
                    duplicates_merged += 1;
                }
                _ => edges.push(Edge { u, v, weight: w }),
            }
        }

        Ok(BuildOutcome { graph: Graph::from_canonical(ids, index, edges), self_loops_dropped, duplicates_merged })
    }
}

/// Builds a graph from `(id, id, weight)` triples.
pub fn build_graph<I>(triples: I) -> Result<BuildOutcome>
where
    I: IntoIterator<Item = (NodeId, NodeId, f64)>,
{
    let mut builder = GraphBuilder::new();
    for (u, v, w) in triples {
        builder.add_edge(u, v, w)?;
    }
    builder.build()
}

impl Graph {
    fn from_canonical(ids: Vec<NodeId>, index: HashMap<NodeId, usize>, edges: Vec<Edge>) -> Self {
        let n = ids.len();
        let mut counts = vec![0usize; n + 1];
        for e in &edges {
            counts[e.u + 1] += 1;
            counts[e.v + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        // Edges are sorted by (u, v), so filling in edge order leaves every
        // row sorted by neighbor index.
        for e in &edges {
            targets[cursor[e.u]] = e.v;
            weights[cursor[e.u]] = e.weight;
            cursor[e.u] += 1;
        }
        for e in &edges {
            targets[cursor[e.v]] = e.u;
            weights[cursor[e.v]] = e.weight;
            cursor[e.v] += 1;
        }
        for i in 0..n {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let mut row: Vec<(usize, f64)> =
                targets[lo..hi].iter().copied().zip(weights[lo..hi].iter().copied()).collect();
            row.sort_by_key(|&(j, _)| j);
            for (k, (j, w)) in row.into_iter().enumerate() {
                targets[lo + k] = j;
                weights[lo + k] = w;
            }
        }
        let degrees = (0..n).map(|i| weights[offsets[i]..offsets[i + 1]].iter().fold(0.0, |acc, w| acc + w)).collect();
        let (w_min, w_max) = if edges.is_empty() {
            (0.0, 0.0)
        } else {
            edges.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e.weight), hi.max(e.weight)))
        };
        Graph { ids, index, edges, offsets, targets, weights, degrees, w_min, w_max }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// External ids in index order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        self.targets[lo..hi].iter().copied().zip(self.weights[lo..hi].iter().copied())
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Weighted degree `d_i = Σ_j w_ij`.
    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest edge weight, 0 for an edgeless graph.
    pub fn w_min(&self) -> f64 {
        self.w_min
    }

    /// Largest edge weight, 0 for an edgeless graph.
    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// Row `i` of the adjacency matrix dotted with `x`, in stored neighbor order.
    #[inline]
    pub(crate) fn adjacency_row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let mut acc = 0.0;
        for p in lo..hi {
            acc += self.weights[p] * x[self.targets[p]];
        }
        acc
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), actual: len });
        }
        Ok(())
    }

    /// `Lx = Dx - Ax`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut out = vec![0.0; self.n()];
        self.laplacian_apply_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`Graph::laplacian_apply`] writing into `out`.
    pub fn laplacian_apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.rowwise_into(out, |i| self.degrees[i] * x[i] - self.adjacency_row_dot(i, x));
    }

    /// Fills `out[i] = f(i)`, in parallel for large graphs. Every row is an
    /// independent fixed-order computation, so the result does not depend on
    /// the number of worker threads.
    pub(crate) fn rowwise_into<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync,
    {
        if out.len() >= PARALLEL_ROWS {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f(i);
            }
        }
    }

    pub fn incidence(&self) -> IncidenceView<'_> {
        IncidenceView { graph: self }
    }

    /// Short content hash over the node ids and the canonical edge list.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        for id in &self.ids {
            hasher.update(id.to_le_bytes());
        }
        for e in &self.edges {
            hasher.update((e.u as u64).to_le_bytes());
            hasher.update((e.v as u64).to_le_bytes());
            hasher.update(e.weight.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Signed edge-node incidence `B` (row `e = (u, v)` is `e_u - e_v`) together
/// with the edge-weight diagonal `W`.
#[derive(Debug, Clone, Copy)]
pub struct IncidenceView<'a> {
    graph: &'a Graph,
}

impl IncidenceView<'_> {
    /// `Bx`, one entry per stored edge.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.graph.edges.iter().map(|e| x[e.u] - x[e.v]).collect()
    }

    /// `Bᵀy` for an edge-indexed `y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.graph.n()];
        for (e, &ye) in self.graph.edges.iter().zip(y) {
            out[e.u] += ye;
            out[e.v] -= ye;
        }
        out
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.graph.edges.iter().map(|e| e.weight)
    }

    /// `BᵀWBx`, which equals `Lx`.
    pub fn compose_laplacian(&self, x: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> = self.apply(x).into_iter().zip(self.weights()).map(|(b, w)| w * b).collect();
        self.apply_transpose(&weighted)
    }

    /// `‖W^{1/2}Bx‖² = Σ_{(u,v)∈E} w_uv (x_u - x_v)²`.
    pub fn weighted_norm_sq(&self, x: &[f64]) -> f64 {
        self.graph
            .edges
            .iter()
            .map(|e| {
                let d = x[e.u] - x[e.v];
                e.weight * d * d
            })
            .sum()
    }
}

/// Per-node stubbornness `k_i > 0`, the diagonal of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stubbornness {
    k: Vec<f64>,
    k_min: f64,
    k_max: f64,
}

impl Stubbornness {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::EmptyInput("stubbornness vector".into()));
        }
        if let Some((node, &value)) = k.iter().enumerate().find(|(_, &v)| !(v.is_finite() && v > 0.0)) {
            return Err(Error::InvalidStubbornness { node, value });
        }
        let k_min = k.iter().copied().fold(f64::INFINITY, f64::min);
        let k_max = k.iter().copied().fold(0.0, f64::max);
        Ok(Self { k, k_min, k_max })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.k_min
    }

    pub fn max(&self) -> f64 {
        self.k_max
    }

    /// `1ᵀK1`.
    pub fn total(&self) -> f64 {
        self.k.iter().sum()
    }

    /// Returns a copy with `k_i` replaced.
    pub fn with_value(&self, i: usize, value: f64) -> Result<Self> {
        let mut k = self.k.clone();
        k[i] = value;
        Self::new(k)
    }

    pub(crate) fn check_for(&self, graph: &Graph) -> Result<()> {
        graph.check_len(self.len())
    }
}

/// Brackets for the spectrum of `L + K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    /// `k_min`, from `K ⪯ L + K`.
    pub lower: f64,
    /// `k_max + 2 d_max`, from `λ_max(L) ≤ 2 d_max`.
    pub upper_degree: f64,
    /// `k_max + n w_max`; this is the bound the δ thresholds are written in.
    pub upper_paper: f64,
}

impl SpectralBounds {
    /// The smaller of the two valid upper bounds.
    pub fn upper(&self) -> f64 {
        self.upper_degree.min(self.upper_paper)
    }
}

pub fn eigen_bounds(graph: &Graph, k: &Stubbornness) -> Result<SpectralBounds> {
    k.check_for(graph)?;
    Ok(SpectralBounds {
        lower: k.min(),
        upper_degree: k.max() + 2.0 * graph.max_degree(),
        upper_paper: k.max() + graph.n() as f64 * graph.w_max(),
    })
}
