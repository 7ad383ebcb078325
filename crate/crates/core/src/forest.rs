//! Brute-force spanning-forest oracle for `Φ = (L + K)⁻¹K`.
//!
//! Every undirected edge `(i, j)` becomes two arcs, `i → j` with weight
//! `w_ij / k_i` and `j → i` with weight `w_ij / k_j`, so the digraph's
//! out-degree Laplacian is `K⁻¹L`. By the matrix-forest theorem
//! `(I + K⁻¹L)⁻¹ = Φ` has entries `ε(Υ_ij) / ε(Υ)`, where `Υ` is the set of
//! spanning forests in which every node has at most one outgoing arc and no
//! cycle is closed, `ε` sums products of arc weights, and `Υ_ij` keeps the
//! forests whose tree containing `i` is rooted at `j`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, Stubbornness};

pub const MAX_NODES: usize = 12;
pub const MAX_CONFIGURATIONS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct MappedDigraph {
    n: usize,
    out: Vec<Vec<Arc>>,
}

impl MappedDigraph {
    pub fn new(graph: &Graph, k: &Stubbornness) -> Result<Self> {
        k.check_for(graph)?;
        let kv = k.values();
        let out = (0..graph.n())
            .map(|i| graph.neighbors(i).map(|(j, w)| Arc { from: i, to: j, weight: w / kv[i] }).collect())
            .collect();
        Ok(Self { n: graph.n(), out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arcs(&self) -> impl Iterator<Item = &Arc> {
        self.out.iter().flatten()
    }

    pub fn arc_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Out-degree Laplacian `D_out - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for arc in self.arcs() {
            l[(arc.from, arc.from)] += arc.weight;
            l[(arc.from, arc.to)] -= arc.weight;
        }
        l
    }

    /// Number of per-node choices the enumeration walks through.
    pub fn configurations(&self) -> f64 {
        self.out.iter().map(|arcs| (arcs.len() + 1) as f64).product()
    }
}

#[derive(Debug, Clone)]
pub struct ForestEnumeration {
    /// `ε(Υ)`, including the empty forest's weight of 1.
    pub total: f64,
    /// `ε(Υ_ij)`.
    pub pair_weights: DMatrix<f64>,
    pub forest_count: u64,
}

struct Walk<'a> {
    digraph: &'a MappedDigraph,
    parent: Vec<Option<usize>>,
    total: f64,
    pairs: DMatrix<f64>,
    count: u64,
}

impl Walk<'_> {
    fn root(&self, mut v: usize) -> usize {
        while let Some(p) = self.parent[v] {
            v = p;
        }
        v
    }

    /// Following parents from `to` reaches `from` iff the arc closes a cycle.
    fn closes_cycle(&self, from: usize, to: usize) -> bool {
        self.root(to) == from
    }

    fn visit(&mut self, node: usize, weight: f64) {
        if node == self.digraph.n {
            self.total += weight;
            self.count += 1;
            for i in 0..self.digraph.n {
                let r = self.root(i);
                self.pairs[(i, r)] += weight;
            }
            return;
        }
        self.visit(node + 1, weight);
        for idx in 0..self.digraph.out[node].len() {
            let arc = self.digraph.out[node][idx];
            if self.closes_cycle(node, arc.to) {
                continue;
            }
            self.parent[node] = Some(arc.to);
            self.visit(node + 1, weight * arc.weight);
            self.parent[node] = None;
        }
    }
}

pub fn enumerate_forests(digraph: &MappedDigraph) -> Result<ForestEnumeration> {
    if digraph.n > MAX_NODES {
        return Err(Error::EnumerationGuard(format!("n = {} exceeds {MAX_NODES}", digraph.n)));
    }
    let configurations = digraph.configurations();
    if configurations > MAX_CONFIGURATIONS {
        return Err(Error::EnumerationGuard(format!("{configurations:e} arc choices exceed {MAX_CONFIGURATIONS:e}")));
    }
    let mut walk = Walk {
        digraph,
        parent: vec![None; digraph.n],
        total: 0.0,
        pairs: DMatrix::zeros(digraph.n, digraph.n),
        count: 0,
    };
    walk.visit(0, 1.0);
    Ok(ForestEnumeration { total: walk.total, pair_weights: walk.pairs, forest_count: walk.count })
}

/// `Φ_ij = ε(Υ_ij) / ε(Υ)`.
pub fn forest_matrix(digraph: &MappedDigraph) -> Result<DMatrix<f64>> {
    let e = enumerate_forests(digraph)?;
    Ok(e.pair_weights / e.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use crate::graph::{build_graph, GraphBuilder};
    use proptest::prelude::*;

    fn k(values: &[f64]) -> Stubbornness {
        Stubbornness::new(values.to_vec()).unwrap()
    }

    #[test]
    fn two_node_instance() {
        let g = build_graph([(0, 1, 1.0)]).unwrap().graph;
        let d = MappedDigraph::new(&g, &k(&[2.0, 1.0])).unwrap();
        let weights: Vec<_> = d.arcs().map(|a| (a.from, a.to, a.weight)).collect();
        assert_eq!(weights, vec![(0, 1, 0.5), (1, 0, 1.0)]);

        let e = enumerate_forests(&d).unwrap();
        assert_eq!(e.forest_count, 3);
        assert_eq!(e.total, 2.5);
        assert_eq!(e.pair_weights[(0, 0)], 2.0);
        assert_eq!(e.pair_weights[(0, 1)], 0.5);
        let det = (DMatrix::identity(2, 2) + d.laplacian()).determinant();
        assert!((det - 2.5).abs() < 1e-15);

        let phi = forest_matrix(&d).unwrap();
        let expected = [[0.8, 0.2], [0.4, 0.6]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((phi[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_node_and_edgeless() {
        let mut b = GraphBuilder::new();
        b.add_node(0);
        let d = MappedDigraph::new(&b.build().unwrap().graph, &k(&[3.0])).unwrap();
        let e = enumerate_forests(&d).unwrap();
        assert_eq!((e.total, e.forest_count), (1.0, 1));
        assert_eq!(forest_matrix(&d).unwrap()[(0, 0)], 1.0);

        let mut b = GraphBuilder::new();
        b.add_node(0).add_node(1).add_node(2);
        let d = MappedDigraph::new(&b.build().unwrap().graph, &k(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(forest_matrix(&d).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn mapped_laplacian_is_scaled_laplacian() {
        let g = build_graph([(0, 1, 1.0), (1, 2, 2.0), (0, 2, 0.5), (2, 3, 1.5)]).unwrap().graph;
        let kk = k(&[1.0, 2.0, 0.5, 3.0]);
        let d = MappedDigraph::new(&g, &kk).unwrap();
        assert_eq!(d.arc_count(), 2 * g.m());
        let l = dense::laplacian(&g);
        let scaled = DMatrix::from_fn(4, 4, |i, j| l[(i, j)] / kk.values()[i]);
        assert!((d.laplacian() - scaled).abs().max() < 1e-12);
    }

    #[test]
    fn size_guards() {
        let g = build_graph((0..13u64).map(|i| (i, i + 1, 1.0))).unwrap().graph;
        let d = MappedDigraph::new(&g, &Stubbornness::uniform(14, 1.0).unwrap()).unwrap();
        assert!(matches!(enumerate_forests(&d).unwrap_err(), Error::EnumerationGuard(_)));

        let complete: Vec<_> = (0..12u64).flat_map(|i| (i + 1..12).map(move |j| (i, j, 1.0))).collect();
        let g = build_graph(complete).unwrap().graph;
        let d = MappedDigraph::new(&g, &Stubbornness::uniform(12, 1.0).unwrap()).unwrap();
        let err = enumerate_forests(&d).unwrap_err();
        assert!(matches!(err, Error::EnumerationGuard(_)));
        assert_eq!(err.exit_code(), 3);
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<f64>)> {
        (2usize..=6).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let count = pairs.len();
            (
                Just(n),
                proptest::sample::subsequence(pairs, 1..=count)
                    .prop_flat_map(|sel| {
                        let len = sel.len();
                        (Just(sel), proptest::collection::vec(0.1f64..3.0, len))
                    })
                    .prop_map(|(sel, ws)| sel.into_iter().zip(ws).map(|((i, j), w)| (i, j, w)).collect()),
                proptest::collection::vec(0.1f64..4.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn forest_matrix_is_the_fundamental_matrix((n, edges, kv) in instance()) {
            let mut b = GraphBuilder::new();
            for i in 0..n as u64 {
                b.add_node(i);
            }
            for &(i, j, w) in &edges {
                b.add_edge(i as u64, j as u64, w).unwrap();
            }
            let g = b.build().unwrap().graph;
            let kk = Stubbornness::new(kv).unwrap();
            let d = MappedDigraph::new(&g, &kk).unwrap();
            let e = enumerate_forests(&d).unwrap();
            let shifted = DMatrix::identity(n, n) + d.laplacian();
            let det = shifted.clone().determinant();
            prop_assert!((e.total - det).abs() <= 1e-9 * det);
            let inverse = shifted.try_inverse().unwrap();
            let phi = e.pair_weights / e.total;
            prop_assert!((&phi - inverse).abs().max() <= 1e-9);
            for i in 0..n {
                prop_assert!((phi.row(i).sum() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
