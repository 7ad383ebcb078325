//! Seeded generators for innate opinions, stubbornness and synthetic graphs.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with the caller's seed,
//! so a seed fully determines the output.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Pareto, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, NodeId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpinionDistribution {
    Uniform,
    PowerLaw,
    Normal,
    Exponential,
}

impl OpinionDistribution {
    pub const ALL: [OpinionDistribution; 4] = [
        OpinionDistribution::Uniform,
        OpinionDistribution::PowerLaw,
        OpinionDistribution::Normal,
        OpinionDistribution::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpinionDistribution::Uniform => "uniform",
            OpinionDistribution::PowerLaw => "powerlaw",
            OpinionDistribution::Normal => "normal",
            OpinionDistribution::Exponential => "exponential",
        }
    }
}

impl fmt::Display for OpinionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpinionDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(OpinionDistribution::Uniform),
            "powerlaw" | "power-law" | "power_law" => Ok(OpinionDistribution::PowerLaw),
            "normal" | "gaussian" => Ok(OpinionDistribution::Normal),
            "exponential" | "exp" => Ok(OpinionDistribution::Exponential),
            other => Err(Error::InvalidParameter(format!("unknown distribution {other:?}"))),
        }
    }
}

/// Shape parameters for the opinion distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    /// Standard deviation of the normal draw, clamped to [-1, 1] afterwards.
    pub normal_sigma: f64,
    pub exponential_rate: f64,
    /// Density exponent `α` of the power law `p(x) ∝ x^{-α}`, `x ≥ 1`.
    pub powerlaw_exponent: f64,
}

impl Default for DistributionParams {
    fn default() -> Self {
        Self { normal_sigma: 1.0 / 3.0, exponential_rate: 1.0, powerlaw_exponent: 2.5 }
    }
}

/// Min-max rescale into [0, 1], then map affinely onto [-1, 1].
/// A constant sample maps to all zeros.
fn rescale_to_unit_interval(raw: &mut [f64]) {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in raw.iter_mut() {
        *v = if span > 0.0 { (2.0 * (*v - lo) / span - 1.0).clamp(-1.0, 1.0) } else { 0.0 };
    }
}

pub fn generate_opinions(n: usize, dist: OpinionDistribution, seed: u64) -> Result<Vec<f64>> {
    generate_opinions_with(n, dist, seed, &DistributionParams::default())
}

pub fn generate_opinions_with(
    n: usize,
    dist: OpinionDistribution,
    seed: u64,
    params: &DistributionParams,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one node".into()));
    }
    let mut rng = rng(seed);
    let bad = |what: &str| Error::InvalidParameter(format!("invalid {what} parameter"));
    let values = match dist {
        OpinionDistribution::Uniform => {
            let u = Uniform::new_inclusive(-1.0, 1.0).map_err(|_| bad("uniform"))?;
            (0..n).map(|_| u.sample(&mut rng)).collect()
        }
        OpinionDistribution::Normal => {
            let d = Normal::new(0.0, params.normal_sigma).map_err(|_| bad("normal"))?;
            (0..n).map(|_| d.sample(&mut rng).clamp(-1.0, 1.0)).collect()
        }
        OpinionDistribution::Exponential => {
            let d = Exp::new(params.exponential_rate).map_err(|_| bad("exponential"))?;
            let mut raw: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            rescale_to_unit_interval(&mut raw);
            raw
        }
        OpinionDistribution::PowerLaw => {
            let d = Pareto::new(1.0, params.powerlaw_exponent - 1.0).map_err(|_| bad("power-law"))?;
            let mut raw: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            rescale_to_unit_interval(&mut raw);
            raw
        }
    };
    Ok(values)
}

/// Stubbornness drawn uniformly from `[lo, hi]`.
pub fn random_stubbornness(n: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("stubbornness range [{lo}, {hi}] must be positive")));
    }
    let u = Uniform::new_inclusive(lo, hi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng(seed);
    Ok((0..n).map(|_| u.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    /// Random `d`-regular graph.
    Regular,
    /// Preferential attachment with `d / 2` links per arriving node.
    Preferential,
}

impl FromStr for GraphFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regular" => Ok(GraphFamily::Regular),
            "preferential" | "pa" | "ba" => Ok(GraphFamily::Preferential),
            other => Err(Error::InvalidParameter(format!("unknown graph family {other:?}"))),
        }
    }
}

pub type EdgeTriples = Vec<(NodeId, NodeId, f64)>;

/// Configuration-model `d`-regular graph on `n` nodes with unit weights.
/// Self-loops and repeated pairs from the random matching are discarded, so
/// a few nodes may end up with degree slightly below `d`.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<EdgeTriples> {
    if d == 0 || d >= n || !(n * d).is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("no {d}-regular graph on {n} nodes")));
    }
    let mut rng = rng(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    stubs.shuffle(&mut rng);
    let mut seen = HashSet::with_capacity(n * d / 2);
    let mut edges = Vec::with_capacity(n * d / 2);
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        if u != v && seen.insert((u, v)) {
            edges.push((u as NodeId, v as NodeId, 1.0));
        }
    }
    Ok(edges)
}

/// Barabási-Albert graph: a clique on `links + 1` seed nodes, then every new
/// node attaches to `links` distinct nodes chosen proportionally to degree.
pub fn preferential_attachment(n: usize, links: usize, seed: u64) -> Result<EdgeTriples> {
    if links == 0 || links >= n {
        return Err(Error::InvalidParameter(format!("need 0 < links < n, got {links} and {n}")));
    }
    let mut rng = rng(seed);
    let mut edges = Vec::with_capacity(n * links);
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * n * links);
    for u in 0..=links {
        for v in u + 1..=links {
            edges.push((u as NodeId, v as NodeId, 1.0));
            endpoints.extend([u, v]);
        }
    }
    let mut chosen = Vec::with_capacity(links);
    for new in links + 1..n {
        chosen.clear();
        while chosen.len() < links {
            let target = endpoints[rng.random_range(0..endpoints.len())];
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            edges.push((t as NodeId, new as NodeId, 1.0));
            endpoints.extend([t, new]);
        }
    }
    Ok(edges)
}

pub fn synthetic_graph(family: GraphFamily, n: usize, degree: usize, seed: u64) -> Result<EdgeTriples> {
    match family {
        GraphFamily::Regular => random_regular(n, degree, seed),
        GraphFamily::Preferential => preferential_attachment(n, (degree / 2).max(1), seed),
    }
}

/// Connected random graph on `n` nodes: a random spanning tree plus
/// `extra` random edges, weights uniform in `[w_lo, w_hi]`. Used by the
/// verification sweeps.
pub fn random_connected(n: usize, extra: usize, w_lo: f64, w_hi: f64, seed: u64) -> Result<GraphBuilder> {
    if n == 0 || !(w_lo > 0.0 && w_hi >= w_lo) {
        return Err(Error::InvalidParameter("need n ≥ 1 and 0 < w_lo ≤ w_hi".into()));
    }
    let mut rng = rng(seed);
    let weight = Uniform::new_inclusive(w_lo, w_hi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut builder = GraphBuilder::new();
    for i in 0..n as NodeId {
        builder.add_node(i);
    }
    let mut seen = HashSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        seen.insert((u, v));
        builder.add_edge(u as NodeId, v as NodeId, weight.sample(&mut rng))?;
    }
    let max_edges = n * (n - 1) / 2;
    let target = (n - 1 + extra).min(max_edges);
    while seen.len() < target {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            builder.add_edge(key.0 as NodeId, key.1 as NodeId, weight.sample(&mut rng))?;
        }
    }
    Ok(builder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    #[test]
    fn opinions_stay_in_range_and_are_deterministic() {
        for dist in OpinionDistribution::ALL {
            let a = generate_opinions(5000, dist, 7).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)), "{dist}");
            assert_eq!(a, generate_opinions(5000, dist, 7).unwrap());
            assert_ne!(a, generate_opinions(5000, dist, 8).unwrap());
        }
    }

    #[test]
    fn uniform_mean_tends_to_zero() {
        let s = generate_opinions(200_000, OpinionDistribution::Uniform, 1).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn powerlaw_is_right_skewed() {
        let s = generate_opinions(100_000, OpinionDistribution::PowerLaw, 3).unwrap();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let m2 = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = s.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        assert!(m3 / m2.powf(1.5) > 0.0);
    }

    #[test]
    fn distribution_names() {
        for dist in OpinionDistribution::ALL {
            assert_eq!(dist.name().parse::<OpinionDistribution>().unwrap(), dist);
        }
        assert!("cauchy".parse::<OpinionDistribution>().is_err());
        assert_eq!(generate_opinions(1, OpinionDistribution::Exponential, 0).unwrap(), vec![0.0]);
        assert!(generate_opinions(0, OpinionDistribution::Uniform, 0).is_err());
    }

    #[test]
    fn regular_graph_degrees() {
        let edges = random_regular(2000, 10, 5).unwrap();
        let g = build_graph(edges).unwrap().graph;
        assert_eq!(g.n(), 2000);
        assert!(g.m() <= 10_000 && g.m() >= 9_900, "{}", g.m());
        assert!(g.degrees().iter().all(|&d| d <= 10.0));
        assert!(random_regular(5, 3, 0).is_err());
    }

    #[test]
    fn preferential_attachment_edges() {
        let edges = preferential_attachment(500, 3, 2).unwrap();
        let g = build_graph(edges.clone()).unwrap().graph;
        assert_eq!(g.n(), 500);
        assert_eq!(g.m(), edges.len());
        assert_eq!(edges.len(), 6 + 3 * (500 - 4));
    }

    #[test]
    fn connected_generator() {
        let g = random_connected(30, 20, 0.5, 2.0, 9).unwrap().build().unwrap().graph;
        assert_eq!((g.n(), g.m()), (30, 49));
        assert!(g.edges().iter().all(|e| (0.5..=2.0).contains(&e.weight)));
        let complete = random_connected(4, 100, 1.0, 1.0, 0).unwrap().build().unwrap().graph;
        assert_eq!(complete.m(), 6);
    }
}
