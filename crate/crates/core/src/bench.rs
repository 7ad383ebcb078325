//! Timing harness on synthetic graphs: exact (dense) versus approximate
//! metrics per size, plus the empirical scaling exponent of the
//! approximate path in the edge count.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::DENSE_CAP;
use crate::dynamics::{center_opinions, CenteringRule};
use crate::error::{Error, Result};
use crate::generate::{self, GraphFamily, OpinionDistribution};
use crate::graph::{build_graph, Stubbornness};
use crate::metrics::{self, ExactOptions, MetricsReport};
use crate::verify::loglog_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Target edge counts; the node count is `2m / degree`.
    pub sizes: Vec<usize>,
    pub family: GraphFamily,
    pub degree: usize,
    pub distribution: OpinionDistribution,
    pub eps: f64,
    pub seed: u64,
    /// Exact mode runs only up to this many nodes.
    pub exact_cap: usize,
    /// Each timing is the minimum over this many runs.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000],
            family: GraphFamily::Regular,
            degree: 10,
            distribution: OpinionDistribution::Uniform,
            eps: 1e-6,
            seed: 0,
            exact_cap: DENSE_CAP,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    /// `None` above the exact cap.
    pub exact_seconds: Option<f64>,
    pub approx_seconds: f64,
    pub approx_iterations: usize,
    pub certified: bool,
    /// Worst relative error of the four estimates against exact, when exact ran.
    pub max_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Log-log slope of approx time against `m`; `None` with fewer than two sizes.
    pub approx_slope: Option<f64>,
}

fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let value = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(value);
    }
    Ok((out.expect("at least one repeat"), best))
}

fn worst_relative(a: &MetricsReport, b: &MetricsReport) -> f64 {
    [
        (a.conflict, b.conflict),
        (a.disagreement, b.disagreement),
        (a.polarization, b.polarization),
        (a.pd_index, b.pd_index),
    ]
    .into_iter()
    .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / y.abs() })
    .fold(0.0, f64::max)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchTable> {
    if cfg.sizes.is_empty() || cfg.degree < 2 {
        return Err(Error::InvalidParameter("need at least one size and degree ≥ 2".into()));
    }
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for (j, &m_target) in cfg.sizes.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(j as u64 * 1000);
        let n = (2 * m_target / cfg.degree).max(cfg.degree + 1);
        let n = if cfg.family == GraphFamily::Regular && (n * cfg.degree) % 2 == 1 { n + 1 } else { n };
        let graph = build_graph(generate::synthetic_graph(cfg.family, n, cfg.degree, seed)?)?.graph;
        let k = Stubbornness::new(generate::random_stubbornness(graph.n(), 0.5, 2.0, seed + 1)?)?;
        let s = generate::generate_opinions(graph.n(), cfg.distribution, seed + 2)?;

        let (approx, approx_seconds) = timed(cfg.repeats, || metrics::approxim(&graph, &k, &s, cfg.eps))?;
        let (exact_seconds, max_relative_error) = if graph.n() <= cfg.exact_cap {
            // Compare on the centered opinions approx actually used.
            let centered = center_opinions(&s, &k, CenteringRule::Weighted)?;
            let opts = ExactOptions { cap: cfg.exact_cap, solver_fallback: false };
            let (exact, secs) = timed(1, || metrics::metrics_exact(&graph, &k, &centered, opts))?;
            (Some(secs), Some(worst_relative(&approx, &exact)))
        } else {
            (None, None)
        };
        rows.push(BenchRow {
            n: graph.n(),
            m: graph.m(),
            exact_seconds,
            approx_seconds,
            approx_iterations: approx.solver_iterations.unwrap_or(0),
            certified: approx.certified,
            max_relative_error,
        });
    }
    let approx_slope = (rows.len() >= 2)
        .then(|| loglog_slope(&rows.iter().map(|r| (r.m as f64, r.approx_seconds)).collect::<Vec<_>>()));
    Ok(BenchTable { config: cfg.clone(), rows, approx_slope })
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>9} {:>9} {:>11} {:>11} {:>6} {:>9} {:>10}",
            "n", "m", "exact (s)", "approx (s)", "iters", "certified", "rel. err"
        )?;
        for r in &self.rows {
            let exact = r.exact_seconds.map_or("-".to_string(), |s| format!("{s:.4}"));
            let err = r.max_relative_error.map_or("-".to_string(), |e| format!("{e:.2e}"));
            writeln!(
                f,
                "{:>9} {:>9} {:>11} {:>11.4} {:>6} {:>9} {:>10}",
                r.n, r.m, exact, r.approx_seconds, r.approx_iterations, r.certified, err
            )?;
        }
        match self.approx_slope {
            Some(s) => write!(f, "approx time vs m: log-log slope {s:.3}"),
            None => write!(f, "approx time vs m: slope needs two sizes"),
        }
    }
}
