//! End-to-end runs behind the command-line subcommands, and the JSON
//! documents they emit. Every document is a single JSON object written on
//! one line.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::DENSE_CAP;
use crate::dynamics::{self, CenteringRule, SimulationOptions};
use crate::error::{Error, Result};
use crate::generate::{self, OpinionDistribution};
use crate::graph::{eigen_bounds, BuildOutcome, Graph, NodeId, SpectralBounds, Stubbornness};
use crate::io;
use crate::metrics::{self, ExactOptions, MetricsReport};

/// Stubbornness seeds are derived from the run seed so that `k` and `s`
/// come from independent streams.
const STUBBORNNESS_STREAM: u64 = 0x6b5f_7374_7562_626e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubbornnessSource {
    File(PathBuf),
    Uniform(f64),
    Random { lo: f64, hi: f64 },
}

impl Default for StubbornnessSource {
    fn default() -> Self {
        StubbornnessSource::Random { lo: 0.5, hi: 2.0 }
    }
}

impl FromStr for StubbornnessSource {
    type Err = Error;

    /// A number means a uniform constant, `random:LO:HI` a seeded uniform
    /// range, anything else a `node k` file.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(c) = s.parse::<f64>() {
            return Ok(StubbornnessSource::Uniform(c));
        }
        if let Some(range) = s.strip_prefix("random:") {
            let parts: Vec<&str> = range.split(':').collect();
            let parse = |t: &str| {
                t.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad stubbornness range {s:?}")))
            };
            return match parts.as_slice() {
                [lo, hi] => Ok(StubbornnessSource::Random { lo: parse(lo)?, hi: parse(hi)? }),
                _ => Err(Error::InvalidParameter(format!("expected random:LO:HI, got {s:?}"))),
            };
        }
        Ok(StubbornnessSource::File(PathBuf::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpinionSource {
    File(PathBuf),
    Generated(OpinionDistribution),
}

impl Default for OpinionSource {
    fn default() -> Self {
        OpinionSource::Generated(OpinionDistribution::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approx,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "approx" => Ok(Mode::Approx),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub graph: PathBuf,
    pub stubbornness: StubbornnessSource,
    pub opinions: OpinionSource,
    pub eps: f64,
    pub mode: Mode,
    pub seed: u64,
    /// `Uniform` reproduces the `1ᵀKs / n` shift instead of the weighted one.
    pub centering: CenteringRule,
    pub dense_cap: usize,
}

impl RunConfig {
    pub fn new(graph: impl Into<PathBuf>) -> Self {
        Self {
            graph: graph.into(),
            stubbornness: StubbornnessSource::default(),
            opinions: OpinionSource::default(),
            eps: 1e-6,
            mode: Mode::Approx,
            seed: 0,
            centering: CenteringRule::Weighted,
            dense_cap: DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub m: usize,
    pub fingerprint: String,
    pub w_min: f64,
    pub w_max: f64,
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

impl GraphSummary {
    pub fn new(outcome: &BuildOutcome) -> Self {
        let g = &outcome.graph;
        Self {
            n: g.n(),
            m: g.m(),
            fingerprint: g.fingerprint(),
            w_min: g.w_min(),
            w_max: g.w_max(),
            self_loops_dropped: outcome.self_loops_dropped,
            duplicates_merged: outcome.duplicates_merged,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub load_seconds: f64,
    pub solve_seconds: f64,
    pub norms_seconds: f64,
    pub total_seconds: f64,
}

/// A loaded problem instance: graph, stubbornness and innate opinions.
#[derive(Debug, Clone)]
pub struct Instance {
    pub outcome: BuildOutcome,
    pub stubbornness: Stubbornness,
    pub opinions: Vec<f64>,
}

impl Instance {
    pub fn graph(&self) -> &Graph {
        &self.outcome.graph
    }
}

pub fn load_stubbornness(graph: &Graph, source: &StubbornnessSource, seed: u64) -> Result<Stubbornness> {
    match source {
        StubbornnessSource::File(path) => io::stubbornness_from_pairs(graph, &io::read_node_values(path)?),
        StubbornnessSource::Uniform(c) => Stubbornness::uniform(graph.n(), *c),
        StubbornnessSource::Random { lo, hi } => {
            Stubbornness::new(generate::random_stubbornness(graph.n(), *lo, *hi, seed ^ STUBBORNNESS_STREAM)?)
        }
    }
}

pub fn load_opinions(graph: &Graph, source: &OpinionSource, seed: u64) -> Result<Vec<f64>> {
    match source {
        OpinionSource::File(path) => io::opinions_from_pairs(graph, &io::read_node_values(path)?),
        OpinionSource::Generated(dist) => generate::generate_opinions(graph.n(), *dist, seed),
    }
}

pub fn load_instance(cfg: &RunConfig) -> Result<Instance> {
    let outcome = io::read_edge_list(&cfg.graph)?;
    let stubbornness = load_stubbornness(&outcome.graph, &cfg.stubbornness, cfg.seed)?;
    let opinions = load_opinions(&outcome.graph, &cfg.opinions, cfg.seed)?;
    Ok(Instance { outcome, stubbornness, opinions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub kind: String,
    pub graph: GraphSummary,
    pub config: RunConfig,
    pub report: MetricsReport,
    pub timings: RunTimings,
    /// External id of every node, in index order.
    pub node_ids: Vec<NodeId>,
}

pub fn run_metrics(cfg: &RunConfig) -> Result<MetricsDocument> {
    let start = Instant::now();
    let instance = load_instance(cfg)?;
    run_metrics_on(cfg, instance, start)
}

/// Same as [`run_metrics`] for an already loaded instance; `start` marks the
/// beginning of loading.
pub fn run_metrics_on(cfg: &RunConfig, instance: Instance, start: Instant) -> Result<MetricsDocument> {
    let load_seconds = start.elapsed().as_secs_f64();
    let graph = instance.graph();
    let k = &instance.stubbornness;
    let report = match cfg.mode {
        Mode::Exact => metrics::metrics_exact(
            graph,
            k,
            &instance.opinions,
            ExactOptions { cap: cfg.dense_cap, solver_fallback: false },
        )?,
        Mode::Approx => metrics::approxim_with(graph, k, &instance.opinions, cfg.eps, cfg.centering)?,
    };
    let timings = RunTimings {
        load_seconds,
        solve_seconds: report.timings.solve_seconds,
        norms_seconds: report.timings.norms_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(MetricsDocument {
        kind: "metrics".into(),
        graph: GraphSummary::new(&instance.outcome),
        config: cfg.clone(),
        report,
        timings,
        node_ids: graph.ids().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub kind: String,
    pub graph: GraphSummary,
    pub config: RunConfig,
    pub eps: f64,
    pub stop_time: usize,
    pub bound: u64,
    pub rho: f64,
    pub rho_upper: f64,
    pub f_norms: Vec<f64>,
    pub e_norms: Vec<f64>,
    pub node_ids: Vec<NodeId>,
    pub expressed: Vec<f64>,
    pub equilibrium: Vec<f64>,
    pub total_seconds: f64,
}

/// Runs the dynamics from `z(0) = s` until `|f(t)| ≤ eps`.
pub fn run_simulate(cfg: &RunConfig, eps: f64) -> Result<SimulationDocument> {
    let start = Instant::now();
    let instance = load_instance(cfg)?;
    let graph = instance.graph();
    let s = &instance.opinions;
    let opts = SimulationOptions { dense_cap: cfg.dense_cap, ..Default::default() };
    let sim = dynamics::simulate_until(graph, &instance.stubbornness, s, s, eps, opts)?;
    Ok(SimulationDocument {
        kind: "simulate".into(),
        graph: GraphSummary::new(&instance.outcome),
        config: cfg.clone(),
        eps,
        stop_time: sim.stop_time(),
        bound: sim.bound,
        rho: sim.spectral.rho,
        rho_upper: sim.spectral.upper(),
        f_norms: sim.trace.f_norms,
        e_norms: sim.trace.e_norms,
        node_ids: graph.ids().to_vec(),
        expressed: sim.state.expressed,
        equilibrium: sim.equilibrium,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub kind: String,
    pub graph: GraphSummary,
    pub config: RunConfig,
    pub rho: f64,
    pub rho_upper: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Largest row sum `d_i / (k_i + d_i)` of `QA`.
    pub max_row_sum: f64,
    pub bounds: SpectralBoundsDoc,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBoundsDoc {
    pub lower: f64,
    pub upper_degree: f64,
    pub upper_paper: f64,
}

impl From<SpectralBounds> for SpectralBoundsDoc {
    fn from(b: SpectralBounds) -> Self {
        Self { lower: b.lower, upper_degree: b.upper_degree, upper_paper: b.upper_paper }
    }
}

pub fn run_spectrum(cfg: &RunConfig, tol: f64) -> Result<SpectrumDocument> {
    let start = Instant::now();
    let outcome = io::read_edge_list(&cfg.graph)?;
    let graph = &outcome.graph;
    let k = load_stubbornness(graph, &cfg.stubbornness, cfg.seed)?;
    let est = dynamics::spectral_radius(graph, &k, tol)?;
    let rows = dynamics::ScalingDiagonal::new(graph, &k)?.scaled_row_sums(graph);
    Ok(SpectrumDocument {
        kind: "spectrum".into(),
        graph: GraphSummary::new(&outcome),
        config: cfg.clone(),
        rho: est.rho,
        rho_upper: est.upper(),
        iterations: est.iterations,
        residual: est.residual,
        converged: est.converged,
        max_row_sum: rows.into_iter().fold(0.0, f64::max),
        bounds: eigen_bounds(graph, &k)?.into(),
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, body: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("stubborn-run-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn source_parsing() {
        assert_eq!("2.5".parse::<StubbornnessSource>().unwrap(), StubbornnessSource::Uniform(2.5));
        assert_eq!(
            "random:0.5:3".parse::<StubbornnessSource>().unwrap(),
            StubbornnessSource::Random { lo: 0.5, hi: 3.0 }
        );
        assert!("random:1".parse::<StubbornnessSource>().is_err());
        assert_eq!("k.txt".parse::<StubbornnessSource>().unwrap(), StubbornnessSource::File(PathBuf::from("k.txt")));
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn fixture_replay_exact() {
        let graph = write_temp("g.txt", "# two nodes\n1 2\n");
        let k = write_temp("k.txt", "1 2\n2 1\n");
        let s = write_temp("s.txt", "1 1\n2 -1\n");
        let mut cfg = RunConfig::new(&graph);
        cfg.stubbornness = StubbornnessSource::File(k);
        cfg.opinions = OpinionSource::File(s);
        cfg.mode = Mode::Exact;
        let doc = run_metrics(&cfg).unwrap();
        assert!((doc.report.conflict - 24.0 / 25.0).abs() < 1e-12);
        assert!((doc.report.pd_index - 7.0 / 5.0).abs() < 1e-12);
        assert_eq!(doc.node_ids, vec![1, 2]);

        let line = serde_json::to_string(&doc).unwrap();
        assert!(!line.contains('\n'));
        let back: MetricsDocument = serde_json::from_str(&line).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn missing_graph_is_an_input_error() {
        let err = run_metrics(&RunConfig::new("/nonexistent/graph.txt")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn exact_above_cap_is_a_size_guard() {
        let graph = write_temp("path.txt", "1 2\n2 3\n3 4\n");
        let mut cfg = RunConfig::new(&graph);
        cfg.mode = Mode::Exact;
        cfg.dense_cap = 3;
        assert_eq!(run_metrics(&cfg).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn generated_inputs_are_seed_deterministic() {
        let graph = write_temp("tri.txt", "1 2\n2 3\n1 3\n3 4 2.0\n");
        let mut cfg = RunConfig::new(&graph);
        cfg.seed = 11;
        let a = run_metrics(&cfg).unwrap();
        let b = run_metrics(&cfg).unwrap();
        assert_eq!(a.report.conflict.to_bits(), b.report.conflict.to_bits());
        cfg.seed = 12;
        assert_ne!(run_metrics(&cfg).unwrap().report.conflict, a.report.conflict);
    }

    #[test]
    fn simulate_and_spectrum_documents() {
        let graph = write_temp("sq.txt", "1 2\n2 3\n3 4\n4 1\n");
        let cfg = RunConfig::new(&graph);
        let sim = run_simulate(&cfg, 1e-8).unwrap();
        assert!(sim.stop_time as u64 <= sim.bound);
        assert_eq!(sim.f_norms.len(), sim.stop_time + 1);
        let spec = run_spectrum(&cfg, 1e-10).unwrap();
        assert!(spec.converged && spec.rho > 0.0 && spec.rho < spec.max_row_sum + 1e-12);
        assert!((spec.rho - sim.rho).abs() < 1e-9);
    }
}
