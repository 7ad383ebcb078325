//! Randomized sweeps over every module invariant, with per-property counts.
//!
//! Each property is checked on a batch of seeded random instances and
//! compared against an independent dense computation where one exists.
//! `Fault` injects a known defect so that the harness itself can be tested.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::dynamics::{
    self, center_opinions, convergence_bound, equilibrium, fundamental_matrix, spectral_radius, step, weighted_sum,
    CenteringRule, EquilibriumMode, OpinionState, ScalingDiagonal, SimulationOptions,
};
use crate::error::{Error, Result};
use crate::forest::{enumerate_forests, forest_matrix, MappedDigraph};
use crate::generate::{self, OpinionDistribution};
use crate::graph::{build_graph, eigen_bounds, Graph, GraphBuilder, Stubbornness};
use crate::metrics::{self, ExactOptions, MetricsReport};
use crate::solver::{self, RegularizedLaplacian, SolverRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Small,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            other => Err(Error::InvalidParameter(format!("unknown scale {other:?}"))),
        }
    }
}

/// Deliberate defects for testing the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Adds `1e-6` to `Φ₀₀` before the row-sum check.
    PhiRowSum,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi-row-sum" => Ok(Fault::PhiRowSum),
            other => Err(Error::InvalidParameter(format!("unknown fault {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub failed: usize,
    pub first_failure: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub scale: Scale,
    pub properties: Vec<PropertyOutcome>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyOutcome> {
        self.properties.iter().filter(|p| !p.passed())
    }

    pub fn property(&self, name: &str) -> Option<&PropertyOutcome> {
        self.properties.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for VerifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.properties.iter().map(|p| p.name.len()).max().unwrap_or(0);
        for p in &self.properties {
            let status = if p.passed() { "pass" } else { "FAIL" };
            write!(f, "{status}  {:width$}  {:>5} checked  {:>3} failed", p.name, p.checked, p.failed)?;
            if let Some(detail) = &p.first_failure {
                write!(f, "  ({detail})")?;
            }
            writeln!(f)?;
        }
        let failed = self.failures().count();
        write!(f, "{} properties, {} failed", self.properties.len(), failed)
    }
}

struct Tally {
    outcomes: Vec<PropertyOutcome>,
}

impl Tally {
    fn record(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        let idx = match self.outcomes.iter().position(|p| p.name == name) {
            Some(i) => i,
            None => {
                self.outcomes.push(PropertyOutcome { name: name.into(), checked: 0, failed: 0, first_failure: None });
                self.outcomes.len() - 1
            }
        };
        let p = &mut self.outcomes[idx];
        p.checked += 1;
        if !ok {
            p.failed += 1;
            if p.first_failure.is_none() {
                p.first_failure = Some(detail());
            }
        }
    }

    /// Records an error from the code under test as a failed check.
    fn record_err<T>(&mut self, name: &str, res: Result<T>) -> Option<T> {
        match res {
            Ok(v) => Some(v),
            Err(e) => {
                self.record(name, false, || format!("error: {e}"));
                None
            }
        }
    }
}

struct Sizes {
    instances: usize,
    max_n: usize,
    forest_instances: usize,
    forest_max_n: usize,
    theorem_instances: usize,
}

impl Sizes {
    fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Small => {
                Sizes { instances: 12, max_n: 30, forest_instances: 12, forest_max_n: 5, theorem_instances: 8 }
            }
            Scale::Full => {
                Sizes { instances: 100, max_n: 200, forest_instances: 200, forest_max_n: 7, theorem_instances: 50 }
            }
        }
    }
}

/// A seeded random connected instance with weights and stubbornness in
/// `[0.5, 2]` and uniform innate opinions.
pub fn random_instance(n: usize, seed: u64) -> Result<(Graph, Stubbornness, Vec<f64>)> {
    let extra = n + (seed as usize % (n + 1));
    let graph = generate::random_connected(n, extra, 0.5, 2.0, seed)?.build()?.graph;
    let k = Stubbornness::new(generate::random_stubbornness(n, 0.5, 2.0, seed.wrapping_add(1))?)?;
    let s = generate::generate_opinions(n, OpinionDistribution::Uniform, seed.wrapping_add(2))?;
    Ok((graph, k, s))
}

fn size_for(seed: u64, lo: usize, hi: usize) -> usize {
    lo + (seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 33) as usize % (hi - lo + 1)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn energy_norm(t: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(t * x)).max(0.0).sqrt()
}

pub fn run_verify(scale: Scale, fault: Option<Fault>) -> Result<VerifySummary> {
    let sizes = Sizes::for_scale(scale);
    let mut tally = Tally { outcomes: Vec::new() };
    graphcore_properties(&mut tally, &sizes)?;
    dynamics_properties(&mut tally, &sizes, fault)?;
    solver_properties(&mut tally, &sizes)?;
    metrics_properties(&mut tally, &sizes)?;
    forest_properties(&mut tally, &sizes)?;
    cli_properties(&mut tally)?;
    Ok(VerifySummary { scale, properties: tally.outcomes })
}

fn graphcore_properties(t: &mut Tally, sizes: &Sizes) -> Result<()> {
    for seed in 0..sizes.instances as u64 {
        let n = size_for(seed, 2, sizes.max_n);
        let (g, k, _) = random_instance(n, seed)?;
        let ones = vec![1.0; n];
        let l1 = g.laplacian_apply(&ones)?;
        let worst = l1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        t.record("graphcore.laplacian_kernel", worst <= 1e-12 * n as f64 * g.w_max(), || {
            format!("seed {seed}: |L1| = {worst:e}")
        });

        let mut rng_seed = seed.wrapping_mul(31);
        let probes = if n <= 50 { 10 } else { 3 };
        for _ in 0..probes {
            rng_seed = rng_seed.wrapping_add(1);
            let x = generate::generate_opinions(n, OpinionDistribution::Normal, rng_seed)?;
            let direct = g.laplacian_apply(&x)?;
            let composed = g.incidence().compose_laplacian(&x);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let diff = direct.iter().zip(&composed).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            t.record("graphcore.incidence_composition", diff <= 1e-12 * scale, || {
                format!("seed {seed}: relative difference {:e}", diff / scale)
            });
        }

        if n <= 50 {
            let bounds = eigen_bounds(&g, &k)?;
            let eig = SymmetricEigen::new(dense::regularized_laplacian(&g, &k)).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            let tol = 1e-10 * bounds.upper_paper;
            t.record(
                "graphcore.eigen_bounds_contain_spectrum",
                lo >= bounds.lower - tol && hi <= bounds.upper_paper + tol && hi <= bounds.upper() + tol,
                || format!("seed {seed}: spectrum [{lo}, {hi}] vs {bounds:?}"),
            );
        }

        let triples: Vec<_> = g.edges().iter().map(|e| (g.ids()[e.u], g.ids()[e.v], e.weight)).collect();
        let first = build_graph(triples.iter().copied())?.graph;
        let again = build_graph(triples.iter().rev().map(|&(u, v, w)| (v, u, w)))?.graph;
        t.record(
            "graphcore.deterministic_build",
            first.fingerprint() == again.fingerprint() && first.edges() == again.edges(),
            || format!("seed {seed}: fingerprints differ"),
        );
    }
    Ok(())
}

fn dynamics_properties(t: &mut Tally, sizes: &Sizes, fault: Option<Fault>) -> Result<()> {
    for seed in 100..100 + sizes.instances as u64 {
        let n = size_for(seed, 2, sizes.max_n);
        let (g, k, s) = random_instance(n, seed)?;

        let q = ScalingDiagonal::new(&g, &k)?;
        let rows = q.scaled_row_sums(&g);
        let ok = rows.iter().enumerate().all(|(i, r)| {
            let expected = g.degree(i) / (k.values()[i] + g.degree(i));
            (r - expected).abs() <= 1e-12 && *r < 1.0
        });
        t.record("dynamics.row_substochastic", ok, || format!("seed {seed}: row sums {rows:?}"));

        let z = equilibrium(&g, &k, &s, EquilibriumMode::exact())?;
        let next = step(&g, &k, &OpinionState::new(s.clone(), z.clone())?)?;
        let drift = next.expressed.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        t.record("dynamics.fixed_point", drift <= 1e-10, || format!("seed {seed}: drift {drift:e}"));

        if n <= 200 {
            let mut phi = fundamental_matrix(&g, &k, dense::DENSE_CAP)?;
            if fault == Some(Fault::PhiRowSum) {
                phi[(0, 0)] += 1e-6;
            }
            let worst_row = phi.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
            let min_entry = phi.min();
            t.record("dynamics.phi_row_stochastic", worst_row <= 1e-10 && min_entry > 0.0, || {
                format!("seed {seed}: max |row sum - 1| = {worst_row:e}, min entry {min_entry:e}")
            });
        }

        let centered = center_opinions(&s, &k, CenteringRule::Weighted)?;
        let zc = equilibrium(&g, &k, &centered, EquilibriumMode::exact())?;
        let wsum = weighted_sum(&k, &zc).abs();
        t.record("dynamics.property1_weighted_sum", wsum <= 1e-9 * n as f64 * k.max(), || {
            format!("seed {seed}: |1ᵀKz| = {wsum:e}")
        });

        let c = (seed % 7) as f64 * 0.3 - 0.9;
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let zs = equilibrium(&g, &k, &shifted, EquilibriumMode::exact())?;
        let cov = zs.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b - c).abs()));
        t.record("dynamics.property2_translation", cov <= 1e-10, || format!("seed {seed}: deviation {cov:e}"));

        let uniform = Stubbornness::uniform(n, k.values()[0])?;
        let zu = equilibrium(&g, &uniform, &s, EquilibriumMode::exact())?;
        let gap = (zu.iter().sum::<f64>() - s.iter().sum::<f64>()).abs();
        t.record("dynamics.uniform_k_total", gap <= 1e-9, || format!("seed {seed}: |Σz - Σs| = {gap:e}"));

        for eps in [1e-4, 1e-8] {
            let sim = t.record_err(
                "dynamics.convergence_bound",
                dynamics::simulate_until(&g, &k, &s, &vec![0.0; n], eps, SimulationOptions::default()),
            );
            let Some(sim) = sim else { continue };
            let bound = convergence_bound(sim.spectral.upper(), sim.trace.f_norms[0], eps)?;
            t.record("dynamics.convergence_bound", sim.stop_time() as u64 <= bound, || {
                format!("seed {seed}, eps {eps:e}: stopped at {} > bound {bound}", sim.stop_time())
            });
            let rho = sim.spectral.upper();
            let decay = sim.trace.f_norms.windows(2).all(|w| w[1] <= rho * w[0] + 1e-9);
            t.record("dynamics.geometric_decay", decay, || format!("seed {seed}, eps {eps:e}: |f| grew faster than ρ"));
        }
    }

    for seed in 200..200 + sizes.theorem_instances as u64 {
        let n = size_for(seed, 2, 40);
        let (g, k, _) = random_instance(n, seed)?;
        let i = seed as usize % n;

        let before = spectral_radius(&g, &k, 1e-13)?;
        let after = spectral_radius(&g, &k.with_value(i, 1.5 * k.values()[i])?, 1e-13)?;
        t.record("dynamics.theorem1_monotone", after.rho < before.rho - 1e-9, || {
            format!("seed {seed}: ρ {} → {} after raising k_{i}", before.rho, after.rho)
        });

        let phi = fundamental_matrix(&g, &k, dense::DENSE_CAP)?;
        let phi_low = fundamental_matrix(&g, &k.with_value(i, 0.5 * k.values()[i])?, dense::DENSE_CAP)?;
        let delta = &phi_low - &phi;
        let signs = (0..n).all(|r| (0..n).all(|c| if c == i { delta[(r, c)] < -1e-12 } else { delta[(r, c)] > 1e-12 }));
        t.record("dynamics.theorem2_column", signs, || format!("seed {seed}: wrong sign after halving k_{i}"));
    }
    Ok(())
}

fn solver_properties(t: &mut Tally, sizes: &Sizes) -> Result<()> {
    for seed in 300..300 + sizes.instances as u64 {
        let n = size_for(seed, 2, sizes.max_n.min(500));
        let (g, k, b) = random_instance(n, seed)?;
        let delta = 10f64.powf(-(2.0 + (seed % 9) as f64));
        let op = RegularizedLaplacian::new(&g, &k)?;
        let Some(res) = t.record_err("solver.contract", solver::solve(&SolverRequest::new(&op, &b, delta))) else {
            continue;
        };
        let tm = dense::regularized_laplacian(&g, &k);
        let exact = tm.clone().cholesky().expect("L + K is positive definite").solve(&dense::to_vector(&b));
        let err = energy_norm(&tm, &(dense::to_vector(&res.solution) - &exact));
        let limit = delta * energy_norm(&tm, &exact);
        t.record("solver.contract", res.certified && err <= limit, || {
            format!("seed {seed}, δ {delta:e}: certified {} error {err:e} > {limit:e}", res.certified)
        });

        let again = solver::solve(&SolverRequest::new(&op, &b, delta))?;
        t.record("solver.deterministic", again.solution == res.solution, || format!("seed {seed}: runs differ"));
    }

    // Fixed-degree family of growing size: iteration counts must grow much
    // slower than n.
    let ns: Vec<usize> = match sizes.instances {
        i if i < 50 => vec![200, 400, 800, 1600],
        _ => vec![500, 1000, 2000, 4000, 8000],
    };
    let mut points = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let g = build_graph(generate::random_regular(n, 4, 400 + j as u64)?)?.graph;
        let k = Stubbornness::new(generate::random_stubbornness(g.n(), 0.5, 2.0, 500 + j as u64)?)?;
        let b = generate::generate_opinions(g.n(), OpinionDistribution::Uniform, 600 + j as u64)?;
        let op = RegularizedLaplacian::new(&g, &k)?;
        let res = solver::solve(&SolverRequest::new(&op, &b, 1e-8))?;
        points.push((n as f64, res.iterations.max(1) as f64));
    }
    let slope = loglog_slope(&points);
    t.record("solver.iteration_growth", slope < 0.75, || format!("log-log slope {slope:.3}"));
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn metrics_properties(t: &mut Tally, sizes: &Sizes) -> Result<()> {
    for seed in 700..700 + sizes.instances as u64 {
        let n = size_for(seed, 2, sizes.max_n);
        let (g, k, s) = random_instance(n, seed)?;
        let report = metrics::metrics_exact(&g, &k, &s, ExactOptions::default())?;

        // Quadratic forms on dense matrices.
        let l = dense::laplacian(&g);
        let tm = dense::regularized_laplacian(&g, &k);
        let kv = dense::to_vector(k.values());
        let ks = kv.component_mul(&dense::to_vector(&s));
        let z = tm.clone().cholesky().expect("L + K is positive definite").solve(&ks);
        let lz = &l * &z;
        let c = lz.iter().zip(kv.iter()).map(|(v, ki)| v * v / ki).sum::<f64>();
        let d = z.dot(&lz);
        let p = z.dot(&kv.component_mul(&z));
        let ok = rel(report.conflict, c) <= 1e-9
            && rel(report.disagreement, d) <= 1e-9
            && rel(report.polarization, p) <= 1e-9
            && rel(report.pd_index, p + d) <= 1e-9;
        t.record("metrics.direct_vs_quadratic", ok, || format!("seed {seed}: {report:?} vs C={c} D={d} P={p}"));

        let residual = metrics::conservation_check(&report, &k, &s)?;
        t.record("metrics.conservation", residual.relative <= 1e-9, || {
            format!("seed {seed}: relative residual {:e}", residual.relative)
        });

        let identity = ks.dot(&z);
        t.record("metrics.pd_identity", rel(report.pd_index, identity) <= 1e-9, || {
            format!("seed {seed}: I_pd {} vs Σksz {identity}", report.pd_index)
        });

        let approx = metrics::approxim(&g, &k, &s, 1e-6)?;
        let centered = center_opinions(&s, &k, CenteringRule::Weighted)?;
        let exact = metrics::metrics_exact(&g, &k, &centered, ExactOptions::default())?;
        let worst = [
            rel(approx.conflict, exact.conflict),
            rel(approx.disagreement, exact.disagreement),
            rel(approx.polarization, exact.polarization),
            rel(approx.pd_index, exact.pd_index),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        t.record("metrics.approx_within_eps", approx.certified && worst <= 1e-6, || {
            format!("seed {seed}: certified {} worst relative error {worst:e}", approx.certified)
        });

        let uniform = Stubbornness::uniform(n, 1.0 + (seed % 3) as f64)?;
        let ru = metrics::metrics_exact(&g, &uniform, &s, ExactOptions::default())?;
        let gap = (ru.sum_z - s.iter().sum::<f64>()).abs();
        t.record("metrics.uniform_k_total", gap <= 1e-9, || format!("seed {seed}: |Σz - Σs| = {gap:e}"));
    }
    Ok(())
}

fn forest_properties(t: &mut Tally, sizes: &Sizes) -> Result<()> {
    for seed in 900..900 + sizes.forest_instances as u64 {
        let n = size_for(seed, 1, sizes.forest_max_n);
        let (g, k, _) = random_instance(n, seed)?;
        let digraph = MappedDigraph::new(&g, &k)?;
        let enumeration = enumerate_forests(&digraph)?;
        let phi = forest_matrix(&digraph)?;

        let m = DMatrix::identity(n, n) + digraph.laplacian();
        let inverse = m.clone().try_inverse().expect("I + K⁻¹L is invertible");
        let dev = max_abs(&phi, &inverse);
        t.record("forest.matrix_vs_dense", dev <= 1e-9, || format!("seed {seed}: max deviation {dev:e}"));

        let det = m.determinant();
        t.record("forest.total_vs_det", rel(enumeration.total, det) <= 1e-9, || {
            format!("seed {seed}: ε(Υ) = {} vs det = {det}", enumeration.total)
        });

        let fundamental = fundamental_matrix(&g, &k, dense::DENSE_CAP)?;
        let dev = max_abs(&phi, &fundamental);
        t.record("forest.matches_fundamental", dev <= 1e-9, || format!("seed {seed}: max deviation {dev:e}"));
    }
    Ok(())
}

fn cli_properties(t: &mut Tally) -> Result<()> {
    let mut builder = GraphBuilder::new();
    builder.add_edge(1, 2, 1.0)?;
    let g = builder.build()?.graph;
    let k = Stubbornness::new(vec![2.0, 1.0])?;
    let report = metrics::metrics_exact(&g, &k, &[1.0, -1.0], ExactOptions::default())?;
    let line = serde_json::to_string(&report).map_err(|e| Error::Numerical(e.to_string()))?;
    let back: std::result::Result<MetricsReport, _> = serde_json::from_str(&line);
    t.record("cli.report_round_trip", back.as_ref().is_ok_and(|b| *b == report), || line.to_string());

    for dist in OpinionDistribution::ALL {
        let a = generate::generate_opinions(500, dist, 9)?;
        let b = generate::generate_opinions(500, dist, 9)?;
        let in_range = a.iter().all(|v| (-1.0..=1.0).contains(v));
        t.record("cli.generate_deterministic", a == b && in_range, || {
            format!("{dist}: not reproducible or out of range")
        });
    }
    Ok(())
}
