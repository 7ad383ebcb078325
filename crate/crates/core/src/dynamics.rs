//! Friedkin-Johnsen dynamics with per-node stubbornness.
//!
//! Each node updates synchronously as
//! `z_i(t+1) = (k_i s_i + Σ_j w_ij z_j(t)) / (k_i + d_i)`,
//! i.e. `z(t+1) = QAz(t) + QKs` with `Q = (D + K)⁻¹`. The iteration converges
//! to `z* = (L + K)⁻¹Ks` because `QA` is strictly row sub-stochastic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dense::{self, DENSE_CAP};
use crate::error::{Error, Result};
use crate::graph::{Graph, Stubbornness};
use crate::solver::{self, RegularizedLaplacian, SolverRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub innate: Vec<f64>,
    pub expressed: Vec<f64>,
    pub t: usize,
}

impl OpinionState {
    pub fn new(innate: Vec<f64>, expressed: Vec<f64>) -> Result<Self> {
        if innate.len() != expressed.len() {
            return Err(Error::DimensionMismatch { expected: innate.len(), actual: expressed.len() });
        }
        Ok(Self { innate, expressed, t: 0 })
    }

    /// Starts from `z(0) = s`.
    pub fn from_innate(innate: Vec<f64>) -> Self {
        let expressed = innate.clone();
        Self { innate, expressed, t: 0 }
    }
}

/// `q_i = 1 / (k_i + d_i)`, the diagonal of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingDiagonal {
    pub q: Vec<f64>,
}

impl ScalingDiagonal {
    pub fn new(graph: &Graph, k: &Stubbornness) -> Result<Self> {
        k.check_for(graph)?;
        let q = graph.degrees().iter().zip(k.values()).map(|(d, ki)| 1.0 / (ki + d)).collect();
        Ok(Self { q })
    }

    /// Row sums of `QA`, each `d_i / (k_i + d_i) < 1`.
    pub fn scaled_row_sums(&self, graph: &Graph) -> Vec<f64> {
        self.q.iter().zip(graph.degrees()).map(|(q, d)| q * d).collect()
    }
}

fn step_into(graph: &Graph, k: &Stubbornness, s: &[f64], z: &[f64], out: &mut [f64]) {
    let kv = k.values();
    graph.rowwise_into(out, |i| (kv[i] * s[i] + graph.adjacency_row_dot(i, z)) / (kv[i] + graph.degree(i)));
}

/// One synchronous update of every node.
pub fn step(graph: &Graph, k: &Stubbornness, state: &OpinionState) -> Result<OpinionState> {
    k.check_for(graph)?;
    graph.check_len(state.innate.len())?;
    graph.check_len(state.expressed.len())?;
    let mut next = vec![0.0; graph.n()];
    step_into(graph, k, &state.innate, &state.expressed, &mut next);
    Ok(OpinionState { innate: state.innate.clone(), expressed: next, t: state.t + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumMode {
    /// Dense Cholesky of `L + K`, refused above `cap` nodes.
    Exact { cap: usize },
    /// PCG with relative energy-norm error `delta`.
    Iterative { delta: f64 },
}

impl EquilibriumMode {
    pub fn exact() -> Self {
        EquilibriumMode::Exact { cap: DENSE_CAP }
    }
}

/// `z* = (L + K)⁻¹Ks`.
pub fn equilibrium(graph: &Graph, k: &Stubbornness, s: &[f64], mode: EquilibriumMode) -> Result<Vec<f64>> {
    k.check_for(graph)?;
    graph.check_len(s.len())?;
    let ks: Vec<f64> = k.values().iter().zip(s).map(|(ki, si)| ki * si).collect();
    match mode {
        EquilibriumMode::Exact { cap } => {
            let chol = dense::factor(graph, k, cap)?;
            Ok(chol.solve(&dense::to_vector(&ks)).as_slice().to_vec())
        }
        EquilibriumMode::Iterative { delta } => {
            let op = RegularizedLaplacian::new(graph, k)?;
            let res = solver::solve(&SolverRequest::new(&op, &ks, delta))?;
            if !res.certified && res.relative_residual() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "solver did not converge: relative residual {:.3e} after {} iterations",
                    res.relative_residual(),
                    res.iterations
                )));
            }
            Ok(res.solution)
        }
    }
}

/// `Φ = (L + K)⁻¹K`, dense.
pub fn fundamental_matrix(graph: &Graph, k: &Stubbornness, cap: usize) -> Result<DMatrix<f64>> {
    let chol = dense::factor(graph, k, cap)?;
    let kdiag = DMatrix::from_diagonal(&dense::to_vector(k.values()));
    Ok(chol.solve(&kdiag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringRule {
    /// Subtract `1ᵀKs / 1ᵀK1`, which makes `1ᵀKs' = 0`.
    #[default]
    Weighted,
    /// Subtract `1ᵀKs / n`. Only zeroes the weighted sum when `tr K = n`.
    Uniform,
}

pub fn center_opinions(s: &[f64], k: &Stubbornness, rule: CenteringRule) -> Result<Vec<f64>> {
    if s.len() != k.len() {
        return Err(Error::DimensionMismatch { expected: k.len(), actual: s.len() });
    }
    let weighted = weighted_sum(k, s);
    let divisor = match rule {
        CenteringRule::Weighted => k.total(),
        CenteringRule::Uniform => s.len() as f64,
    };
    let shift = weighted / divisor;
    Ok(s.iter().map(|v| v - shift).collect())
}

/// `1ᵀKx`.
pub fn weighted_sum(k: &Stubbornness, x: &[f64]) -> f64 {
    k.values().iter().zip(x).map(|(ki, xi)| ki * xi).sum()
}

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    /// Rayleigh quotient estimate of `ρ(QA)`.
    pub rho: f64,
    pub iterations: usize,
    /// `‖Sx - ρx‖` for the final unit vector `x`.
    pub residual: f64,
    pub converged: bool,
}

impl SpectralEstimate {
    /// `ρ + residual`: an eigenvalue of the symmetric operator lies within
    /// `residual` of the Rayleigh quotient, and the quotient never exceeds `ρ`.
    pub fn upper(&self) -> f64 {
        self.rho + self.residual
    }
}

/// Spectral radius of `QA` by power iteration on the similar symmetric
/// matrix `S = Q^{1/2}AQ^{1/2}`.
pub fn spectral_radius(graph: &Graph, k: &Stubbornness, tol: f64) -> Result<SpectralEstimate> {
    spectral_radius_with_cap(graph, k, tol, DEFAULT_SPECTRAL_MAX_ITER)
}

pub fn spectral_radius_with_cap(
    graph: &Graph,
    k: &Stubbornness,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("spectral tolerance {tol} must be positive")));
    }
    let scaling = ScalingDiagonal::new(graph, k)?;
    if graph.m() == 0 {
        return Ok(SpectralEstimate { rho: 0.0, iterations: 0, residual: 0.0, converged: true });
    }
    let n = graph.n();
    let sqrt_q: Vec<f64> = scaling.q.iter().map(|q| q.sqrt()).collect();
    // Bipartite graphs put -ρ in the spectrum too; iterating on S + σI with
    // σ > 0 makes ρ + σ the unique dominant eigenvalue.
    let shift = 0.5 * scaling.scaled_row_sums(graph).into_iter().fold(0.0, f64::max);

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut scaled = vec![0.0; n];
    let mut sx = vec![0.0; n];
    let mut estimate = SpectralEstimate { rho: 0.0, iterations: 0, residual: f64::INFINITY, converged: false };

    for it in 1..=max_iter {
        for i in 0..n {
            scaled[i] = sqrt_q[i] * x[i];
        }
        graph.rowwise_into(&mut sx, |i| sqrt_q[i] * graph.adjacency_row_dot(i, &scaled));
        let theta: f64 = x.iter().zip(&sx).map(|(a, b)| a * b).sum();
        let residual = x.iter().zip(&sx).map(|(a, b)| (b - theta * a).powi(2)).sum::<f64>().sqrt();
        estimate = SpectralEstimate { rho: theta, iterations: it, residual, converged: residual <= tol };
        if estimate.converged {
            break;
        }
        for i in 0..n {
            x[i] = sx[i] + shift * x[i];
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(estimate)
}

/// Upper bound `⌈log_ρ ε - log_ρ |f(0)|⌉` on the convergence time.
pub fn convergence_bound(rho: f64, f0_norm: f64, eps: f64) -> Result<u64> {
    if !(eps > 0.0) || !(f0_norm >= 0.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and |f(0)| ≥ 0, got {eps}, {f0_norm}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("spectral radius {rho} not in [0, 1)")));
    }
    if eps >= f0_norm {
        return Ok(0);
    }
    if rho == 0.0 {
        return Ok(1);
    }
    let steps = (eps.ln() - f0_norm.ln()) / rho.ln();
    // Exact powers such as log_{1/2}(1/8) land a few ulps above the integer.
    Ok((steps * (1.0 - 4.0 * f64::EPSILON)).ceil() as u64)
}

/// Norms of `e(t) = z(t) - z*` and `f(t) = Q^{-1/2} e(t)` per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTrace {
    pub e_norms: Vec<f64>,
    pub f_norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub max_steps: usize,
    pub dense_cap: usize,
    pub spectral_tol: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { max_steps: 1_000_000, dense_cap: DENSE_CAP, spectral_tol: DEFAULT_SPECTRAL_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: OpinionState,
    pub trace: ErrorTrace,
    pub equilibrium: Vec<f64>,
    pub spectral: SpectralEstimate,
    /// Steps promised by [`convergence_bound`] for the same `|f(0)|` and `ε`.
    pub bound: u64,
}

impl Simulation {
    pub fn stop_time(&self) -> usize {
        self.state.t
    }
}

fn f_norm(e: &[f64], scale: &[f64]) -> f64 {
    e.iter().zip(scale).map(|(ei, si)| (ei * si).powi(2)).sum::<f64>().sqrt()
}

/// Iterates [`step`] from `z0` until `|f(t)| ≤ ε`.
pub fn simulate_until(
    graph: &Graph,
    k: &Stubbornness,
    s: &[f64],
    z0: &[f64],
    eps: f64,
    opts: SimulationOptions,
) -> Result<Simulation> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} must be positive")));
    }
    k.check_for(graph)?;
    graph.check_len(s.len())?;
    graph.check_len(z0.len())?;

    let mode = if graph.n() <= opts.dense_cap {
        EquilibriumMode::Exact { cap: opts.dense_cap }
    } else {
        EquilibriumMode::Iterative { delta: 1e-14 }
    };
    let z_star = equilibrium(graph, k, s, mode)?;
    let spectral = spectral_radius(graph, k, opts.spectral_tol)?;
    // sqrt(k_i + d_i), the diagonal of Q^{-1/2}.
    let scale: Vec<f64> = graph.degrees().iter().zip(k.values()).map(|(d, ki)| (d + ki).sqrt()).collect();

    let mut z = z0.to_vec();
    let mut next = vec![0.0; graph.n()];
    let mut trace = ErrorTrace::default();
    let mut t = 0;
    let mut f0 = 0.0;
    loop {
        let e: Vec<f64> = z.iter().zip(&z_star).map(|(a, b)| a - b).collect();
        let f = f_norm(&e, &scale);
        if t == 0 {
            f0 = f;
        }
        trace.e_norms.push(e.iter().map(|v| v * v).sum::<f64>().sqrt());
        trace.f_norms.push(f);
        if f <= eps {
            break;
        }
        if t >= opts.max_steps {
            return Err(Error::IterationCap { cap: opts.max_steps, context: format!("|f(t)| = {f:.3e} > {eps:.3e}") });
        }
        step_into(graph, k, s, &z, &mut next);
        std::mem::swap(&mut z, &mut next);
        t += 1;
    }

    let bound = convergence_bound(spectral.upper().min(1.0 - f64::EPSILON), f0, eps)?;
    if t as u64 > bound {
        return Err(Error::Numerical(format!("stopped at t = {t}, beyond the convergence bound {bound}")));
    }
    Ok(Simulation {
        state: OpinionState { innate: s.to_vec(), expressed: z, t },
        trace,
        equilibrium: z_star,
        spectral,
        bound,
    })
}
