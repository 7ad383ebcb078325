//! Internal conflict, disagreement, polarization and the
//! polarization-disagreement index, computed exactly or from a single
//! Laplacian solve.
//!
//! With `z = (L + K)⁻¹Ks`:
//!
//! * `C = Σ k_i (z_i - s_i)² = ‖K^{-1/2}Lz‖²`
//! * `D = Σ_{(i,j)∈E} w_ij (z_i - z_j)² = ‖W^{1/2}Bz‖²`
//! * `P = Σ k_i z_i² = ‖K^{1/2}z‖²`
//! * `I_pd = P + D = Σ k_i s_i z_i`
//!
//! and `C + 2D + P = Σ k_i s_i²` for every `s`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::{self, DENSE_CAP};
use crate::dynamics::{center_opinions, weighted_sum, CenteringRule};
use crate::error::{Error, Result};
use crate::graph::{Graph, Stubbornness};
use crate::solver::{self, RegularizedLaplacian, SolverRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricsMode {
    Exact,
    Approx,
}

/// Relative error bounds derived from the final solver residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    #[serde(rename = "C")]
    pub conflict: f64,
    #[serde(rename = "D")]
    pub disagreement: f64,
    #[serde(rename = "P")]
    pub polarization: f64,
    #[serde(rename = "I_pd")]
    pub pd_index: f64,
}

impl ErrorBounds {
    pub fn max(&self) -> f64 {
        self.conflict.max(self.disagreement).max(self.polarization).max(self.pd_index)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Factorization or linear solve.
    pub solve_seconds: f64,
    /// Everything after the solve: the norm evaluations.
    pub norms_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "C")]
    pub conflict: f64,
    #[serde(rename = "D")]
    pub disagreement: f64,
    #[serde(rename = "P")]
    pub polarization: f64,
    #[serde(rename = "I_pd")]
    pub pd_index: f64,
    pub sum_z: f64,
    pub weighted_sum_z: f64,
    pub mode: MetricsMode,
    pub delta_used: Option<f64>,
    pub eps_requested: Option<f64>,
    /// `|C + 2D + P - Σ k_i s_i²|`.
    pub conservation_residual: f64,
    /// The innate opinions were shifted so that `1ᵀKs = 0` before solving.
    pub centered: bool,
    /// Exact mode: always true. Approx mode: every bound in `error_bounds`
    /// is at most `eps_requested`.
    pub certified: bool,
    pub solver_certified: Option<bool>,
    pub solver_iterations: Option<usize>,
    pub error_bounds: Option<ErrorBounds>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub cap: usize,
    /// Above the cap, use a solve at `δ = 1e-12` instead of refusing.
    pub solver_fallback: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { cap: DENSE_CAP, solver_fallback: false }
    }
}

const QUASI_EXACT_DELTA: f64 = 1e-12;

fn kinetic(k: &Stubbornness, x: &[f64]) -> f64 {
    k.values().iter().zip(x).map(|(ki, xi)| ki * xi * xi).sum()
}

/// `Σ k_i s_i²`, the conserved total.
pub fn conserved_total(k: &Stubbornness, s: &[f64]) -> f64 {
    kinetic(k, s)
}

pub fn metrics_exact(graph: &Graph, k: &Stubbornness, s: &[f64], opts: ExactOptions) -> Result<MetricsReport> {
    k.check_for(graph)?;
    graph.check_len(s.len())?;
    let start = Instant::now();
    let z = if graph.n() <= opts.cap {
        let chol = dense::factor(graph, k, opts.cap)?;
        let ks: Vec<f64> = k.values().iter().zip(s).map(|(ki, si)| ki * si).collect();
        chol.solve(&dense::to_vector(&ks)).as_slice().to_vec()
    } else if opts.solver_fallback {
        let ks: Vec<f64> = k.values().iter().zip(s).map(|(ki, si)| ki * si).collect();
        let op = RegularizedLaplacian::new(graph, k)?;
        solver::solve(&SolverRequest::new(&op, &ks, QUASI_EXACT_DELTA))?.solution
    } else {
        return Err(Error::SizeGuard { n: graph.n(), cap: opts.cap });
    };
    let solve_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let conflict: f64 = k.values().iter().zip(z.iter().zip(s)).map(|(ki, (zi, si))| ki * (zi - si).powi(2)).sum();
    let disagreement = graph.incidence().weighted_norm_sq(&z);
    let polarization = kinetic(k, &z);
    let pd_index = polarization + disagreement;
    let total = conserved_total(k, s);

    let identity: f64 = k.values().iter().zip(s.iter().zip(&z)).map(|(ki, (si, zi))| ki * si * zi).sum();
    if (identity - pd_index).abs() > 1e-9 * pd_index + 1e-14 * total {
        return Err(Error::Numerical(format!("I_pd = {pd_index:e} disagrees with Σ k s z = {identity:e}")));
    }
    let norms_seconds = start.elapsed().as_secs_f64();

    Ok(MetricsReport {
        conflict,
        disagreement,
        polarization,
        pd_index,
        sum_z: z.iter().sum(),
        weighted_sum_z: weighted_sum(k, &z),
        mode: MetricsMode::Exact,
        delta_used: None,
        eps_requested: None,
        conservation_residual: (conflict + 2.0 * disagreement + polarization - total).abs(),
        centered: false,
        certified: true,
        solver_certified: None,
        solver_iterations: None,
        error_bounds: None,
        timings: PhaseTimings { solve_seconds, norms_seconds },
    })
}

/// Solver accuracy thresholds for an ε-approximation of each quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBudget {
    /// Sufficient for `P`.
    pub delta1: f64,
    /// Sufficient for `D`.
    pub delta2: f64,
    /// Sufficient for `C`.
    pub delta3: f64,
    pub delta: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps {eps} not in (0, 1/2)")));
    }
    Ok(())
}

fn is_centered(k: &Stubbornness, s: &[f64]) -> bool {
    let scale: f64 = k.values().iter().zip(s).map(|(ki, si)| (ki * si).abs()).sum();
    weighted_sum(k, s).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)
}

fn euclidean(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `δ₁, δ₂, δ₃` and their minimum, for centered `s`.
///
/// On an edgeless graph `D` and `C` vanish identically and `δ₂`, `δ₃` are
/// reported as infinite.
pub fn delta_budget(graph: &Graph, k: &Stubbornness, s: &[f64], eps: f64) -> Result<DeltaBudget> {
    check_eps(eps)?;
    k.check_for(graph)?;
    graph.check_len(s.len())?;
    let s_norm = euclidean(s);
    if s_norm == 0.0 {
        return Err(Error::InvalidParameter("‖s‖ = 0: every metric is 0 and δ is degenerate".into()));
    }
    if !is_centered(k, s) {
        return Err(Error::InvalidParameter("δ thresholds need 1ᵀKs = 0; center the opinions first".into()));
    }
    Ok(budget_terms(graph, k, s_norm, eps))
}

fn budget_terms(graph: &Graph, k: &Stubbornness, s_norm: f64, eps: f64) -> DeltaBudget {
    let n = graph.n() as f64;
    let (k_min, k_max) = (k.min(), k.max());
    let (w_min, w_max) = (graph.w_min(), graph.w_max());
    let big = k_max + n * w_max;

    let delta1 = eps / (3.0 * (big / (k_min * k_max)).sqrt());
    let (delta2, delta3) = if graph.m() == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let d2 = eps * k_min * s_norm / (3.0 * n * big) * (w_min / (n * big)).sqrt();
        let d3 =
            eps * w_min * k_min * k_min.sqrt() * s_norm / (3.0 * w_max * n.powi(3) * big * (n * k_max * big).sqrt());
        (d2, d3)
    };
    DeltaBudget { delta1, delta2, delta3, delta: delta1.min(delta2).min(delta3) }
}

/// Bound on `|X̃ - X| / X` for `X̃ = ‖Mq‖²`, `X = ‖Mz‖²` when
/// `‖M(q - z)‖ ≤ spread`. Returns `(absolute, lower bound on X)`.
fn norm_sq_error(estimate: f64, spread: f64) -> (f64, f64) {
    let a = estimate.sqrt();
    let absolute = spread * (2.0 * a + spread);
    let lower = if spread < a { (a - spread).powi(2) } else { 0.0 };
    (absolute, lower)
}

fn relative(absolute: f64, lower: f64) -> f64 {
    if absolute == 0.0 {
        0.0
    } else if lower > 0.0 {
        absolute / lower
    } else {
        f64::INFINITY
    }
}

/// Algorithm `Approxim`: one solve `q ≈ (L + K)⁻¹Ks`, then
/// `C̃ = ‖K^{-1/2}Lq‖²`, `D̃ = ‖W^{1/2}Bq‖²`, `P̃ = ‖K^{1/2}q‖²`, `Ĩ_pd = P̃ + D̃`.
///
/// Opinions with `1ᵀKs ≠ 0` are centered first and the report says so.
/// Besides the solver's own δ certificate, every estimate carries a relative
/// error bound computed from the true residual `r = Ks - (L + K)q`:
/// `‖q - z‖_T ≤ ‖r‖ / √k_min`, which bounds `‖K^{1/2}(q - z)‖` and
/// `‖W^{1/2}B(q - z)‖` directly and `‖K^{-1/2}L(q - z)‖` after a factor
/// `√(λ_max(L) / k_min)`.
pub fn approxim(graph: &Graph, k: &Stubbornness, s: &[f64], eps: f64) -> Result<MetricsReport> {
    approxim_with(graph, k, s, eps, CenteringRule::Weighted)
}

/// [`approxim`] with a choice of centering rule. Under
/// [`CenteringRule::Uniform`] the shifted opinions generally keep
/// `1ᵀKs ≠ 0`; the δ budget is then evaluated as if they were centered and
/// only the a-posteriori error bounds decide `certified`.
pub fn approxim_with(
    graph: &Graph,
    k: &Stubbornness,
    s: &[f64],
    eps: f64,
    rule: CenteringRule,
) -> Result<MetricsReport> {
    check_eps(eps)?;
    k.check_for(graph)?;
    graph.check_len(s.len())?;

    let (s, centered) = if is_centered(k, s) { (s.to_vec(), false) } else { (center_opinions(s, k, rule)?, true) };
    if euclidean(&s) == 0.0 {
        return Ok(MetricsReport {
            conflict: 0.0,
            disagreement: 0.0,
            polarization: 0.0,
            pd_index: 0.0,
            sum_z: 0.0,
            weighted_sum_z: 0.0,
            mode: MetricsMode::Approx,
            delta_used: None,
            eps_requested: Some(eps),
            conservation_residual: 0.0,
            centered,
            certified: true,
            solver_certified: None,
            solver_iterations: Some(0),
            error_bounds: Some(ErrorBounds { conflict: 0.0, disagreement: 0.0, polarization: 0.0, pd_index: 0.0 }),
            timings: PhaseTimings::default(),
        });
    }

    let budget = budget_terms(graph, k, euclidean(&s), eps);
    let op = RegularizedLaplacian::new(graph, k)?;
    let rhs: Vec<f64> = k.values().iter().zip(&s).map(|(ki, si)| ki * si).collect();

    let start = Instant::now();
    // δ₁ can exceed 1 when k_min is large; the solver wants δ < 1.
    let delta = budget.delta.min(0.5);
    let result = solver::solve(&SolverRequest::new(&op, &rhs, delta))?;
    let solve_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let q = &result.solution;
    let lq = graph.laplacian_apply(q)?;
    let conflict: f64 = lq.iter().zip(k.values()).map(|(v, ki)| v * v / ki).sum();
    let disagreement = graph.incidence().weighted_norm_sq(q);
    let polarization = kinetic(k, q);
    let pd_index = polarization + disagreement;

    let bounds = op.bounds();
    let max_row = (0..graph.n()).map(|i| graph.neighbor_count(i)).max().unwrap_or(0);
    let gamma = (max_row + 3) as f64 * f64::EPSILON * 1.01;
    let rounding = gamma * (result.rhs_norm + bounds.upper_degree * euclidean(q));
    let energy = (result.residual_norm + rounding) / bounds.lower.sqrt();
    let laplacian_max = (2.0 * graph.max_degree()).min(graph.n() as f64 * graph.w_max());

    let (abs_p, low_p) = norm_sq_error(polarization, energy);
    let (abs_d, low_d) = norm_sq_error(disagreement, energy * (laplacian_max / bounds.lower).min(1.0).sqrt());
    let (abs_c, low_c) = norm_sq_error(conflict, energy * (laplacian_max / bounds.lower).sqrt());
    let error_bounds = ErrorBounds {
        conflict: relative(abs_c, low_c),
        disagreement: relative(abs_d, low_d),
        polarization: relative(abs_p, low_p),
        pd_index: relative(abs_p + abs_d, low_p + low_d),
    };
    let total = conserved_total(k, &s);
    let norms_seconds = start.elapsed().as_secs_f64();

    Ok(MetricsReport {
        conflict,
        disagreement,
        polarization,
        pd_index,
        sum_z: q.iter().sum(),
        weighted_sum_z: weighted_sum(k, q),
        mode: MetricsMode::Approx,
        delta_used: Some(delta),
        eps_requested: Some(eps),
        conservation_residual: (conflict + 2.0 * disagreement + polarization - total).abs(),
        centered,
        certified: error_bounds.max() <= eps,
        solver_certified: Some(result.certified),
        solver_iterations: Some(result.iterations),
        error_bounds: Some(error_bounds),
        timings: PhaseTimings { solve_seconds, norms_seconds },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationResidual {
    pub absolute: f64,
    pub relative: f64,
}

/// `|C + 2D + P - Σ k_i s_i²|`, absolute and relative to `Σ k_i s_i²`.
pub fn conservation_check(report: &MetricsReport, k: &Stubbornness, s: &[f64]) -> Result<ConservationResidual> {
    if report.mode != MetricsMode::Exact {
        return Err(Error::InvalidParameter("conservation check needs an exact-mode report".into()));
    }
    if s.len() != k.len() {
        return Err(Error::DimensionMismatch { expected: k.len(), actual: s.len() });
    }
    let total = conserved_total(k, s);
    let absolute = (report.conflict + 2.0 * report.disagreement + report.polarization - total).abs();
    let relative = if total == 0.0 { absolute } else { absolute / total };
    Ok(ConservationResidual { absolute, relative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphBuilder};

    fn path2() -> Graph {
        build_graph([(0, 1, 1.0)]).unwrap().graph
    }

    fn k(values: &[f64]) -> Stubbornness {
        Stubbornness::new(values.to_vec()).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn exact_symmetric_fixture() {
        let r = metrics_exact(&path2(), &k(&[1.0, 1.0]), &[1.0, -1.0], ExactOptions::default()).unwrap();
        assert_close(r.conflict, 8.0 / 9.0, 1e-15);
        assert_close(r.disagreement, 4.0 / 9.0, 1e-15);
        assert_close(r.polarization, 2.0 / 9.0, 1e-15);
        assert_close(r.pd_index, 2.0 / 3.0, 1e-15);
        assert!(r.conservation_residual < 1e-15);
    }

    #[test]
    fn exact_heterogeneous_fixture() {
        let kk = k(&[2.0, 1.0]);
        let s = [1.0, -1.0];
        let r = metrics_exact(&path2(), &kk, &s, ExactOptions::default()).unwrap();
        assert_close(r.conflict, 24.0 / 25.0, 1e-15);
        assert_close(r.disagreement, 16.0 / 25.0, 1e-15);
        assert_close(r.polarization, 19.0 / 25.0, 1e-15);
        assert_close(r.pd_index, 7.0 / 5.0, 1e-15);
        // Σz = 3/5 - 1/5 while Σs = 0.
        assert_close(r.sum_z, 0.4, 1e-15);
        let res = conservation_check(&r, &kk, &s).unwrap();
        assert!(res.absolute < 1e-14 && res.relative < 1e-14);
    }

    #[test]
    fn exact_zero_opinions() {
        let r = metrics_exact(&path2(), &k(&[2.0, 1.0]), &[0.0, 0.0], ExactOptions::default()).unwrap();
        assert_eq!((r.conflict, r.disagreement, r.polarization, r.pd_index), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn exact_cap_and_fallback() {
        let g = build_graph([(0, 1, 1.0), (1, 2, 2.0)]).unwrap().graph;
        let kk = k(&[1.0, 0.5, 2.0]);
        let s = [0.5, -0.2, 0.1];
        let capped = ExactOptions { cap: 2, solver_fallback: false };
        assert!(matches!(metrics_exact(&g, &kk, &s, capped).unwrap_err(), Error::SizeGuard { .. }));
        let fallback = metrics_exact(&g, &kk, &s, ExactOptions { cap: 2, solver_fallback: true }).unwrap();
        let dense = metrics_exact(&g, &kk, &s, ExactOptions::default()).unwrap();
        assert_close(fallback.polarization, dense.polarization, 1e-12);
        assert_close(fallback.conflict, dense.conflict, 1e-12);
    }

    #[test]
    fn delta_budget_examples() {
        let s = [1.0, -1.0];
        let b = delta_budget(&path2(), &k(&[1.0, 1.0]), &s, 0.1).unwrap();
        assert_close(b.delta1, 0.1 / (3.0 * 3f64.sqrt()), 1e-17);
        assert_close(b.delta3, 0.1 * 2f64.sqrt() / (72.0 * 6f64.sqrt()), 1e-18);
        // δ₂ = 0.1·√2 / (3·2·3) · √(1 / (2·3))
        assert_close(b.delta2, 0.1 * 2f64.sqrt() / 18.0 * (1.0f64 / 6.0).sqrt(), 1e-18);
        assert_eq!(b.delta, b.delta1.min(b.delta2).min(b.delta3));
        assert!((b.delta1 - 0.019245).abs() < 1e-6 && (b.delta3 - 0.000802).abs() < 1e-6);

        assert!(delta_budget(&path2(), &k(&[1.0, 1.0]), &[0.0, 0.0], 0.1).is_err());
        assert!(delta_budget(&path2(), &k(&[1.0, 1.0]), &s, 0.5).is_err());
        assert!(delta_budget(&path2(), &k(&[1.0, 1.0]), &[1.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn approxim_fixture() {
        let kk = k(&[2.0, 1.0]);
        let s = [1.0, -2.0];
        let r = approxim(&path2(), &kk, &s, 1e-6).unwrap();
        assert!(!r.centered);
        assert!(r.certified);
        assert!((r.polarization - 24.0 / 25.0).abs() / (24.0 / 25.0) <= 1e-6);
        let exact = metrics_exact(&path2(), &kk, &s, ExactOptions::default()).unwrap();
        for (a, e) in [
            (r.conflict, exact.conflict),
            (r.disagreement, exact.disagreement),
            (r.polarization, exact.polarization),
            (r.pd_index, exact.pd_index),
        ] {
            assert!((a - e).abs() / e <= 1e-6);
        }
    }

    #[test]
    fn approxim_centers_and_handles_zero() {
        let kk = k(&[2.0, 1.0]);
        let r = approxim(&path2(), &kk, &[0.3, 0.3], 1e-6).unwrap();
        assert!(r.centered);
        assert_eq!((r.conflict, r.disagreement, r.polarization, r.pd_index), (0.0, 0.0, 0.0, 0.0));

        let r = approxim(&path2(), &kk, &[1.0, 0.0], 1e-6).unwrap();
        assert!(r.centered);
        let centered = center_opinions(&[1.0, 0.0], &kk, CenteringRule::Weighted).unwrap();
        let exact = metrics_exact(&path2(), &kk, &centered, ExactOptions::default()).unwrap();
        assert!((r.pd_index - exact.pd_index).abs() / exact.pd_index <= 1e-6);
    }

    #[test]
    fn approxim_on_edgeless_graph() {
        let mut b = GraphBuilder::new();
        b.add_node(0).add_node(1).add_node(2);
        let g = b.build().unwrap().graph;
        let kk = k(&[1.0, 2.0, 1.0]);
        let r = approxim(&g, &kk, &[1.0, 0.0, -1.0], 1e-6).unwrap();
        assert_eq!((r.conflict, r.disagreement), (0.0, 0.0));
        assert_close(r.polarization, 2.0, 1e-14);
        assert!(r.certified);
        assert_eq!(r.delta_used, Some(1e-6 / (3.0 * (2.0f64 / 2.0).sqrt())));
    }

    #[test]
    fn conservation_needs_exact_report() {
        let kk = k(&[2.0, 1.0]);
        let r = approxim(&path2(), &kk, &[1.0, -2.0], 1e-6).unwrap();
        assert!(conservation_check(&r, &kk, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn report_json_uses_metric_symbols() {
        let r = metrics_exact(&path2(), &k(&[2.0, 1.0]), &[1.0, -1.0], ExactOptions::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["C", "D", "P", "I_pd", "mode", "delta_used", "conservation_residual"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["mode"], "exact");
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
