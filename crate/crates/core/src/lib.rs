//! Friedkin-Johnsen opinion dynamics with heterogeneous stubbornness.
//!
//! The crate covers the sparse graph and its matrix views ([`graph`]), the
//! update rule, equilibrium and convergence analysis ([`dynamics`]), an
//! energy-norm certified PCG solver ([`solver`]), exact and approximate
//! conflict/disagreement/polarization metrics ([`metrics`]), and a
//! brute-force spanning-forest oracle for the fundamental matrix
//! ([`forest`]). [`io`], [`generate`], [`run`], [`verify`] and [`bench`]
//! back the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dense;
pub mod dynamics;
pub mod error;
pub mod forest;
pub mod generate;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod run;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{build_graph, eigen_bounds, Graph, GraphBuilder, IncidenceView, NodeId, SpectralBounds, Stubbornness};
