//! Dense matrix views for the exact path. Only used below [`DENSE_CAP`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::graph::{Graph, Stubbornness};

/// Largest node count for which dense factorizations are allowed by default.
pub const DENSE_CAP: usize = 10_000;

pub fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::SizeGuard { n, cap });
    }
    Ok(())
}

pub fn laplacian(graph: &Graph) -> DMatrix<f64> {
    let n = graph.n();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = graph.degree(i);
        for (j, w) in graph.neighbors(i) {
            l[(i, j)] = -w;
        }
    }
    l
}

/// `L + K`.
pub fn regularized_laplacian(graph: &Graph, k: &Stubbornness) -> DMatrix<f64> {
    let mut t = laplacian(graph);
    for (i, &ki) in k.values().iter().enumerate() {
        t[(i, i)] += ki;
    }
    t
}

/// Cholesky factor of `L + K`; always SPD for valid stubbornness.
pub fn factor(graph: &Graph, k: &Stubbornness, cap: usize) -> Result<Cholesky<f64, Dyn>> {
    check_cap(graph.n(), cap)?;
    k.check_for(graph)?;
    Cholesky::new(regularized_laplacian(graph, k))
        .ok_or_else(|| Error::Numerical("L + K is not positive definite".into()))
}

pub fn to_vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
