//! Normalised hypergraph propagation `P = Dv^-1/2 H W De^-1 H^T Dv^-1/2` and
//! the Laplacian `I - P`.
//!
//! `P` is kept in factored form `B B^T` with `B = Dv^-1/2 H (W De^-1)^1/2`.
//! Applying the factors costs two passes over the incidence nonzeros, whereas
//! the explicit product can be close to dense for popular items.

use ndarray::{Array2, ArrayView2};

use super::sparse::{LinearOperator, SparseOperator};
use crate::hypergraph::Hypergraph;

fn scaled_incidence(hg: &Hypergraph) -> SparseOperator {
    let deg = hg.node_degrees();
    let mut triplets = Vec::with_capacity(hg.nnz());
    for (e, (members, w)) in hg.edges().iter().zip(hg.edge_weights()).enumerate() {
        let edge_scale = (w / members.len() as f64).sqrt();
        for &v in members {
            triplets.push((v, e, edge_scale / deg[v].sqrt()));
        }
    }
    SparseOperator::from_triplets(hg.n_nodes(), hg.n_edges(), triplets).expect("members in range")
}

/// Explicit propagation matrix. Isolated nodes get an all-zero row and column.
pub fn propagation_operator(hg: &Hypergraph) -> SparseOperator {
    let deg = hg.node_degrees();
    let mut triplets = Vec::new();
    for (members, w) in hg.edges().iter().zip(hg.edge_weights()) {
        let edge_scale = w / members.len() as f64;
        for &a in members {
            for &b in members {
                triplets.push((a, b, edge_scale / (deg[a] * deg[b]).sqrt()));
            }
        }
    }
    SparseOperator::from_triplets(hg.n_nodes(), hg.n_nodes(), triplets).expect("members in range")
}

/// Explicit normalised Laplacian `I - P`.
pub fn hypergraph_laplacian(hg: &Hypergraph) -> SparseOperator {
    let p = propagation_operator(hg);
    let mut triplets: Vec<_> = (0..p.rows())
        .flat_map(|r| p.row(r).map(move |(c, v)| (r, c, -v)).collect::<Vec<_>>())
        .collect();
    triplets.extend((0..hg.n_nodes()).map(|i| (i, i, 1.0)));
    SparseOperator::from_triplets(hg.n_nodes(), hg.n_nodes(), triplets).expect("indices in range")
}

/// `P` as `B (B^T X)`.
#[derive(Debug, Clone)]
pub struct Propagation {
    b: SparseOperator,
    bt: SparseOperator,
}

impl Propagation {
    pub fn new(hg: &Hypergraph) -> Self {
        let b = scaled_incidence(hg);
        let bt = b.transpose();
        Self { b, bt }
    }

    pub fn n(&self) -> usize {
        self.b.rows()
    }

    pub fn laplacian(&self) -> Laplacian {
        Laplacian { prop: self.clone() }
    }

    /// Dense `I - P` via a dense product of the factors.
    pub fn dense_laplacian(&self) -> Array2<f64> {
        let b = self.b.to_dense();
        Array2::eye(self.n()) - b.dot(&b.t())
    }
}

impl LinearOperator for Propagation {
    fn shape(&self) -> (usize, usize) {
        (self.n(), self.n())
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let edge_space = self.bt.apply(x);
        self.b.apply(edge_space.view())
    }

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        self.apply(g)
    }
}

/// `I - P` applied through the factors of `P`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    prop: Propagation,
}

impl LinearOperator for Laplacian {
    fn shape(&self) -> (usize, usize) {
        self.prop.shape()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let px = self.prop.apply(x);
        &x - &px
    }

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        self.apply(g)
    }
}
