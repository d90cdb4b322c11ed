//! Dual user/item hypergraphs built from a training interaction set.

use crate::data::InteractionGraph;
use crate::error::{Error, Result};

/// Incidence structure stored edge-major: `edges[e]` lists the sorted member
/// nodes of hyperedge `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    n_nodes: usize,
    edges: Vec<Vec<usize>>,
    edge_weights: Vec<f64>,
}

impl Hypergraph {
    pub fn new(n_nodes: usize, edges: Vec<Vec<usize>>, edge_weights: Option<Vec<f64>>) -> Result<Self> {
        let edge_weights = edge_weights.unwrap_or_else(|| vec![1.0; edges.len()]);
        if edge_weights.len() != edges.len() {
            return Err(Error::Shape(format!(
                "{} edge weights for {} hyperedges",
                edge_weights.len(),
                edges.len()
            )));
        }
        if let Some(w) = edge_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Data(format!("hyperedge weight {w} is not positive")));
        }
        let mut edges = edges;
        for (e, members) in edges.iter_mut().enumerate() {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(Error::Data(format!("hyperedge {e} is empty")));
            }
            if let Some(&v) = members.last().filter(|&&v| v >= n_nodes) {
                return Err(Error::Data(format!("hyperedge {e} references node {v} >= {n_nodes}")));
            }
        }
        Ok(Self {
            n_nodes,
            edges,
            edge_weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// Number of nonzeros of the incidence matrix.
    pub fn nnz(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Weighted node degrees `d_v = sum_e w_e h(v, e)`.
    pub fn node_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n_nodes];
        for (members, w) in self.edges.iter().zip(&self.edge_weights) {
            for &v in members {
                deg[v] += w;
            }
        }
        deg
    }

    /// Dense incidence matrix, for tests and small diagnostics.
    pub fn incidence_dense(&self) -> ndarray::Array2<f64> {
        let mut h = ndarray::Array2::zeros((self.n_nodes, self.edges.len()));
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                h[[v, e]] = 1.0;
            }
        }
        h
    }
}

fn from_groups(n_nodes: usize, groups: Vec<Vec<usize>>) -> Hypergraph {
    let edges: Vec<_> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    Hypergraph::new(n_nodes, edges, None).expect("groups come from a validated graph")
}

/// One hyperedge per item, joining the users who interacted with it.
pub fn build_user_hypergraph(train: &InteractionGraph) -> Hypergraph {
    from_groups(train.n_users(), train.item_users())
}

/// One hyperedge per user, joining the items it interacted with.
pub fn build_item_hypergraph(train: &InteractionGraph) -> Hypergraph {
    from_groups(train.n_items(), train.user_items())
}
