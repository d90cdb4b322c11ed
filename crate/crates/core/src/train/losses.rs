//! Ranking and contrastive objectives recorded on the tape.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// `mean(-log sigmoid(pos - neg))` over `n x 1` score columns.
pub fn bpr_loss(t: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
    let margin = t.sub(pos, neg)?;
    let ls = t.log_sigmoid(margin);
    let m = t.mean(ls);
    Ok(t.scale(m, -1.0))
}

/// Cross-view InfoNCE with cosine similarity, summed over entities and
/// layers. Row `j` of `z[l]` is contrasted with row `j` of `gamma[l]` against
/// every other row of `gamma[l]`.
pub fn infonce_cross_view(t: &mut Tape, z: &[Var], gamma: &[Var], tau: f64) -> Result<Var> {
    if z.len() != gamma.len() || z.is_empty() {
        return Err(Error::Shape(format!("contrastive views have {} and {} layers", z.len(), gamma.len())));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let mut terms = Vec::with_capacity(z.len());
    for (&a, &b) in z.iter().zip(gamma) {
        let a = t.l2_normalize_rows(a);
        let b = t.l2_normalize_rows(b);
        let sim = t.matmul_t(a, b)?;
        let sim = t.scale(sim, 1.0 / tau);
        let lse = t.logsumexp_rows(sim)?;
        let pos = t.row_dot(a, b)?;
        let pos = t.scale(pos, 1.0 / tau);
        let per_entity = t.sub(lse, pos)?;
        terms.push(t.sum(per_entity));
    }
    let n = terms.len() as f64;
    let mean = t.mean_of(&terms)?;
    Ok(t.scale(mean, n))
}

/// Sum of squares of every entry of the given tensors.
pub fn squared_norm(t: &mut Tape, tensors: &[Var]) -> Result<Var> {
    let mut parts = Vec::with_capacity(tensors.len());
    for &x in tensors {
        let sq = t.elementwise_mul(x, x)?;
        parts.push(t.sum(sq));
    }
    if parts.is_empty() {
        return Ok(t.leaf(ndarray::Array2::zeros((1, 1))));
    }
    let n = parts.len() as f64;
    let mean = t.mean_of(&parts)?;
    Ok(t.scale(mean, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub ssl: f64,
    pub reg: f64,
}

/// `bpr + ssl * (ssl_users + ssl_items) + reg * reg_sq`.
pub fn total_loss(t: &mut Tape, bpr: Var, ssl_users: Var, ssl_items: Var, reg_sq: Var, w: LossWeights) -> Result<Var> {
    let ssl = t.add(ssl_users, ssl_items)?;
    let ssl = t.scale(ssl, w.ssl);
    let reg = t.scale(reg_sq, w.reg);
    let l = t.add(bpr, ssl)?;
    t.add(l, reg)
}
