//! Heterophily-aware diffusion layers:
//!
//! ```text
//! X_e = LN(P MLP1(X)) + X
//! X_v = LN(P MLP2(X_e)) + X_e
//! ```
//!
//! `P` is the channel's normalised propagation operator, so node→edge→node
//! aggregation happens in one multiply and `X_e` stays node-shaped.

use std::sync::Arc;

use super::EncoderOutput;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::spectral::LinearOperator;

/// `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl Mlp {
    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let h = t.matmul(x, self.w1)?;
        let h = t.add_row_bias(h, self.b1)?;
        let h = t.relu(h);
        let o = t.matmul(h, self.w2)?;
        t.add_row_bias(o, self.b2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormAffine {
    pub gain: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct HdnnLayer {
    pub mlp1: Mlp,
    pub mlp2: Mlp,
    pub ln1: LayerNormAffine,
    pub ln2: LayerNormAffine,
}

/// One diffusion layer; returns `(X_e, X_v)`.
pub fn hdnn_layer(t: &mut Tape, x: Var, prop: &Arc<dyn LinearOperator>, layer: &HdnnLayer) -> Result<(Var, Var)> {
    let h = layer.mlp1.forward(t, x)?;
    let h = t.sparse_apply(prop.clone(), h)?;
    let h = t.layer_norm(h, layer.ln1.gain, layer.ln1.bias)?;
    let x_e = t.add(h, x)?;

    let h = layer.mlp2.forward(t, x_e)?;
    let h = t.sparse_apply(prop.clone(), h)?;
    let h = t.layer_norm(h, layer.ln2.gain, layer.ln2.bias)?;
    let x_v = t.add(h, x_e)?;
    Ok((x_e, x_v))
}

/// Stacks the layers and reads out the mean of the input and every layer
/// output.
pub fn hdnn_encode(t: &mut Tape, x0: Var, prop: &Arc<dyn LinearOperator>, layers: &[HdnnLayer]) -> Result<EncoderOutput> {
    let mut states = vec![x0];
    let mut x = x0;
    for layer in layers {
        let (_, x_v) = hdnn_layer(t, x, prop, layer)?;
        states.push(x_v);
        x = x_v;
    }
    let output = t.mean_of(&states)?;
    Ok(EncoderOutput {
        output,
        layers: states,
    })
}
