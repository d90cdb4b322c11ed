//! The two structural encoders run on every channel.

mod hdnn;
mod wavelet;

pub use hdnn::{hdnn_encode, hdnn_layer, HdnnLayer, LayerNormAffine, Mlp};
pub use wavelet::{wavelet_encode, wavelet_layer, Combine, WaveletLayer};

use crate::autodiff::Var;

/// Readout plus every per-layer state, input first.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub output: Var,
    pub layers: Vec<Var>,
}
