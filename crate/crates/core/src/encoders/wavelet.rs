//! Wavelet hypergraph convolution `X' = Theta diag(Lambda) Theta' X W + X`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::EncoderOutput;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::spectral::WaveletBasis;

/// How a layer merges its input with the filtered signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// `x + f(x)`.
    #[default]
    Add,
    /// `[x | f(x)]` projected back to width `d` by the fixed map `[I/2; I/2]`.
    Concat,
}

#[derive(Debug, Clone, Copy)]
pub struct WaveletLayer {
    /// `n x 1` pre-softplus filter; the applied diagonal is `softplus(raw)`.
    pub filter_raw: Var,
    /// `d x d`.
    pub weight: Var,
}

pub fn wavelet_layer(t: &mut Tape, x: Var, basis: &WaveletBasis, layer: &WaveletLayer, combine: Combine) -> Result<Var> {
    let lambda = t.softplus(layer.filter_raw);
    let h = t.sparse_apply(basis.inverse(), x)?;
    let h = t.scale_rows(h, lambda)?;
    let h = t.sparse_apply(basis.forward(), h)?;
    let h = t.matmul(h, layer.weight)?;
    match combine {
        Combine::Add => t.add(h, x),
        Combine::Concat => {
            let d = t.value(x).ncols();
            let eye = Array2::<f64>::eye(d) * 0.5;
            let proj = ndarray::concatenate![ndarray::Axis(0), eye, eye];
            let proj = t.leaf(proj);
            let cat = t.concat_cols(&[x, h])?;
            t.matmul(cat, proj)
        }
    }
}

pub fn wavelet_encode(
    t: &mut Tape,
    x0: Var,
    basis: &WaveletBasis,
    layers: &[WaveletLayer],
    combine: Combine,
) -> Result<EncoderOutput> {
    let mut states = vec![x0];
    let mut x = x0;
    for layer in layers {
        x = wavelet_layer(t, x, basis, layer, combine)?;
        states.push(x);
    }
    let output = t.mean_of(&states)?;
    Ok(EncoderOutput {
        output,
        layers: states,
    })
}
