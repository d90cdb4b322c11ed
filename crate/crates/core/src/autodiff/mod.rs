//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! Fixed linear operators (hypergraph propagation, wavelet transforms) enter
//! through [`Tape::sparse_apply`] and are treated as constants.

mod gradcheck;
mod tape;

pub use gradcheck::{check_all_ops, grad_check, grad_check_with_fault, GradCheck, DEFAULT_EPS, REL_ERR_FLOOR};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS, OP_KINDS};
