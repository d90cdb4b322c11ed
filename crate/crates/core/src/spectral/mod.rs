//! Sparse propagation operators, hypergraph Laplacians, symmetric
//! eigendecomposition and heat-kernel wavelet bases.

mod eig;
mod propagation;
mod sparse;
mod wavelet;

pub use eig::{eig_sym, eig_sym_dense, DEFAULT_MAX_EXACT_N};
pub use propagation::{hypergraph_laplacian, propagation_operator, Laplacian, Propagation};
pub use sparse::{DenseOperator, LinearOperator, SparseOperator};
pub use wavelet::{
    chebyshev_apply, chebyshev_coefficients, estimate_lambda_max, wavelet_basis, ChebyshevOperator,
    WaveletBasis, WaveletMode, MAX_SCALE_SPECTRUM,
};
