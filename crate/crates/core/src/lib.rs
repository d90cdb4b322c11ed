//! Heterophily-aware hypergraph diffusion and wavelet hypergraph convolution
//! for implicit-feedback recommendation.
//!
//! The pipeline: interactions are split per user, dual user/item hypergraphs
//! are built from the training part, and two encoders (a diffusion encoder
//! with layer-normalised MLP propagation and a heat-kernel wavelet encoder)
//! refine structural and textual embedding streams. Streams are averaged
//! inside each encoder, encoders are averaged at the end, and training
//! minimises BPR plus a cross-encoder InfoNCE term.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod hypergraph;
pub mod model;
pub mod pipeline;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
