//! Interaction data, splits, synthetic benchmarks and side-information
//! embeddings.

mod interactions;
mod split;
mod synth;
mod text;

pub use interactions::{load_interactions, write_interactions, IdMap, Interaction, InteractionGraph};
pub use split::{split_interactions, SplitBundle, SplitRatios};
pub use synth::{generate_synthetic_heterophilic, SynthLabels, SynthParams};
pub use text::{load_text_embeddings, synth_text_embeddings, EntityKind, TextEmbeddings};
