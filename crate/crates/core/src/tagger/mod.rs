//! Neural sequence labeler and the reverse-mode engine it trains with.

pub mod crf;
mod graph;
mod lstm;
mod model;
mod params;
mod tensor;
mod vocab;

pub use crf::{crf_log_likelihood, log_partition, marginals, path_score, token_posteriors, viterbi_decode};
pub use graph::{Graph, NodeId};
pub use model::{LogitsMatrix, ModelConfig, TaggerModel, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
pub use vocab::{Vocabulary, UNK};
