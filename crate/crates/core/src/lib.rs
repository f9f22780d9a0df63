//! Noise-aware training for sequence labeling.
//!
//! The crate covers the whole pipeline: reading column-format corpora,
//! estimating or synthesizing character confusion matrices, perturbing
//! corpora without touching their labels, training a BiLSTM-CRF tagger with
//! the standard, data-augmentation or stability objective, and scoring the
//! result on clean and noisy input.

pub mod alignment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod noise;
pub mod perturb;
pub mod rng;
pub mod spans;
pub mod synth;
pub mod tagger;
pub mod training;

pub use alignment::{align, character_error_rate, levenshtein_distance, Alignment, EditOp};
pub use corpus::{parse_conll, parse_pairs, write_conll, Corpus, Label, LabeledSentence, Scheme, SentencePair, Tag};
pub use error::{AlignmentError, AutogradError, CorpusError, EvalError, ModelError, NoiseError, TrainError};
pub use noise::{estimate_natural, vanilla, Alphabet, ConfusionMatrix, Symbol, VanillaNoiseSpec};
pub use perturb::{perturb_corpus, perturb_sentence, perturb_token, NoiseSeed};
pub use spans::{decode_spans, encode_spans, Span};
pub use tagger::{LogitsMatrix, ModelConfig, TaggerModel, Vocabulary};
