//! Label-preserving noise induction.
//!
//! A token `c1..cK` is extended to `ε c1 ε c2 ... cK ε`, every position is
//! replaced by a draw from its confusion-matrix row, and the ε symbols are
//! dropped. Labels are never touched.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{Corpus, LabeledSentence};
use crate::noise::{ConfusionMatrix, Symbol};
use crate::rng::{derive_seed, stream};

/// Base seed for a perturbation run. Sentence `i` draws from a stream keyed
/// by `(base, i)` and token `j` from a sub-stream keyed by `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSeed(pub u64);

impl NoiseSeed {
    pub fn sentence_seed(self, sentence: usize) -> u64 {
        derive_seed(self.0, sentence as u64)
    }

    pub fn token_seed(self, sentence: usize, token: usize) -> u64 {
        derive_seed(self.sentence_seed(sentence), token as u64)
    }
}

/// Perturbs one token. A token whose characters are all deleted is returned
/// unchanged.
pub fn perturb_token<R: Rng + ?Sized>(token: &str, matrix: &ConfusionMatrix, rng: &mut R) -> String {
    let mut out = String::with_capacity(token.len() + 2);
    let mut push = |s: Symbol| {
        if let Symbol::Char(c) = s {
            out.push(c);
        }
    };
    push(matrix.sample(Symbol::Epsilon, rng));
    for c in token.chars() {
        push(matrix.sample(Symbol::Char(c), rng));
        push(matrix.sample(Symbol::Epsilon, rng));
    }
    if out.is_empty() {
        token.to_string()
    } else {
        out
    }
}

/// Perturbs every token of a sentence from one stream; labels are copied.
pub fn perturb_sentence<R: Rng + ?Sized>(sentence: &LabeledSentence, matrix: &ConfusionMatrix, rng: &mut R) -> LabeledSentence {
    let tokens = sentence.tokens().iter().map(|t| perturb_token(t, matrix, rng)).collect();
    sentence.with_tokens(tokens).expect("perturbation keeps tokens non-empty and whitespace-free")
}

fn perturb_indexed(sentence: &LabeledSentence, index: usize, matrix: &ConfusionMatrix, seed: NoiseSeed) -> LabeledSentence {
    let tokens = sentence
        .tokens()
        .iter()
        .enumerate()
        .map(|(j, t)| perturb_token(t, matrix, &mut stream(seed.token_seed(index, j))))
        .collect();
    sentence.with_tokens(tokens).expect("perturbation keeps tokens non-empty and whitespace-free")
}

pub fn perturb_corpus(corpus: &Corpus, matrix: &ConfusionMatrix, seed: NoiseSeed) -> Corpus {
    let unknown: BTreeSet<char> = corpus
        .sentences()
        .iter()
        .flat_map(|s| s.tokens().iter().flat_map(|t| t.chars()))
        .filter(|&c| matrix.alphabet().index_of(Symbol::Char(c)).is_none())
        .collect();
    if !unknown.is_empty() {
        log::warn!("{} characters are not in the confusion matrix alphabet and are kept as-is: {:?}", unknown.len(), unknown);
    }
    let sentences = corpus
        .sentences()
        .iter()
        .enumerate()
        .map(|(i, s)| perturb_indexed(s, i, matrix, seed))
        .collect();
    corpus.with_sentences(sentences)
}
