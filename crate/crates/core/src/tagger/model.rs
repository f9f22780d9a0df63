//! BiLSTM-CRF tagger with word and character embeddings.
//!
//! A token vector is `[word_embedding(word or UNK); char_encoder(token)]`,
//! where the character encoder concatenates the final states of a forward
//! and a backward LSTM over the token's character embeddings. A word-level
//! BiLSTM, a linear projection to label logits and a CRF complete the model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crf;
use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::vocab::Vocabulary;
use crate::corpus::Label;
use crate::error::ModelError;
use crate::rng::stream;

pub const CHECKPOINT_FORMAT: &str = "nat-tagger";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Hidden size of each character LSTM direction.
    pub char_hidden: usize,
    /// Hidden size of each word LSTM direction.
    pub hidden: usize,
    /// Dropout on encoder inputs and outputs during training.
    pub dropout: f64,
    /// Forbid scheme-illegal CRF transitions.
    pub mask_transitions: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { word_dim: 100, char_dim: 25, char_hidden: 25, hidden: 256, dropout: 0.5, mask_transitions: false }
    }
}

impl ModelConfig {
    /// Small dimensions for tests and desk-scale experiments.
    pub fn toy() -> Self {
        ModelConfig { word_dim: 16, char_dim: 8, char_hidden: 8, hidden: 16, dropout: 0.0, mask_transitions: false }
    }

    pub fn token_dim(&self) -> usize {
        self.word_dim + 2 * self.char_hidden
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ids {
    word_emb: ParamId,
    char_emb: ParamId,
    char_fwd_w: ParamId,
    char_fwd_b: ParamId,
    char_bwd_w: ParamId,
    char_bwd_b: ParamId,
    word_fwd_w: ParamId,
    word_fwd_b: ParamId,
    word_bwd_w: ParamId,
    word_bwd_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    transitions: ParamId,
}

/// Per-token label logits, `N x |labels|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsMatrix(Tensor);

impl LogitsMatrix {
    pub fn new(t: Tensor) -> Self {
        LogitsMatrix(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn num_labels(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
    ids: Ids,
    mask: Option<Tensor>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

fn lstm_bias(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros(1, 4 * hidden);
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    b
}

impl TaggerModel {
    pub fn new(vocab: Vocabulary, config: ModelConfig, seed: u64) -> Self {
        let mut rng = stream(seed);
        let c = &config;
        let labels = vocab.num_labels();
        let mut p = ParamStore::new();
        let word_emb = p.add("word_embedding", uniform(&mut rng, vocab.num_words(), c.word_dim, (3.0 / c.word_dim as f64).sqrt()));
        let char_emb = p.add("char_embedding", uniform(&mut rng, vocab.num_chars(), c.char_dim, (3.0 / c.char_dim as f64).sqrt()));
        let cs = 1.0 / (c.char_hidden as f64).sqrt();
        let char_in = c.char_dim + c.char_hidden;
        let char_fwd_w = p.add("char_lstm_fwd.weight", uniform(&mut rng, 4 * c.char_hidden, char_in, cs));
        let char_fwd_b = p.add("char_lstm_fwd.bias", lstm_bias(c.char_hidden));
        let char_bwd_w = p.add("char_lstm_bwd.weight", uniform(&mut rng, 4 * c.char_hidden, char_in, cs));
        let char_bwd_b = p.add("char_lstm_bwd.bias", lstm_bias(c.char_hidden));
        let ws = 1.0 / (c.hidden as f64).sqrt();
        let word_in = c.token_dim() + c.hidden;
        let word_fwd_w = p.add("word_lstm_fwd.weight", uniform(&mut rng, 4 * c.hidden, word_in, ws));
        let word_fwd_b = p.add("word_lstm_fwd.bias", lstm_bias(c.hidden));
        let word_bwd_w = p.add("word_lstm_bwd.weight", uniform(&mut rng, 4 * c.hidden, word_in, ws));
        let word_bwd_b = p.add("word_lstm_bwd.bias", lstm_bias(c.hidden));
        let ps = 1.0 / ((2 * c.hidden) as f64).sqrt();
        let proj_w = p.add("projection.weight", uniform(&mut rng, labels, 2 * c.hidden, ps));
        let proj_b = p.add("projection.bias", Tensor::zeros(1, labels));
        let transitions = p.add("crf.transitions", uniform(&mut rng, labels + 2, labels + 2, 0.1));
        let ids = Ids {
            word_emb,
            char_emb,
            char_fwd_w,
            char_fwd_b,
            char_bwd_w,
            char_bwd_b,
            word_fwd_w,
            word_fwd_b,
            word_bwd_w,
            word_bwd_b,
            proj_w,
            proj_b,
            transitions,
        };
        let mask = config
            .mask_transitions
            .then(|| Tensor::from_vec(labels + 2, labels + 2, vocab.transition_mask()));
        TaggerModel { config, vocab, params: p, ids, mask }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_labels(&self) -> usize {
        self.vocab.num_labels()
    }

    pub fn transitions_id(&self) -> ParamId {
        self.ids.transitions
    }

    pub fn projection_ids(&self) -> (ParamId, ParamId) {
        (self.ids.proj_w, self.ids.proj_b)
    }

    pub fn word_embedding_id(&self) -> ParamId {
        self.ids.word_emb
    }

    /// Transition scores as used by the CRF, including the mask if enabled.
    pub fn effective_transitions(&self) -> Tensor {
        let mut t = self.params.get(self.ids.transitions).clone();
        if let Some(m) = &self.mask {
            t.add_assign(m);
        }
        t
    }

    pub(crate) fn transition_mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }

    /// Token vectors `N x (word_dim + 2 char_hidden)`.
    pub fn embed(&self, g: &mut Graph<'_>, tokens: &[String]) -> NodeId {
        assert!(!tokens.is_empty(), "cannot embed an empty sentence");
        let word_ids: Vec<usize> = tokens.iter().map(|t| self.vocab.word_id(t)).collect();
        let words = g.gather(self.ids.word_emb, &word_ids);
        let mut char_vecs = Vec::with_capacity(tokens.len());
        for token in tokens {
            let char_ids: Vec<usize> = token.chars().map(|c| self.vocab.char_id(c)).collect();
            let chars = g.gather(self.ids.char_emb, &char_ids);
            let fwd = g.lstm(chars, self.ids.char_fwd_w, self.ids.char_fwd_b, false);
            let bwd = g.lstm(chars, self.ids.char_bwd_w, self.ids.char_bwd_b, true);
            let last = g.select_row(fwd, char_ids.len() - 1);
            let first = g.select_row(bwd, 0);
            char_vecs.push(g.concat_cols(&[last, first]));
        }
        let chars = g.stack_rows(&char_vecs);
        g.concat_cols(&[words, chars])
    }

    fn dropout(&self, g: &mut Graph<'_>, x: NodeId, rng: &mut Option<&mut ChaCha8Rng>) -> NodeId {
        let rate = self.config.dropout;
        match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let n = g.value(x).data().len();
                let mask = (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                g.mask(x, mask)
            }
            _ => x,
        }
    }

    /// Builds the logits node. Dropout is applied only when a stream is given.
    pub fn logits_node(&self, g: &mut Graph<'_>, tokens: &[String], mut dropout: Option<&mut ChaCha8Rng>) -> NodeId {
        let e = self.embed(g, tokens);
        let e = self.dropout(g, e, &mut dropout);
        let fwd = g.lstm(e, self.ids.word_fwd_w, self.ids.word_fwd_b, false);
        let bwd = g.lstm(e, self.ids.word_bwd_w, self.ids.word_bwd_b, true);
        let h = g.concat_cols(&[fwd, bwd]);
        let h = self.dropout(g, h, &mut dropout);
        g.linear(h, self.ids.proj_w, self.ids.proj_b)
    }

    /// Negative CRF log-likelihood of `gold` label ids.
    pub fn nll_node(&self, g: &mut Graph<'_>, logits: NodeId, gold: &[usize]) -> NodeId {
        g.crf_nll(logits, self.ids.transitions, gold, self.mask.as_ref())
    }

    /// Inference-mode logits.
    pub fn forward(&self, tokens: &[String]) -> LogitsMatrix {
        let mut g = Graph::new(&self.params);
        let l = self.logits_node(&mut g, tokens, None);
        LogitsMatrix(g.value(l).clone())
    }

    pub fn decode_ids(&self, tokens: &[String]) -> Vec<usize> {
        crf::viterbi_decode(self.forward(tokens).tensor(), &self.effective_transitions())
    }

    pub fn decode(&self, tokens: &[String]) -> Vec<Label> {
        self.decode_ids(tokens).into_iter().map(|i| self.vocab.label(i).clone()).collect()
    }

    /// Label ids for a gold sequence; labels outside the inventory map to id 0.
    pub fn gold_ids(&self, labels: &[Label]) -> Vec<usize> {
        labels.iter().map(|l| self.vocab.label_id(l).unwrap_or(0)).collect()
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocabulary: self.vocab.clone(),
            params: self
                .params
                .iter()
                .map(|(_, name, t)| ParamRecord { name: name.to_string(), rows: t.rows(), cols: t.cols(), data: t.data().to_vec() })
                .collect(),
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Inconsistent(format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Version { found: ckpt.version, expected: CHECKPOINT_VERSION });
        }
        let mut model = TaggerModel::new(ckpt.vocabulary, ckpt.config, 0);
        if ckpt.params.len() != model.params.len() {
            return Err(ModelError::Inconsistent(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                ckpt.params.len()
            )));
        }
        let ids: Vec<ParamId> = model.params.ids().collect();
        for (id, rec) in ids.into_iter().zip(ckpt.params) {
            let name = model.params.name(id).to_string();
            let shape = model.params.get(id).shape();
            if rec.name != name || (rec.rows, rec.cols) != shape || rec.data.len() != rec.rows * rec.cols {
                return Err(ModelError::Inconsistent(format!("parameter `{}` does not match `{name}` {shape:?}", rec.name)));
            }
            *model.params.get_mut(id) = Tensor::from_vec(rec.rows, rec.cols, rec.data);
        }
        Ok(model)
    }
}

/// On-disk checkpoint: a JSON object holding the format tag, version, model
/// dimensions, vocabulary and every parameter tensor in row-major order.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    vocabulary: Vocabulary,
    params: Vec<ParamRecord>,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}
