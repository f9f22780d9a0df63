//! Reference implementations and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use nat_core::corpus::Tag;
use nat_core::noise::{Alphabet, ConfusionMatrix};
use nat_core::tagger::{Tensor, TaggerModel, Vocabulary};
use nat_core::training::{loss_and_gradients, LossSpec};
use nat_core::{parse_conll, Corpus, Label, LabeledSentence, ModelConfig, Scheme};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Edit distance straight from its recursive definition, memoized on suffix
/// lengths.
pub fn brute_levenshtein(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        let key = (a.len(), b.len());
        if let Some(&d) = memo.get(&key) {
            return d;
        }
        let d = match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                let sub = go(ra, rb, memo) + usize::from(ca != cb);
                sub.min(go(ra, b, memo) + 1).min(go(a, rb, memo) + 1)
            }
        };
        memo.insert(key, d);
        d
    }
    go(a, b, &mut HashMap::new())
}

pub fn random_string(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// Every label sequence of the given length, in lexicographic order.
pub fn all_paths(steps: usize, labels: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..steps {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..labels).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Path score with START = L and STOP = L + 1 in an `(L+2)²` transition
/// matrix.
pub fn brute_path_score(em: &Tensor, trans: &Tensor, path: &[usize]) -> f64 {
    let l = em.cols();
    let mut s = trans.get(l, path[0]) + trans.get(path[path.len() - 1], l + 1);
    for (t, &y) in path.iter().enumerate() {
        s += em.get(t, y);
        if t > 0 {
            s += trans.get(path[t - 1], y);
        }
    }
    s
}

/// `(log Z, argmax path)` by enumeration.
pub fn brute_crf(em: &Tensor, trans: &Tensor) -> (f64, Vec<usize>) {
    let scores: Vec<(f64, Vec<usize>)> =
        all_paths(em.rows(), em.cols()).into_iter().map(|p| (brute_path_score(em, trans, &p), p)).collect();
    let max = scores.iter().map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|(s, _)| (s - max).exp()).sum::<f64>().ln();
    let best = scores.iter().fold(&scores[0], |b, c| if c.0 > b.0 { c } else { b });
    (log_z, best.1.clone())
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

/// A few sentences over O, B-PER, I-PER, B-LOC.
pub fn toy_corpus() -> Corpus {
    parse_conll(
        "Ann\tB-PER\nLee\tI-PER\nran\tO\n\nin\tO\nRome\tB-LOC\nnow\tO\n\nBo\tB-PER\nsaw\tO\nOslo\tB-LOC\n",
        Scheme::Bio,
    )
    .unwrap()
}

pub fn toy_labels() -> Vec<Label> {
    vec![
        Label::outside(),
        Label::new(Tag::B, "PER").unwrap(),
        Label::new(Tag::I, "PER").unwrap(),
        Label::new(Tag::B, "LOC").unwrap(),
    ]
}

/// Word and character dimensions 4, word LSTM hidden size 5, four labels.
pub fn toy_model(seed: u64) -> TaggerModel {
    let config = ModelConfig { word_dim: 4, char_dim: 4, char_hidden: 3, hidden: 5, dropout: 0.0, mask_transitions: false };
    TaggerModel::new(Vocabulary::with_labels(&toy_corpus(), toy_labels()), config, seed)
}

/// A three-token sentence and a perturbed copy with an unknown word.
pub fn toy_pair() -> (LabeledSentence, LabeledSentence) {
    let x = toy_corpus().sentences()[1].clone();
    let x_tilde = x.with_tokens(vec!["im".into(), "Rone".into(), "now".into()]).unwrap();
    (x, x_tilde)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Max relative error per parameter tensor, by name.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`: relative for ordinary gradients and
/// absolute for ones that vanish.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-6;

/// Central differences with step `h` against the analytic gradient, on every
/// scalar of every parameter tensor.
pub fn grad_check(model: &TaggerModel, spec: &LossSpec, x: &LabeledSentence, x_tilde: Option<&LabeledSentence>, h: f64) -> GradCheck {
    let (_, grads) = loss_and_gradients(model, spec, x, x_tilde, None).unwrap();
    let loss = |m: &TaggerModel| loss_and_gradients(m, spec, x, x_tilde, None).unwrap().0.total;
    let mut probe = model.clone();
    let mut per_tensor = Vec::new();
    let mut checked = 0;
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let mut worst: f64 = 0.0;
        for k in 0..model.params().get(id).data().len() {
            let orig = probe.params().get(id).data()[k];
            probe.params_mut().get_mut(id).data_mut()[k] = orig + h;
            let up = loss(&probe);
            probe.params_mut().get_mut(id).data_mut()[k] = orig - h;
            let down = loss(&probe);
            probe.params_mut().get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads.get(id).data()[k], numeric, REL_FLOOR));
            checked += 1;
        }
        per_tensor.push((model.params().name(id).to_string(), worst));
    }
    GradCheck { per_tensor, checked }
}

/// A diagonal-dominant channel over 12 characters with randomly spread edit
/// mass.
pub fn known_matrix(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    let alphabet = Alphabet::new("abcdefghijkl".chars()).unwrap();
    let n = alphabet.len() + 1;
    let mut probs = vec![0.0; n * n];
    for r in 0..n {
        let keep = if r == n - 1 { 0.95 } else { 0.88 };
        let weights: Vec<f64> = (0..n).map(|c| if c == r { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
        let total: f64 = weights.iter().sum();
        for c in 0..n {
            probs[r * n + c] = if c == r { keep } else { (1.0 - keep) * weights[c] / total };
        }
    }
    ConfusionMatrix::from_dense(alphabet, probs).unwrap()
}

/// [`toy_model`] with scheme-illegal transitions masked out.
pub fn toy_model_masked(seed: u64) -> TaggerModel {
    let config = ModelConfig { word_dim: 4, char_dim: 4, char_hidden: 3, hidden: 5, dropout: 0.0, mask_transitions: true };
    TaggerModel::new(Vocabulary::with_labels(&toy_corpus(), toy_labels()), config, seed)
}
