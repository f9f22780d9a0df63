//! Training objectives and the training loop.
//!
//! Three objectives are available: the standard CRF likelihood `L0`, data
//! augmentation `L0(x) + α·L0(x̃)`, and stability training
//! `L0(x) + α·Σ KL(R(x_i) ‖ Q(x̃_i))`. `Both` adds the two noisy terms.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledSentence};
use crate::error::TrainError;
use crate::eval::evaluate;
use crate::noise::{self, vanilla, Alphabet, ConfusionMatrix, VanillaNoiseSpec};
use crate::perturb::{perturb_corpus, NoiseSeed};
use crate::rng::{derive_seed, stream};
use crate::tagger::{Gradients, Graph, ModelConfig, NodeId, TaggerModel, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Standard,
    Augment,
    Stability,
    Both,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Standard => "standard",
            Objective::Augment => "augment",
            Objective::Stability => "stability",
            Objective::Both => "both",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Objective::Standard),
            "augment" => Ok(Objective::Augment),
            "stability" => Ok(Objective::Stability),
            "both" => Ok(Objective::Both),
            other => Err(TrainError::Config(format!("unknown objective {other:?}"))),
        }
    }
}

/// Which distributions the stability term compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    /// Per-token softmax of the logits.
    #[default]
    Softmax,
    /// Per-token CRF marginals.
    CrfMarginals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub objective: Objective,
    /// Weight of the noisy term; for `both`, the weight of `L0(x̃)`.
    pub alpha: f64,
    /// Weight of the stability term under `both`; defaults to `alpha`.
    pub alpha_stability: Option<f64>,
    pub eta_train: f64,
    /// Confusion matrix file for training noise; the vanilla model with
    /// `eta_train` when absent.
    pub matrix: Option<PathBuf>,
    pub divergence: Divergence,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before the learning rate is annealed.
    pub patience: usize,
    pub anneal_factor: f64,
    /// Training stops once annealing pushes the learning rate below this.
    pub min_learning_rate: f64,
    /// Rescale batch gradients whose L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub resample_noise_each_epoch: bool,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            objective: Objective::Standard,
            alpha: 1.0,
            alpha_stability: None,
            eta_train: 0.1,
            matrix: None,
            divergence: Divergence::Softmax,
            learning_rate: 0.1,
            batch_size: 8,
            max_epochs: 100,
            patience: 3,
            anneal_factor: 0.5,
            min_learning_rate: 1e-4,
            clip_norm: Some(5.0),
            seed: 0,
            resample_noise_each_epoch: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let config: TrainingConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("training config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be a non-negative number, got {}", self.alpha));
        }
        if let Some(a) = self.alpha_stability {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("alpha_stability must be a non-negative number, got {a}"));
            }
        }
        if !(0.0..=1.0).contains(&self.eta_train) {
            return bad(format!("eta_train must lie in [0, 1], got {}", self.eta_train));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return bad(format!("anneal_factor must lie in (0, 1), got {}", self.anneal_factor));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.model.dropout));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        let m = &self.model;
        if m.word_dim == 0 || m.char_dim == 0 || m.char_hidden == 0 || m.hidden == 0 {
            return bad("model dimensions must be positive".into());
        }
        Ok(())
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            objective: self.objective,
            alpha: self.alpha,
            alpha_stability: self.alpha_stability.unwrap_or(self.alpha),
            divergence: self.divergence,
        }
    }
}

/// Objective and weights for one loss evaluation. `alpha` weighs the single
/// noisy term of `augment` and `stability`; under `both` it weighs
/// `L0(x̃)` and `alpha_stability` weighs the KL term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub objective: Objective,
    pub alpha: f64,
    pub alpha_stability: f64,
    pub divergence: Divergence,
}

impl LossSpec {
    pub fn standard() -> Self {
        LossSpec { objective: Objective::Standard, alpha: 0.0, alpha_stability: 0.0, divergence: Divergence::Softmax }
    }

    pub fn augment(alpha: f64) -> Self {
        LossSpec { objective: Objective::Augment, alpha, ..LossSpec::standard() }
    }

    pub fn stability(alpha: f64) -> Self {
        LossSpec { objective: Objective::Stability, alpha, ..LossSpec::standard() }
    }

    fn augment_weight(&self) -> f64 {
        match self.objective {
            Objective::Augment | Objective::Both => self.alpha,
            _ => 0.0,
        }
    }

    fn stability_weight(&self) -> f64 {
        match self.objective {
            Objective::Stability => self.alpha,
            Objective::Both => self.alpha_stability,
            _ => 0.0,
        }
    }

    /// Whether the loss looks at the noisy copy at all.
    pub fn needs_noise(&self) -> bool {
        self.augment_weight() > 0.0 || self.stability_weight() > 0.0
    }
}

/// Unweighted loss terms of one sentence and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub clean: f64,
    pub noisy: f64,
    pub similarity: f64,
}

impl LossParts {
    fn accumulate(&mut self, other: &LossParts) {
        self.total += other.total;
        self.clean += other.clean;
        self.noisy += other.noisy;
        self.similarity += other.similarity;
    }
}

fn check_pair(x: &LabeledSentence, x_tilde: &LabeledSentence) -> Result<(), TrainError> {
    if x.len() != x_tilde.len() {
        return Err(TrainError::LengthMismatch { clean: x.len(), noisy: x_tilde.len() });
    }
    Ok(())
}

/// Builds the loss graph of one sentence. Gold labels come from `x`.
pub fn build_loss(
    g: &mut Graph<'_>,
    model: &TaggerModel,
    spec: &LossSpec,
    x: &LabeledSentence,
    x_tilde: Option<&LabeledSentence>,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(NodeId, LossParts), TrainError> {
    let gold = model.gold_ids(x.labels());
    let clean_logits = model.logits_node(g, x.tokens(), dropout.as_deref_mut());
    let clean = model.nll_node(g, clean_logits, &gold);
    let mut parts = LossParts { clean: g.value(clean).get(0, 0), ..LossParts::default() };
    let mut root = clean;
    let (wa, ws) = (spec.augment_weight(), spec.stability_weight());
    if wa > 0.0 || ws > 0.0 {
        let x_tilde = x_tilde.ok_or_else(|| TrainError::Config(format!("objective {} needs a noisy copy", spec.objective)))?;
        check_pair(x, x_tilde)?;
        let noisy_logits = model.logits_node(g, x_tilde.tokens(), dropout.as_deref_mut());
        if wa > 0.0 {
            let noisy = model.nll_node(g, noisy_logits, &gold);
            parts.noisy = g.value(noisy).get(0, 0);
            let term = g.scale(noisy, wa);
            root = g.add(root, term);
        }
        if ws > 0.0 {
            let sim = match spec.divergence {
                Divergence::Softmax => g.softmax_kl(clean_logits, noisy_logits),
                Divergence::CrfMarginals => {
                    g.marginal_kl(clean_logits, noisy_logits, model.transitions_id(), model.transition_mask())
                }
            };
            parts.similarity = g.value(sim).get(0, 0);
            let term = g.scale(sim, ws);
            root = g.add(root, term);
        }
    }
    parts.total = g.value(root).get(0, 0);
    Ok((root, parts))
}

/// Loss value and parameter gradients of one sentence.
pub fn loss_and_gradients(
    model: &TaggerModel,
    spec: &LossSpec,
    x: &LabeledSentence,
    x_tilde: Option<&LabeledSentence>,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(LossParts, Gradients), TrainError> {
    let mut g = Graph::new(model.params());
    let (root, parts) = build_loss(&mut g, model, spec, x, x_tilde, dropout)?;
    Ok((parts, g.backward(root)?))
}

fn loss_value(model: &TaggerModel, spec: &LossSpec, x: &LabeledSentence, x_tilde: Option<&LabeledSentence>) -> Result<f64, TrainError> {
    let mut g = Graph::new(model.params());
    Ok(build_loss(&mut g, model, spec, x, x_tilde, None)?.1.total)
}

/// `L0(x, y)`, the negative CRF log-likelihood of the gold labels of `x`.
pub fn loss_standard(model: &TaggerModel, x: &LabeledSentence) -> f64 {
    loss_value(model, &LossSpec::standard(), x, None).expect("the standard loss needs no noisy copy")
}

/// `L0(x, y) + α·L0(x̃, y)`.
pub fn loss_augment(model: &TaggerModel, x: &LabeledSentence, x_tilde: &LabeledSentence, alpha: f64) -> Result<f64, TrainError> {
    check_pair(x, x_tilde)?;
    loss_value(model, &LossSpec::augment(alpha), x, Some(x_tilde))
}

/// `L0(x, y) + α·Σ_i KL(softmax(clean_i) ‖ softmax(noisy_i))`.
pub fn loss_stability(model: &TaggerModel, x: &LabeledSentence, x_tilde: &LabeledSentence, alpha: f64) -> Result<f64, TrainError> {
    check_pair(x, x_tilde)?;
    loss_value(model, &LossSpec::stability(alpha), x, Some(x_tilde))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Per-sentence means over the epoch.
    pub loss: LossParts,
    pub dev_f1_clean: f64,
    pub dev_f1_noisy: f64,
    pub dev_f1_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// One row per epoch. Wall-clock time is left out so that reruns are
    /// byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,learning_rate,loss_total,loss_clean,loss_noisy,loss_similarity,dev_f1_clean,dev_f1_noisy,dev_f1_mean,best\n",
        );
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.learning_rate,
                e.loss.total,
                e.loss.clean,
                e.loss.noisy,
                e.loss.similarity,
                e.dev_f1_clean,
                e.dev_f1_noisy,
                e.dev_f1_mean,
                u8::from(e.epoch == self.best_epoch)
            )
            .unwrap();
        }
        out
    }
}

const INIT_STREAM: u64 = 0;
const DEV_NOISE_STREAM: u64 = 1;
const TRAIN_NOISE_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const DROPOUT_STREAM: u64 = 4;

/// The confusion matrix a configuration trains with: the loaded file, or the
/// vanilla model over the characters of `corpus`.
pub fn training_matrix(config: &TrainingConfig, corpus: &Corpus) -> Result<ConfusionMatrix, TrainError> {
    match &config.matrix {
        Some(path) => {
            let err = |message: String| TrainError::MatrixFile { path: path.display().to_string(), message };
            let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            noise::load(&text).map_err(|e| err(e.to_string()))
        }
        None => Ok(vanilla(&VanillaNoiseSpec::new(config.eta_train, Alphabet::from_corpus(corpus)?)?)?),
    }
}

/// Trains with the matrix named by the configuration.
pub fn train(train_corpus: &Corpus, dev: &Corpus, config: &TrainingConfig) -> Result<(TaggerModel, TrainReport), TrainError> {
    config.validate()?;
    let matrix = training_matrix(config, train_corpus)?;
    train_with_matrix(train_corpus, dev, config, &matrix)
}

fn sgd_step(model: &mut TaggerModel, grads: &mut Gradients, lr: f64, clip: Option<f64>) {
    if let Some(c) = clip {
        let norm = grads.l2_norm();
        if norm > c {
            grads.scale(c / norm);
        }
    }
    let params = model.params_mut();
    for (id, g) in grads.iter() {
        params.get_mut(id).add_scaled(g, -lr);
    }
}

/// Mini-batch SGD with plateau annealing and early stopping on the mean of
/// clean and noisy dev F1. The dev copy is perturbed once with `matrix`.
pub fn train_with_matrix(
    train_corpus: &Corpus,
    dev: &Corpus,
    config: &TrainingConfig,
    matrix: &ConfusionMatrix,
) -> Result<(TaggerModel, TrainReport), TrainError> {
    config.validate()?;
    if train_corpus.is_empty() || dev.is_empty() {
        return Err(TrainError::Config("training and dev corpora must be non-empty".into()));
    }
    if train_corpus.label_inventory().is_empty() {
        return Err(TrainError::Config("the training corpus has no entity labels".into()));
    }
    let started = Instant::now();
    let spec = config.loss_spec();
    let seed = config.seed;
    let mut model = TaggerModel::new(Vocabulary::build(train_corpus), config.model.clone(), derive_seed(seed, INIT_STREAM));
    let dev_noisy = perturb_corpus(dev, matrix, NoiseSeed(derive_seed(seed, DEV_NOISE_STREAM)));
    let train_noise = derive_seed(seed, TRAIN_NOISE_STREAM);

    let mut lr = config.learning_rate;
    let mut best: Option<(f64, usize, TaggerModel)> = None;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_corpus.len()).collect();
    let mut grads = Gradients::zeros_like(model.params());

    for epoch in 1..=config.max_epochs {
        let noisy = spec.needs_noise().then(|| {
            let round = if config.resample_noise_each_epoch { epoch as u64 } else { 0 };
            perturb_corpus(train_corpus, matrix, NoiseSeed(derive_seed(train_noise, round)))
        });
        order.shuffle(&mut stream(derive_seed(derive_seed(seed, SHUFFLE_STREAM), epoch as u64)));
        let dropout_seed = derive_seed(derive_seed(seed, DROPOUT_STREAM), epoch as u64);

        let mut sum = LossParts::default();
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let x = &train_corpus.sentences()[i];
                let x_tilde = noisy.as_ref().map(|c| &c.sentences()[i]);
                let mut rng = stream(derive_seed(dropout_seed, i as u64));
                let mut g = Graph::new(model.params());
                let (root, parts) = build_loss(&mut g, &model, &spec, x, x_tilde, Some(&mut rng))?;
                if !parts.total.is_finite() {
                    return Err(TrainError::Diverged { epoch, loss: parts.total });
                }
                g.backward_into(root, &mut grads)?;
                sum.accumulate(&parts);
            }
            grads.scale(1.0 / batch.len() as f64);
            if !grads.is_finite() {
                return Err(TrainError::Diverged { epoch, loss: f64::NAN });
            }
            sgd_step(&mut model, &mut grads, lr, config.clip_norm);
        }

        let n = train_corpus.len() as f64;
        let loss = LossParts { total: sum.total / n, clean: sum.clean / n, noisy: sum.noisy / n, similarity: sum.similarity / n };
        let dev_f1_clean = evaluate(&model, dev).f1;
        let dev_f1_noisy = evaluate(&model, &dev_noisy).f1;
        let dev_f1_mean = (dev_f1_clean + dev_f1_noisy) / 2.0;
        log::info!(
            "epoch {epoch}: lr {lr:.4} loss {:.4} dev F1 clean {:.4} noisy {:.4}",
            loss.total,
            dev_f1_clean,
            dev_f1_noisy
        );
        epochs.push(EpochRecord { epoch, learning_rate: lr, loss, dev_f1_clean, dev_f1_noisy, dev_f1_mean });

        if best.as_ref().is_none_or(|(score, _, _)| dev_f1_mean > *score) {
            best = Some((dev_f1_mean, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                lr *= config.anneal_factor;
                stale = 0;
                if lr < config.min_learning_rate {
                    log::info!("learning rate fell below {}; stopping", config.min_learning_rate);
                    break;
                }
            }
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok((model, TrainReport { epochs, best_epoch, wall_clock: started.elapsed() }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub objective: Objective,
    pub alpha: f64,
    pub eta_train: f64,
    pub seed: u64,
    pub f1_clean: f64,
    pub f1_noisy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub objective: Objective,
    pub alpha: f64,
    pub eta_train: f64,
    pub seeds: usize,
    pub f1_clean: f64,
    pub f1_noisy: f64,
}

impl SweepTable {
    /// Per-seed rows: `objective,alpha,eta_train,seed,f1_clean,f1_noisy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("objective,alpha,eta_train,seed,f1_clean,f1_noisy\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", r.objective, r.alpha, r.eta_train, r.seed, r.f1_clean, r.f1_noisy).unwrap();
        }
        out
    }

    /// Seed means per (objective, α, η_train), in first-appearance order.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells: Vec<SweepCell> = Vec::new();
        for r in &self.rows {
            let key = |c: &SweepCell| c.objective == r.objective && c.alpha == r.alpha && c.eta_train == r.eta_train;
            match cells.iter_mut().find(|c| key(c)) {
                Some(c) => {
                    c.seeds += 1;
                    c.f1_clean += r.f1_clean;
                    c.f1_noisy += r.f1_noisy;
                }
                None => cells.push(SweepCell {
                    objective: r.objective,
                    alpha: r.alpha,
                    eta_train: r.eta_train,
                    seeds: 1,
                    f1_clean: r.f1_clean,
                    f1_noisy: r.f1_noisy,
                }),
            }
        }
        for c in &mut cells {
            c.f1_clean /= c.seeds as f64;
            c.f1_noisy /= c.seeds as f64;
        }
        cells
    }

    /// `objective,alpha,eta_train,seeds,f1_clean_mean,f1_noisy_mean`.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("objective,alpha,eta_train,seeds,f1_clean_mean,f1_noisy_mean\n");
        for c in self.cells() {
            writeln!(out, "{},{},{},{},{},{}", c.objective, c.alpha, c.eta_train, c.seeds, c.f1_clean, c.f1_noisy).unwrap();
        }
        out
    }
}

/// Grid and evaluation settings for [`sensitivity_sweep`].
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub objective: Objective,
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Noise applied to the test set, once, with `eval_seed`.
    pub test_matrix: ConfusionMatrix,
    pub eval_seed: u64,
}

/// Trains one model per (α, η_train, seed) and scores it on the clean test
/// set and its perturbed copy. The per-cell configuration is `base` with
/// `objective`, `alpha`, `eta_train` and `seed` replaced.
pub fn sensitivity_sweep(
    train_corpus: &Corpus,
    dev: &Corpus,
    test: &Corpus,
    base: &TrainingConfig,
    spec: &SweepSpec,
) -> Result<SweepTable, TrainError> {
    if spec.alphas.is_empty() || spec.etas.is_empty() || spec.seeds.is_empty() {
        return Err(TrainError::Config("the sweep grid is empty".into()));
    }
    let noisy_test = perturb_corpus(test, &spec.test_matrix, NoiseSeed(spec.eval_seed));
    let mut rows = Vec::new();
    for &alpha in &spec.alphas {
        for &eta_train in &spec.etas {
            for &seed in &spec.seeds {
                let config = TrainingConfig { objective: spec.objective, alpha, eta_train, seed, ..base.clone() };
                let (model, _) = train(train_corpus, dev, &config)?;
                let f1_clean = evaluate(&model, test).f1;
                let f1_noisy = evaluate(&model, &noisy_test).f1;
                log::info!("{} alpha {alpha} eta {eta_train} seed {seed}: clean {f1_clean:.4} noisy {f1_noisy:.4}", spec.objective);
                rows.push(SweepRow { objective: spec.objective, alpha, eta_train, seed, f1_clean, f1_noisy });
            }
        }
    }
    Ok(SweepTable { rows })
}
