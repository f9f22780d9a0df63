mod common;

use nat_core::eval::evaluate;
use nat_core::noise::{Alphabet, VanillaNoiseSpec};
use nat_core::synth::generate_splits;
use nat_core::tagger::Tensor;
use nat_core::training::{
    loss_standard, sensitivity_sweep, train, train_with_matrix, Objective, SweepSpec, TrainingConfig,
};
use nat_core::{parse_conll, vanilla, Corpus, ModelConfig, Scheme, TaggerModel, TrainError, Vocabulary};

fn small_config(objective: Objective, epochs: usize) -> TrainingConfig {
    TrainingConfig { objective, max_epochs: epochs, model: ModelConfig::toy(), seed: 9, ..TrainingConfig::default() }
}

fn tiny_splits() -> (Corpus, Corpus) {
    let s = generate_splits(60, 20, 0, 4, Scheme::Bioes);
    (s.train, s.dev)
}

#[test]
fn uniform_logits_give_log_k() {
    let c = parse_conll("Rome\tS-LOC\n", Scheme::Bioes).unwrap();
    let mut m = TaggerModel::new(Vocabulary::build(&c), ModelConfig::toy(), 1);
    let (w, b) = m.projection_ids();
    let t = m.transitions_id();
    for id in [w, b, t] {
        let (r, cols) = m.params().get(id).shape();
        *m.params_mut().get_mut(id) = Tensor::zeros(r, cols);
    }
    let k = m.num_labels() as f64;
    assert!((loss_standard(&m, &c.sentences()[0]) - k.ln()).abs() < 1e-12);
}

#[test]
fn separating_logits_drive_loss_to_zero() {
    let c = parse_conll("Rome\tS-LOC\n", Scheme::Bioes).unwrap();
    let mut m = TaggerModel::new(Vocabulary::build(&c), ModelConfig::toy(), 1);
    let (w, b) = m.projection_ids();
    let (r, cols) = m.params().get(w).shape();
    *m.params_mut().get_mut(w) = Tensor::zeros(r, cols);
    let gold = m.gold_ids(c.sentences()[0].labels())[0];
    m.params_mut().get_mut(b).data_mut()[gold] = 60.0;
    assert!(loss_standard(&m, &c.sentences()[0]) < 1e-20);
}

#[test]
fn loss_decreases_on_memorization_corpus() {
    let c = generate_splits(10, 0, 0, 2, Scheme::Bioes).train;
    let config = TrainingConfig { batch_size: 1, learning_rate: 0.05, ..small_config(Objective::Standard, 6) };
    let (_, report) = train(&c, &c, &config).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.loss.clean).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn augmented_training_memorizes_twenty_sentences() {
    let c = generate_splits(20, 0, 0, 5, Scheme::Bioes).train;
    let config = TrainingConfig { batch_size: 1, alpha: 1.0, eta_train: 0.1, patience: 100, ..small_config(Objective::Augment, 40) };
    let (model, _) = train(&c, &c, &config).unwrap();
    assert_eq!(evaluate(&model, &c).f1, 1.0);
}

#[test]
fn training_is_deterministic() {
    let (tr, dev) = tiny_splits();
    let config = TrainingConfig { model: ModelConfig { dropout: 0.3, ..ModelConfig::toy() }, ..small_config(Objective::Stability, 3) };
    let (m1, r1) = train(&tr, &dev, &config).unwrap();
    let (m2, r2) = train(&tr, &dev, &config).unwrap();
    assert_eq!(r1.epochs, r2.epochs);
    assert_eq!(r1.to_csv(), r2.to_csv());
    assert_eq!(m1.params(), m2.params());
}

#[test]
fn zero_alpha_matches_standard_training() {
    let (tr, dev) = tiny_splits();
    let (base, rb) = train(&tr, &dev, &small_config(Objective::Standard, 3)).unwrap();
    for objective in [Objective::Augment, Objective::Stability, Objective::Both] {
        let config = TrainingConfig { alpha: 0.0, alpha_stability: Some(0.0), ..small_config(objective, 3) };
        let (m, r) = train(&tr, &dev, &config).unwrap();
        assert_eq!(r.epochs, rb.epochs, "{objective}");
        assert_eq!(m.params(), base.params());
    }
}

#[test]
fn best_epoch_maximizes_mean_dev_f1() {
    let (tr, dev) = tiny_splits();
    let (model, report) = train(&tr, &dev, &small_config(Objective::Augment, 6)).unwrap();
    let best = report.epochs.iter().map(|e| e.dev_f1_mean).fold(f64::NEG_INFINITY, f64::max);
    let first_best = report.epochs.iter().position(|e| e.dev_f1_mean == best).unwrap() + 1;
    assert_eq!(report.best_epoch, first_best);
    for e in &report.epochs {
        assert_eq!(e.dev_f1_mean, (e.dev_f1_clean + e.dev_f1_noisy) / 2.0);
    }
    assert_eq!(evaluate(&model, &dev).f1, report.best().dev_f1_clean);
    assert!(report.epochs.len() <= 6);
}

#[test]
fn standard_objective_still_scores_noisy_dev() {
    let (tr, dev) = tiny_splits();
    let noisy = TrainingConfig { eta_train: 0.3, max_epochs: 1, ..small_config(Objective::Standard, 1) };
    let (_, report) = train(&tr, &dev, &noisy).unwrap();
    let (_, quiet) = train(&tr, &dev, &TrainingConfig { eta_train: 0.0, ..noisy.clone() }).unwrap();
    let (e, q) = (&report.epochs[0], &quiet.epochs[0]);
    assert_eq!((e.loss, e.dev_f1_clean), (q.loss, q.dev_f1_clean));
    assert_eq!((e.loss.noisy, e.loss.similarity), (0.0, 0.0));
    assert_eq!(q.dev_f1_noisy, q.dev_f1_clean);
}

#[test]
fn augment_report_has_both_loss_components() {
    let (tr, dev) = tiny_splits();
    let (_, report) = train(&tr, &dev, &small_config(Objective::Augment, 2)).unwrap();
    assert!(report.epochs.iter().all(|e| e.loss.clean > 0.0 && e.loss.noisy > 0.0));
    assert!(report.to_csv().starts_with("epoch,learning_rate,loss_total,loss_clean,loss_noisy,"));
}

#[test]
fn corpus_without_entities_is_a_config_error() {
    let c = parse_conll("a\tO\nb\tO\n", Scheme::Bioes).unwrap();
    assert!(matches!(train(&c, &c, &small_config(Objective::Standard, 1)), Err(TrainError::Config(_))));
}

#[test]
fn missing_matrix_file_is_reported() {
    let (tr, dev) = tiny_splits();
    let config = TrainingConfig { matrix: Some("/nonexistent/matrix.tsv".into()), ..small_config(Objective::Augment, 1) };
    let err = train(&tr, &dev, &config).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/matrix.tsv"));
}

fn sweep_spec(test: &Corpus, alphas: Vec<f64>, etas: Vec<f64>) -> SweepSpec {
    SweepSpec {
        objective: Objective::Augment,
        alphas,
        etas,
        seeds: vec![1],
        test_matrix: vanilla(&VanillaNoiseSpec::new(0.1, Alphabet::from_corpus(test).unwrap()).unwrap()).unwrap(),
        eval_seed: 77,
    }
}

#[test]
fn sweep_baseline_cell_and_purity() {
    let s = generate_splits(40, 15, 20, 6, Scheme::Bioes);
    let base = small_config(Objective::Standard, 2);

    let zero = sensitivity_sweep(&s.train, &s.dev, &s.test, &base, &sweep_spec(&s.test, vec![0.0], vec![0.0])).unwrap();
    let config = TrainingConfig { eta_train: 0.0, seed: 1, ..base.clone() };
    let (model, _) = train(&s.train, &s.dev, &config).unwrap();
    assert_eq!(zero.rows.len(), 1);
    assert_eq!(zero.rows[0].f1_clean, evaluate(&model, &s.test).f1);

    let forward = sensitivity_sweep(&s.train, &s.dev, &s.test, &base, &sweep_spec(&s.test, vec![0.5, 1.0], vec![0.1])).unwrap();
    let backward = sensitivity_sweep(&s.train, &s.dev, &s.test, &base, &sweep_spec(&s.test, vec![1.0, 0.5], vec![0.1])).unwrap();
    assert_eq!(forward.rows.len(), 2);
    assert_eq!(forward.rows[0], backward.rows[1]);
    assert_eq!(forward.rows[1], backward.rows[0]);
    assert!(forward.to_csv().starts_with("objective,alpha,eta_train,seed,f1_clean,f1_noisy\naugment,0.5,0.1,1,"));
    assert_eq!(forward.cells().len(), 2);
}

#[test]
fn empty_sweep_grid_is_rejected() {
    let s = generate_splits(10, 5, 5, 6, Scheme::Bioes);
    let spec = sweep_spec(&s.test, vec![], vec![0.1]);
    assert!(sensitivity_sweep(&s.train, &s.dev, &s.test, &small_config(Objective::Augment, 1), &spec).is_err());
}

#[test]
fn explicit_matrix_training_matches_vanilla_config() {
    let (tr, dev) = tiny_splits();
    let config = small_config(Objective::Augment, 2);
    let m = vanilla(&VanillaNoiseSpec::new(config.eta_train, Alphabet::from_corpus(&tr).unwrap()).unwrap()).unwrap();
    let (_, a) = train(&tr, &dev, &config).unwrap();
    let (_, b) = train_with_matrix(&tr, &dev, &config, &m).unwrap();
    assert_eq!(a.epochs, b.epochs);
}
