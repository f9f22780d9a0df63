use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid label `{0}`")]
    BadLabel(String),
    #[error("invalid token `{0}`")]
    BadToken(String),
    #[error("sentence has {tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("sentence must contain at least one token")]
    EmptySentence,
    #[error("corpus contains no sentences")]
    EmptyCorpus,
    #[error("pair {index}: noisy side has {noisy} tokens, clean side has {clean}")]
    PairMismatch { index: usize, noisy: usize, clean: usize },
    #[error("unknown tagging scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("character error rate is undefined for an empty reference")]
    EmptyReference,
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("alphabet needs at least 2 characters, got {0}")]
    AlphabetTooSmall(usize),
    #[error("noise level {0} outside [0, 1]")]
    EtaOutOfRange(f64),
    #[error("no sentence pairs to estimate from")]
    NoPairs,
    #[error("row `{0}` has no counts and smoothing is zero")]
    DegenerateRow(String),
    #[error("row `{row}` sums to {sum}, expected 1")]
    RowSum { row: String, sum: f64 },
    #[error("negative or non-finite probability {prob} in row `{row}`")]
    BadProbability { row: String, prob: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum AutogradError {
    #[error("backward requires a scalar root, got shape {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("cannot read confusion matrix {path}: {message}")]
    MatrixFile { path: String, message: String },
    #[error("clean and noisy sentences differ in length ({clean} vs {noisy})")]
    LengthMismatch { clean: usize, noisy: usize },
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("expected {expected} sentences, got {found}")]
    SentenceCount { expected: usize, found: usize },
    #[error("sentence {index}: expected {expected} tokens, got {found}")]
    TokenCount { index: usize, expected: usize, found: usize },
    #[error("at least one seed is required")]
    NoSeeds,
}
