//! Character confusion matrices over an alphabet extended with ε.
//!
//! Row `c` is the distribution of what a clean symbol `c` turns into. The
//! entry `(c, ε)` is a deletion, row `ε` restricted to real characters is the
//! insertion distribution and `(ε, ε)` is the probability of inserting
//! nothing at a slot.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rand::Rng;

use crate::alignment::{align, EditOp};
use crate::corpus::{Corpus, SentencePair};
use crate::error::NoiseError;

/// Literal used for ε in matrix files.
pub const EPSILON_LITERAL: &str = "<eps>";

const ROW_TOLERANCE: f64 = 1e-9;
const LOAD_TOLERANCE: f64 = 1e-6;

/// Label-preserving noise band: above this character error rate gold labels
/// stop being trustworthy.
pub const LABEL_PRESERVING_ETA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Char(char),
    Epsilon,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Char(c) => f.write_str(&escape_char(*c)),
            Symbol::Epsilon => f.write_str(EPSILON_LITERAL),
        }
    }
}

/// Sorted, deduplicated set of real characters. ε is implicit and always
/// indexed last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self, NoiseError> {
        let chars: Vec<char> = chars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if chars.len() < 2 {
            return Err(NoiseError::AlphabetTooSmall(chars.len()));
        }
        Ok(Alphabet { chars })
    }

    /// Every character occurring in the corpus tokens.
    pub fn from_corpus(corpus: &Corpus) -> Result<Self, NoiseError> {
        Alphabet::new(corpus.sentences().iter().flat_map(|s| s.tokens().iter().flat_map(|t| t.chars())))
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Number of real characters.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn epsilon_index(&self) -> usize {
        self.chars.len()
    }

    pub fn index_of(&self, sym: Symbol) -> Option<usize> {
        match sym {
            Symbol::Epsilon => Some(self.epsilon_index()),
            Symbol::Char(c) => self.chars.binary_search(&c).ok(),
        }
    }

    pub fn symbol(&self, index: usize) -> Symbol {
        if index == self.chars.len() {
            Symbol::Epsilon
        } else {
            Symbol::Char(self.chars[index])
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    alphabet: Alphabet,
    /// Row-major `(m+1) x (m+1)` probabilities.
    probs: Vec<f64>,
    /// Per-row cumulative sums, used for sampling.
    cdf: Vec<f64>,
}

impl PartialEq for ConfusionMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.probs == other.probs
    }
}

impl ConfusionMatrix {
    /// Builds a matrix from dense row-major probabilities, checking that all
    /// entries are non-negative and every row sums to one.
    pub fn from_dense(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self, NoiseError> {
        Self::validated(alphabet, probs, ROW_TOLERANCE, false)
    }

    fn validated(alphabet: Alphabet, mut probs: Vec<f64>, tol: f64, renormalize: bool) -> Result<Self, NoiseError> {
        let n = alphabet.len() + 1;
        assert_eq!(probs.len(), n * n, "dense matrix has wrong size");
        for r in 0..n {
            let row = &mut probs[r * n..(r + 1) * n];
            if let Some(&p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(NoiseError::BadProbability { row: alphabet.symbol(r).to_string(), prob: p });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(NoiseError::RowSum { row: alphabet.symbol(r).to_string(), sum });
            }
            if renormalize {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        let mut cdf = Vec::with_capacity(probs.len());
        for row in probs.chunks(n) {
            let mut acc = 0.0;
            cdf.extend(row.iter().map(|p| {
                acc += p;
                acc
            }));
        }
        Ok(ConfusionMatrix { alphabet, probs, cdf })
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        let n = alphabet.len() + 1;
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            probs[i * n + i] = 1.0;
        }
        Self::from_dense(alphabet, probs).expect("identity is row-stochastic")
    }

    /// Additively smoothed maximum-likelihood rows from raw counts. A row
    /// with no observations and no smoothing is rejected.
    pub fn from_counts(alphabet: Alphabet, counts: &[f64], smoothing: f64) -> Result<Self, NoiseError> {
        let n = alphabet.len() + 1;
        assert_eq!(counts.len(), n * n);
        let mut probs = vec![0.0; n * n];
        for r in 0..n {
            let row = &counts[r * n..(r + 1) * n];
            let total: f64 = row.iter().sum::<f64>() + smoothing * n as f64;
            if total <= 0.0 {
                return Err(NoiseError::DegenerateRow(alphabet.symbol(r).to_string()));
            }
            for (p, c) in probs[r * n..(r + 1) * n].iter_mut().zip(row) {
                *p = (c + smoothing) / total;
            }
        }
        Self::from_dense(alphabet, probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn width(&self) -> usize {
        self.alphabet.len() + 1
    }

    /// P(to | from); zero when either symbol is outside the alphabet.
    pub fn prob(&self, from: Symbol, to: Symbol) -> f64 {
        match (self.alphabet.index_of(from), self.alphabet.index_of(to)) {
            (Some(r), Some(c)) => self.probs[r * self.width() + c],
            _ => 0.0,
        }
    }

    /// Full distribution for `from` over Σ ∪ {ε}. Characters outside the
    /// alphabet map to a point mass on themselves.
    pub fn row(&self, from: Symbol) -> Vec<(Symbol, f64)> {
        match self.alphabet.index_of(from) {
            Some(r) => {
                let n = self.width();
                (0..n).map(|c| (self.alphabet.symbol(c), self.probs[r * n + c])).collect()
            }
            None => {
                log::warn!("symbol {from} is not in the confusion matrix alphabet; using identity");
                vec![(from, 1.0)]
            }
        }
    }

    /// Draws a replacement for `from`. Unknown characters are returned as-is.
    pub fn sample<R: Rng + ?Sized>(&self, from: Symbol, rng: &mut R) -> Symbol {
        let Some(r) = self.alphabet.index_of(from) else {
            return from;
        };
        let n = self.width();
        let cdf = &self.cdf[r * n..(r + 1) * n];
        // Point-mass rows (identity entries) need no randomness.
        if self.probs[r * n + r] == 1.0 {
            return from;
        }
        let u = rng.random::<f64>() * cdf[n - 1];
        let idx = cdf.partition_point(|&c| c <= u).min(n - 1);
        self.alphabet.symbol(idx)
    }

    /// Total deletion, substitution and insertion mass.
    pub fn edit_masses(&self, from: Symbol) -> EditMasses {
        let Some(r) = self.alphabet.index_of(from) else {
            return EditMasses::default();
        };
        let n = self.width();
        let eps = self.alphabet.epsilon_index();
        let row = &self.probs[r * n..(r + 1) * n];
        if r == eps {
            EditMasses { insertion: row[..eps].iter().sum(), ..Default::default() }
        } else {
            let substitution = row[..eps].iter().enumerate().filter(|(c, _)| *c != r).map(|(_, p)| p).sum();
            EditMasses { deletion: row[eps], substitution, insertion: 0.0 }
        }
    }

    /// Largest L1 distance between corresponding rows.
    pub fn max_row_l1(&self, other: &ConfusionMatrix) -> Option<f64> {
        if self.alphabet != other.alphabet {
            return None;
        }
        let n = self.width();
        (0..n)
            .map(|r| {
                self.probs[r * n..(r + 1) * n]
                    .iter()
                    .zip(&other.probs[r * n..(r + 1) * n])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .reduce(f64::max)
    }

    pub fn max_abs_diff(&self, other: &ConfusionMatrix) -> Option<f64> {
        if self.alphabet != other.alphabet {
            return None;
        }
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EditMasses {
    pub deletion: f64,
    pub substitution: f64,
    pub insertion: f64,
}

/// Parameters of the synthetic model where insertion, deletion and
/// substitution carry equal mass.
#[derive(Debug, Clone)]
pub struct VanillaNoiseSpec {
    pub eta: f64,
    pub alphabet: Alphabet,
}

impl VanillaNoiseSpec {
    pub fn new(eta: f64, alphabet: Alphabet) -> Result<Self, NoiseError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(NoiseError::EtaOutOfRange(eta));
        }
        if eta > LABEL_PRESERVING_ETA {
            log::warn!("noise level {eta} exceeds the label-preserving band of {LABEL_PRESERVING_ETA}");
        }
        Ok(VanillaNoiseSpec { eta, alphabet })
    }
}

/// Uniform synthetic channel: each edit type gets η/3, spread uniformly over
/// its candidates.
pub fn vanilla(spec: &VanillaNoiseSpec) -> Result<ConfusionMatrix, NoiseError> {
    let eta = spec.eta;
    if !(0.0..=1.0).contains(&eta) {
        return Err(NoiseError::EtaOutOfRange(eta));
    }
    let m = spec.alphabet.len();
    if m < 2 {
        return Err(NoiseError::AlphabetTooSmall(m));
    }
    let third = eta / 3.0;
    let n = m + 1;
    let subst = third / (m - 1) as f64;
    let ins = third / m as f64;
    let mut probs = vec![0.0; n * n];
    for r in 0..m {
        let row = &mut probs[r * n..(r + 1) * n];
        row[..m].fill(subst);
        row[r] = 1.0 - 2.0 * third;
        row[m] = third;
    }
    let eps_row = &mut probs[m * n..];
    eps_row[..m].fill(ins);
    eps_row[m] = 1.0 - third;
    ConfusionMatrix::from_dense(spec.alphabet.clone(), probs)
}

/// Estimates the channel from token-aligned noisy/clean pairs.
///
/// Each clean token of length K offers K+1 insertion slots; every slot not
/// consumed by an observed insertion counts as ε→ε. Characters seen only on
/// the noisy side keep an identity row.
pub fn estimate_natural(pairs: &[SentencePair], smoothing: f64) -> Result<ConfusionMatrix, NoiseError> {
    if pairs.is_empty() {
        return Err(NoiseError::NoPairs);
    }
    let alphabet = Alphabet::new(
        pairs
            .iter()
            .flat_map(|p| p.noisy.iter().chain(&p.clean))
            .flat_map(|t| t.chars()),
    )?;
    let n = alphabet.len() + 1;
    let eps = alphabet.epsilon_index();
    let idx = |c: char| alphabet.index_of(Symbol::Char(c)).expect("alphabet covers all pair characters");
    let mut counts = vec![0.0f64; n * n];

    for pair in pairs {
        for (noisy, clean) in pair.noisy.iter().zip(&pair.clean) {
            let alignment = align(clean, noisy);
            let mut inserts = 0usize;
            for op in &alignment.ops {
                match *op {
                    EditOp::Match(c) => counts[idx(c) * n + idx(c)] += 1.0,
                    EditOp::Substitute { from, to } => counts[idx(from) * n + idx(to)] += 1.0,
                    EditOp::Delete(c) => counts[idx(c) * n + eps] += 1.0,
                    EditOp::Insert(c) => {
                        counts[eps * n + idx(c)] += 1.0;
                        inserts += 1;
                    }
                }
            }
            let slots = clean.chars().count() + 1;
            counts[eps * n + eps] += slots.saturating_sub(inserts) as f64;
        }
    }

    for r in 0..eps {
        if counts[r * n..(r + 1) * n].iter().all(|&c| c == 0.0) && smoothing == 0.0 {
            counts[r * n + r] = 1.0;
        }
    }
    ConfusionMatrix::from_counts(alphabet, &counts, smoothing)
}

fn escape_char(c: char) -> String {
    if c == '\\' {
        "\\\\".to_string()
    } else if c.is_whitespace() || c.is_control() {
        format!("\\u{{{:x}}}", c as u32)
    } else {
        c.to_string()
    }
}

fn parse_symbol_run(s: &str, line: usize) -> Result<Vec<char>, NoiseError> {
    let err = |message: String| NoiseError::Parse { line, message };
    let mut out = Vec::new();
    let mut it = s.chars().peekable();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('u') => {
                if it.next() != Some('{') {
                    return Err(err("expected `{` after `\\u`".into()));
                }
                let hex: String = it.by_ref().take_while(|&c| c != '}').collect();
                let cp = u32::from_str_radix(&hex, 16).map_err(|_| err(format!("bad codepoint `{hex}`")))?;
                out.push(char::from_u32(cp).ok_or_else(|| err(format!("invalid codepoint {cp:#x}")))?);
            }
            Some(other) => return Err(err(format!("unknown escape `\\{other}`"))),
            None => return Err(err("dangling backslash".into())),
        }
    }
    Ok(out)
}

fn parse_symbol(s: &str, line: usize) -> Result<Symbol, NoiseError> {
    if s == EPSILON_LITERAL {
        return Ok(Symbol::Epsilon);
    }
    match parse_symbol_run(s, line)?.as_slice() {
        [c] => Ok(Symbol::Char(*c)),
        _ => Err(NoiseError::Parse { line, message: format!("expected a single character, got `{s}`") }),
    }
}

/// Serializes as `#alphabet<TAB>...` followed by non-zero `FROM<TAB>TO<TAB>PROB`
/// triples in row-major order.
pub fn save(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("#alphabet\t");
    for &c in matrix.alphabet.chars() {
        write!(out, "\\u{{{:x}}}", c as u32).unwrap();
    }
    out.push('\n');
    let n = matrix.width();
    for r in 0..n {
        for c in 0..n {
            let p = matrix.probs[r * n + c];
            if p != 0.0 {
                writeln!(out, "{}\t{}\t{}", matrix.alphabet.symbol(r), matrix.alphabet.symbol(c), p).unwrap();
            }
        }
    }
    out
}

pub fn load(text: &str) -> Result<ConfusionMatrix, NoiseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(NoiseError::Parse { line: 1, message: "empty matrix file".into() })?;
    let chars = header
        .strip_prefix("#alphabet\t")
        .ok_or(NoiseError::Parse { line: 1, message: "missing `#alphabet` header".into() })?;
    let alphabet = Alphabet::new(parse_symbol_run(chars, 1)?)?;
    let n = alphabet.len() + 1;
    let mut probs = vec![0.0; n * n];
    let mut seen = vec![false; n * n];

    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |message: String| NoiseError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [from, to, prob] = fields[..] else {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let from = parse_symbol(from, line_no)?;
        let to = parse_symbol(to, line_no)?;
        let r = alphabet.index_of(from).ok_or_else(|| err(format!("symbol {from} is not in the alphabet")))?;
        let c = alphabet.index_of(to).ok_or_else(|| err(format!("symbol {to} is not in the alphabet")))?;
        let p: f64 = prob.trim().parse().map_err(|_| err(format!("bad probability `{prob}`")))?;
        if std::mem::replace(&mut seen[r * n + c], true) {
            return Err(err(format!("duplicate entry {from} -> {to}")));
        }
        probs[r * n + c] = p;
    }
    ConfusionMatrix::validated(alphabet, probs, LOAD_TOLERANCE, true)
}
