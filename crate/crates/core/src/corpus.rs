//! Column-format labeled corpora and paired noisy/clean text.
//!
//! Input is accepted liberally (any whitespace run separates columns, extra
//! middle columns are ignored, `-DOCSTART-` lines are dropped) and written
//! canonically (tab separator, one blank line after every sentence).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::CorpusError;
use crate::spans::{decode_spans, encode_spans};

/// Tagging scheme used to encode entity spans token by token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bio,
    Bioes,
}

impl FromStr for Scheme {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bio" => Ok(Scheme::Bio),
            "bioes" => Ok(Scheme::Bioes),
            _ => Err(CorpusError::UnknownScheme(s.to_string())),
        }
    }
}

/// Position of a token inside an entity mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    B,
    I,
    O,
    E,
    S,
}

impl Tag {
    fn as_char(self) -> char {
        match self {
            Tag::B => 'B',
            Tag::I => 'I',
            Tag::O => 'O',
            Tag::E => 'E',
            Tag::S => 'S',
        }
    }
}

/// A token label such as `B-PER` or `O`.
///
/// `O` never carries a class; every other tag carries a non-empty uppercase
/// identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    tag: Tag,
    class: String,
}

impl Label {
    pub fn outside() -> Self {
        Label { tag: Tag::O, class: String::new() }
    }

    pub fn new(tag: Tag, class: &str) -> Result<Self, CorpusError> {
        match tag {
            Tag::O if class.is_empty() => Ok(Label::outside()),
            Tag::O => Err(CorpusError::BadLabel(format!("O-{class}"))),
            _ if is_class_identifier(class) => Ok(Label { tag, class: class.to_string() }),
            _ => Err(CorpusError::BadLabel(format!("{}-{class}", tag.as_char()))),
        }
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    /// Entity class, or `None` for `O`.
    pub fn class(&self) -> Option<&str> {
        if self.tag == Tag::O {
            None
        } else {
            Some(&self.class)
        }
    }

    pub fn is_outside(&self) -> bool {
        self.tag == Tag::O
    }
}

fn is_class_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadLabel(s.to_string());
        let (tag_str, class) = match s.split_once('-') {
            Some((t, c)) => (t, c),
            None => (s, ""),
        };
        let tag = match tag_str {
            "B" => Tag::B,
            "I" => Tag::I,
            "O" => Tag::O,
            "E" => Tag::E,
            "S" => Tag::S,
            _ => return Err(bad()),
        };
        if tag != Tag::O && class.is_empty() {
            return Err(bad());
        }
        Label::new(tag, class).map_err(|_| bad())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag {
            Tag::O => f.write_str("O"),
            t => write!(f, "{}-{}", t.as_char(), self.class),
        }
    }
}

/// A tokenized sentence with one label per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    tokens: Vec<String>,
    labels: Vec<Label>,
}

impl LabeledSentence {
    pub fn new(tokens: Vec<String>, labels: Vec<Label>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        if tokens.len() != labels.len() {
            return Err(CorpusError::LengthMismatch { tokens: tokens.len(), labels: labels.len() });
        }
        if let Some(t) = tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(CorpusError::BadToken(t.clone()));
        }
        Ok(LabeledSentence { tokens, labels })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Same labels, different surface forms. Token count must match.
    pub fn with_tokens(&self, tokens: Vec<String>) -> Result<Self, CorpusError> {
        LabeledSentence::new(tokens, self.labels.clone())
    }
}

/// A set of labeled sentences with a common tagging scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<LabeledSentence>,
    label_inventory: BTreeSet<String>,
    scheme: Scheme,
}

impl Corpus {
    /// Builds a corpus, normalizing every sentence to `scheme`.
    pub fn new(sentences: Vec<LabeledSentence>, scheme: Scheme) -> Self {
        let sentences: Vec<_> = sentences
            .into_iter()
            .map(|s| {
                let labels = normalize_labels(&s.labels, scheme);
                LabeledSentence { tokens: s.tokens, labels }
            })
            .collect();
        let label_inventory = sentences
            .iter()
            .flat_map(|s| s.labels.iter().filter_map(|l| l.class().map(str::to_string)))
            .collect();
        Corpus { sentences, label_inventory, scheme }
    }

    pub fn empty(scheme: Scheme) -> Self {
        Corpus { sentences: Vec::new(), label_inventory: BTreeSet::new(), scheme }
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn label_inventory(&self) -> &BTreeSet<String> {
        &self.label_inventory
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(LabeledSentence::len).sum()
    }

    /// Re-encodes every sentence in another scheme.
    pub fn convert(&self, scheme: Scheme) -> Corpus {
        Corpus::new(self.sentences.clone(), scheme)
    }

    /// Replaces the sentences while keeping scheme and inventory. Used for
    /// perturbed copies, which never change labels.
    pub(crate) fn with_sentences(&self, sentences: Vec<LabeledSentence>) -> Corpus {
        debug_assert_eq!(sentences.len(), self.sentences.len());
        Corpus { sentences, label_inventory: self.label_inventory.clone(), scheme: self.scheme }
    }
}

/// Decodes spans with the repair automaton and re-encodes them in `scheme`.
pub fn normalize_labels(labels: &[Label], scheme: Scheme) -> Vec<Label> {
    let spans = decode_spans(labels);
    let out = encode_spans(&spans, labels.len(), scheme);
    if out != labels {
        let other = match scheme {
            Scheme::Bio => Scheme::Bioes,
            Scheme::Bioes => Scheme::Bio,
        };
        if encode_spans(&spans, labels.len(), other) != labels {
            log::warn!(
                "repaired scheme-illegal label sequence: {}",
                labels.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
            );
        }
    }
    out
}

/// Parses a CoNLL-style column file: one `SURFACE ... LABEL` per line, blank
/// lines between sentences.
pub fn parse_conll(text: &str, scheme: Scheme) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<Label>| -> Result<(), CorpusError> {
        if !tokens.is_empty() {
            sentences.push(LabeledSentence::new(std::mem::take(tokens), std::mem::take(labels))?);
        }
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut tokens, &mut labels)?;
            continue;
        }
        if cols.len() < 2 {
            return Err(CorpusError::Parse { line: line_no, message: "expected at least two columns".into() });
        }
        let label: Label = cols[cols.len() - 1]
            .parse()
            .map_err(|_| CorpusError::Parse { line: line_no, message: format!("bad label `{}`", cols[cols.len() - 1]) })?;
        tokens.push(cols[0].to_string());
        labels.push(label);
    }
    flush(&mut tokens, &mut labels)?;

    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Corpus::new(sentences, scheme))
}

pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for (tok, label) in sentence.tokens.iter().zip(&sentence.labels) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&label.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// A token-aligned noisy/clean sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub noisy: Vec<String>,
    pub clean: Vec<String>,
}

/// Parses the paired-text format: noisy line, clean line, blank separator.
pub fn parse_pairs(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let mut pairs = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();

    let mut flush = |block: &mut Vec<(usize, &str)>| -> Result<(), CorpusError> {
        if block.len() % 2 == 1 {
            let (line, _) = block[block.len() - 1];
            return Err(CorpusError::Parse { line, message: "odd number of lines in pair block".into() });
        }
        for chunk in block.chunks(2) {
            let noisy: Vec<String> = chunk[0].1.split_whitespace().map(str::to_string).collect();
            let clean: Vec<String> = chunk[1].1.split_whitespace().map(str::to_string).collect();
            if noisy.len() != clean.len() {
                return Err(CorpusError::PairMismatch { index: pairs.len(), noisy: noisy.len(), clean: clean.len() });
            }
            pairs.push(SentencePair { noisy, clean });
        }
        block.clear();
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block)?;
        } else {
            block.push((idx + 1, line));
        }
    }
    flush(&mut block)?;
    Ok(pairs)
}
