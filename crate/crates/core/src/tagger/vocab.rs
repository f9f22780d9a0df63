use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Scheme, Tag};
use crate::error::CorpusError;

/// Id 0 in both the word and the character table.
pub const UNK: usize = 0;

/// Word, character and label id maps. Word and character ids are dense with
/// `UNK = 0`; labels are `O` followed by the scheme tags of each class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    labels: Vec<Label>,
    scheme: Scheme,
    word_index: HashMap<String, usize>,
    char_index: HashMap<char, usize>,
    label_index: HashMap<Label, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    scheme: Scheme,
    words: Vec<String>,
    chars: Vec<String>,
    labels: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = CorpusError;

    fn try_from(r: VocabularyRepr) -> Result<Self, CorpusError> {
        let chars = r.chars.iter().filter_map(|s| s.chars().next()).collect();
        let labels = r.labels.iter().map(|l| l.parse()).collect::<Result<Vec<Label>, _>>()?;
        Ok(Vocabulary::from_parts(r.words, chars, labels, r.scheme))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            scheme: v.scheme,
            labels: v.labels.iter().map(Label::to_string).collect(),
            words: v.words[1..].to_vec(),
            chars: v.chars[1..].iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl Vocabulary {
    /// Collects every word and character of the corpus, sorted.
    pub fn build(corpus: &Corpus) -> Self {
        let tags: &[Tag] = match corpus.scheme() {
            Scheme::Bio => &[Tag::B, Tag::I],
            Scheme::Bioes => &[Tag::B, Tag::I, Tag::E, Tag::S],
        };
        let mut labels = vec![Label::outside()];
        for class in corpus.label_inventory() {
            for &tag in tags {
                labels.push(Label::new(tag, class).expect("inventory classes are valid identifiers"));
            }
        }
        Vocabulary::with_labels(corpus, labels)
    }

    /// Like [`Vocabulary::build`] but with an explicit label list, in id
    /// order. Duplicates are dropped.
    pub fn with_labels(corpus: &Corpus, labels: Vec<Label>) -> Self {
        let words: BTreeSet<&str> = corpus.sentences().iter().flat_map(|s| s.tokens().iter().map(String::as_str)).collect();
        let chars: BTreeSet<char> = words.iter().flat_map(|w| w.chars()).collect();
        Vocabulary::from_parts(
            words.into_iter().map(str::to_string).collect(),
            chars.into_iter().collect(),
            labels,
            corpus.scheme(),
        )
    }

    fn from_parts(words: Vec<String>, chars: Vec<char>, labels: Vec<Label>, scheme: Scheme) -> Self {
        let words: Vec<String> = std::iter::once("<unk>".to_string()).chain(words).collect();
        let chars: Vec<char> = std::iter::once('\u{0}').chain(chars).collect();
        let mut seen = std::collections::HashSet::new();
        let labels: Vec<Label> = labels.into_iter().filter(|l| seen.insert(l.clone())).collect();
        let word_index = words.iter().enumerate().skip(1).map(|(i, w)| (w.clone(), i)).collect();
        let char_index = chars.iter().enumerate().skip(1).map(|(i, &c)| (c, i)).collect();
        let label_index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Vocabulary { words, chars, labels, scheme, word_index, char_index, label_index }
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_index.get(word).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn label_id(&self, label: &Label) -> Option<usize> {
        self.label_index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &Label {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn classes(&self) -> BTreeSet<String> {
        self.labels.iter().filter_map(|l| l.class().map(str::to_string)).collect()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Including UNK.
    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    /// Including UNK.
    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Additive transition mask: 0 for scheme-legal transitions, `-inf`
    /// otherwise. Rows and columns follow the CRF layout with START and STOP
    /// last.
    pub fn transition_mask(&self) -> Vec<f64> {
        let l = self.labels.len();
        let w = l + 2;
        let (start, stop) = (l, l + 1);
        let mut mask = vec![f64::NEG_INFINITY; w * w];
        let opens = |lab: &Label| matches!(lab.tag(), Tag::O | Tag::B | Tag::S);
        let closed = |lab: &Label| self.scheme == Scheme::Bio || matches!(lab.tag(), Tag::O | Tag::E | Tag::S);
        let continues = |from: &Label, to: &Label| {
            matches!(from.tag(), Tag::B | Tag::I) && matches!(to.tag(), Tag::I | Tag::E) && from.class() == to.class()
        };
        for (j, to) in self.labels.iter().enumerate() {
            if opens(to) {
                mask[start * w + j] = 0.0;
            }
        }
        for (i, from) in self.labels.iter().enumerate() {
            if closed(from) {
                mask[i * w + stop] = 0.0;
            }
            for (j, to) in self.labels.iter().enumerate() {
                if (closed(from) && opens(to)) || continues(from, to) {
                    mask[i * w + j] = 0.0;
                }
            }
        }
        mask
    }
}
