//! Deterministic synthetic NER corpora.
//!
//! Sentences are built from clause templates whose slots are filled from
//! procedurally generated lexicons for four classes (PER, LOC, ORG, MISC)
//! and a pool of lowercase filler words. Some templates accept any entity
//! class, so the surface form of a name matters as well as its context.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Label, LabeledSentence, Scheme};
use crate::rng::{derive_seed, stream};
use crate::spans::{encode_spans, Span};

const ONSETS: &[&str] = &["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "st", "tr", "ch", "sh", "gr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "s", "m", "k"];

const LOC_SUFFIXES: &[&str] = &["ia", "burg", "ton", "stad", "ville", "ora", "mar"];
const ORG_SUFFIXES: &[&str] = &["Corp", "Group", "Bank", "Holdings", "Union", "Motors", "Airlines", "Institute"];
const MISC_SUFFIXES: &[&str] = &["ian", "ese", "ish"];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "on", "at", "for", "with", "from", "by", "after", "before", "that", "was",
    "is", "will", "has", "had", "said", "told", "reported", "announced", "expected", "new", "last", "week", "year",
    "today", "monday", "friday", "shares", "office", "team", "government", "officials", "deal", "match", "talks",
    "visit", "visited", "police", "market", "percent", "two", "three", "million", "first", "second", "also", "but",
    "not", "over", "against", "near", "its", "his", "her", "their", "who", "which", "when", "while", "scored",
    "won", "lost", "opened", "closed", "signed", "met", "left", "joined", "plans", "report", "newspaper", "spokesman",
    "according", "capital", "city", "club", "company", "players", "leader", "border", "election", "minister",
];

/// Clause templates. `{PER}`, `{LOC}`, `{ORG}` and `{MISC}` are entity
/// slots, `{ANY}` takes an entity of a random class and `{w}` a filler word.
const CLAUSES: &[&str] = &[
    "{PER} said on monday that",
    "{PER} told reporters",
    "according to {PER} ,",
    "{PER} , who joined {ORG} last year ,",
    "coach {PER} said",
    "{PER} scored twice against {ORG}",
    "the {w} was opened by {PER}",
    "in {LOC}",
    "police in {LOC} said",
    "the {LOC} office of {ORG}",
    "after talks in {LOC} ,",
    "{PER} visited {LOC} last week",
    "near the {LOC} border",
    "{ORG} reported a {w} of {w} percent",
    "shares of {ORG} closed higher",
    "a spokesman for {ORG} said",
    "{ORG} signed a deal with {ORG}",
    "{ORG} plans to open an office in {LOC}",
    "the {MISC} government",
    "{MISC} officials said",
    "a {MISC} newspaper reported",
    "the {MISC} team won the match",
    "{MISC} players",
    "talks with {ANY}",
    "a report by {ANY}",
    "{ANY} was {w}",
    "{ANY} and {ANY} met on friday",
    "the {w} of {ANY}",
    "{w} {w} the {w}",
    "but the {w} was {w}",
];

const CONNECTIVES: &[&str] = &["and", ",", "while", "but", "after"];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    /// Class name and tokens.
    class: &'static str,
    tokens: Vec<String>,
}

/// Entity names and filler words shared by every split generated from the
/// same lexicon seed.
#[derive(Debug, Clone)]
pub struct Lexicon {
    per: Vec<Entry>,
    loc: Vec<Entry>,
    org: Vec<Entry>,
    misc: Vec<Entry>,
    fillers: Vec<String>,
}

fn syllable(rng: &mut ChaCha8Rng) -> String {
    format!("{}{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap(), CODAS.choose(rng).unwrap())
}

fn stem(rng: &mut ChaCha8Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(syllables);
    (0..n).map(|_| syllable(rng)).collect()
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Draws `n` distinct words from `make` that are not yet in `taken`.
fn distinct(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>, n: usize, mut make: impl FnMut(&mut ChaCha8Rng) -> String) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = make(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl Lexicon {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream(seed);
        let mut taken: BTreeSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
        taken.extend(CONNECTIVES.iter().map(|w| w.to_string()));

        let first = distinct(&mut rng, &mut taken, 80, |r| capitalize(&stem(r, 2..=2)));
        let last = distinct(&mut rng, &mut taken, 120, |r| capitalize(&stem(r, 2..=3)));
        let places = distinct(&mut rng, &mut taken, 120, |r| capitalize(&(stem(r, 1..=2) + LOC_SUFFIXES.choose(r).unwrap())));
        let org_bases = distinct(&mut rng, &mut taken, 100, |r| capitalize(&stem(r, 1..=3)));
        let nations = distinct(&mut rng, &mut taken, 80, |r| capitalize(&(stem(r, 1..=2) + MISC_SUFFIXES.choose(r).unwrap())));
        let fillers = distinct(&mut rng, &mut taken, 400, |r| stem(r, 1..=3));

        let mut per = Vec::new();
        for i in 0..200 {
            let tokens = match i % 4 {
                0 => vec![last.choose(&mut rng).unwrap().clone()],
                _ => vec![first.choose(&mut rng).unwrap().clone(), last.choose(&mut rng).unwrap().clone()],
            };
            per.push(Entry { class: "PER", tokens });
        }
        let mut loc: Vec<Entry> = places.iter().map(|p| Entry { class: "LOC", tokens: vec![p.clone()] }).collect();
        for _ in 0..30 {
            let tokens = vec!["North".to_string(), places.choose(&mut rng).unwrap().clone()];
            loc.push(Entry { class: "LOC", tokens });
        }
        let mut org = Vec::new();
        for base in &org_bases {
            let mut tokens = vec![base.clone()];
            if rng.random_bool(0.3) {
                tokens.push(org_bases.choose(&mut rng).unwrap().clone());
            }
            if rng.random_bool(0.7) {
                tokens.push(ORG_SUFFIXES.choose(&mut rng).unwrap().to_string());
            }
            org.push(Entry { class: "ORG", tokens });
        }
        let misc = nations.iter().map(|n| Entry { class: "MISC", tokens: vec![n.clone()] }).collect();
        Lexicon { per, loc, org, misc, fillers }
    }

    /// Every surface word the lexicon and templates can produce.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut words: BTreeSet<String> = FUNCTION_WORDS.iter().chain(CONNECTIVES).map(|w| w.to_string()).collect();
        for e in self.per.iter().chain(&self.loc).chain(&self.org).chain(&self.misc) {
            words.extend(e.tokens.iter().cloned());
        }
        words.extend(self.fillers.iter().cloned());
        for clause in CLAUSES {
            words.extend(clause.split(' ').filter(|t| !t.starts_with('{')).map(str::to_string));
        }
        words.extend([".".to_string()]);
        words
    }

    fn entity(&self, class: &str, rng: &mut ChaCha8Rng) -> &Entry {
        let pool = match class {
            "PER" => &self.per,
            "LOC" => &self.loc,
            "ORG" => &self.org,
            "MISC" => &self.misc,
            _ => [&self.per, &self.loc, &self.org, &self.misc].choose(rng).unwrap(),
        };
        pool.choose(rng).unwrap()
    }

    fn sentence(&self, rng: &mut ChaCha8Rng, scheme: Scheme) -> LabeledSentence {
        let mut tokens: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        let clauses = rng.random_range(1..=2);
        for k in 0..clauses {
            if k > 0 {
                tokens.push(CONNECTIVES.choose(rng).unwrap().to_string());
            }
            for slot in CLAUSES.choose(rng).unwrap().split(' ') {
                match slot {
                    "{w}" => tokens.push(self.fillers.choose(rng).unwrap().clone()),
                    s if s.starts_with('{') => {
                        let e = self.entity(&s[1..s.len() - 1], rng);
                        spans.push(Span::new(tokens.len(), tokens.len() + e.tokens.len(), e.class));
                        tokens.extend(e.tokens.iter().cloned());
                    }
                    word => tokens.push(word.to_string()),
                }
            }
        }
        tokens.push(".".to_string());
        if spans.first().is_none_or(|s| s.start > 0) {
            tokens[0] = capitalize(&tokens[0]);
        }
        let labels: Vec<Label> = encode_spans(&spans, tokens.len(), scheme);
        LabeledSentence::new(tokens, labels).expect("generated sentences are well-formed")
    }

    /// `n` sentences drawn with `seed`.
    pub fn corpus(&self, n: usize, seed: u64, scheme: Scheme) -> Corpus {
        let sentences = (0..n).map(|i| self.sentence(&mut stream(derive_seed(seed, i as u64)), scheme)).collect();
        Corpus::new(sentences, scheme)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSplits {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Train, dev and test corpora sharing one lexicon. The three splits use
/// disjoint sentence streams.
pub fn generate_splits(train: usize, dev: usize, test: usize, seed: u64, scheme: Scheme) -> SyntheticSplits {
    let lexicon = Lexicon::new(derive_seed(seed, 0));
    SyntheticSplits {
        train: lexicon.corpus(train, derive_seed(seed, 1), scheme),
        dev: lexicon.corpus(dev, derive_seed(seed, 2), scheme),
        test: lexicon.corpus(test, derive_seed(seed, 3), scheme),
    }
}
