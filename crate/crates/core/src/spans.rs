//! Entity spans and the deterministic label-to-span automaton.
//!
//! The automaton reads BIO and BIOES labels alike:
//!
//! | label | open span of same class | otherwise |
//! |-------|-------------------------|-----------|
//! | `O`   | close it                | -         |
//! | `B-X` | close, open new         | open new  |
//! | `I-X` | extend                  | close, open new |
//! | `E-X` | extend and close        | close, emit single `(t,t)` |
//! | `S-X` | close, emit single      | emit single |
//!
//! A span still open at the end of the sequence is closed at the last token.

use crate::corpus::{Label, Scheme, Tag};

/// Inclusive token range carrying an entity class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub class: String,
}

impl Span {
    pub fn new(start: usize, end: usize, class: impl Into<String>) -> Self {
        debug_assert!(start <= end);
        Span { start, end, class: class.into() }
    }
}

pub fn decode_spans(labels: &[Label]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;

    for (t, label) in labels.iter().enumerate() {
        let class = label.class();
        match label.tag() {
            Tag::O => {
                if let Some((s, c)) = open.take() {
                    spans.push(Span::new(s, t - 1, c));
                }
            }
            Tag::B => {
                if let Some((s, c)) = open.take() {
                    spans.push(Span::new(s, t - 1, c));
                }
                open = Some((t, class.unwrap_or_default()));
            }
            Tag::I => match open {
                Some((_, c)) if Some(c) == class => {}
                _ => {
                    if let Some((s, c)) = open.take() {
                        spans.push(Span::new(s, t - 1, c));
                    }
                    open = Some((t, class.unwrap_or_default()));
                }
            },
            Tag::E => match open.take() {
                Some((s, c)) if Some(c) == class => spans.push(Span::new(s, t, c)),
                other => {
                    if let Some((s, c)) = other {
                        spans.push(Span::new(s, t - 1, c));
                    }
                    spans.push(Span::new(t, t, class.unwrap_or_default()));
                }
            },
            Tag::S => {
                if let Some((s, c)) = open.take() {
                    spans.push(Span::new(s, t - 1, c));
                }
                spans.push(Span::new(t, t, class.unwrap_or_default()));
            }
        }
    }
    if let Some((s, c)) = open {
        spans.push(Span::new(s, labels.len() - 1, c));
    }
    spans
}

/// Writes non-overlapping spans as labels in the given scheme.
pub fn encode_spans(spans: &[Span], len: usize, scheme: Scheme) -> Vec<Label> {
    let mut labels = vec![Label::outside(); len];
    for span in spans {
        let mk = |tag| Label::new(tag, &span.class).expect("span class is a valid identifier");
        match scheme {
            Scheme::Bio => {
                labels[span.start] = mk(Tag::B);
                for l in &mut labels[span.start + 1..=span.end] {
                    *l = mk(Tag::I);
                }
            }
            Scheme::Bioes if span.start == span.end => labels[span.start] = mk(Tag::S),
            Scheme::Bioes => {
                labels[span.start] = mk(Tag::B);
                for l in &mut labels[span.start + 1..span.end] {
                    *l = mk(Tag::I);
                }
                labels[span.end] = mk(Tag::E);
            }
        }
    }
    labels
}
