//! Unit-cost Levenshtein distance and character alignment over Unicode
//! scalar values.

use crate::error::AlignmentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match(char),
    Substitute { from: char, to: char },
    /// Source character with no counterpart in the target.
    Delete(char),
    /// Target character with no counterpart in the source.
    Insert(char),
}

impl EditOp {
    pub fn is_edit(&self) -> bool {
        !matches!(self, EditOp::Match(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub cost: usize,
}

impl Alignment {
    /// Applies the operations to their source string, yielding the target.
    pub fn replay(&self) -> String {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                EditOp::Match(c) | EditOp::Insert(c) => Some(c),
                EditOp::Substitute { to, .. } => Some(to),
                EditOp::Delete(_) => None,
            })
            .collect()
    }

    /// The source string the alignment was computed from.
    pub fn source(&self) -> String {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                EditOp::Match(c) | EditOp::Delete(c) => Some(c),
                EditOp::Substitute { from, .. } => Some(from),
                EditOp::Insert(_) => None,
            })
            .collect()
    }
}

pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Optimal alignment of `a` (source) to `b` (target).
///
/// The backtrace runs from the end of both strings and prefers, among
/// optimal moves, Match, then Substitute, then Delete, then Insert.
pub fn align(a: &str, b: &str) -> Alignment {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[(i - 1) * w + j - 1] == here {
            ops.push(EditOp::Match(a[i - 1]));
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && a[i - 1] != b[j - 1] && d[(i - 1) * w + j - 1] + 1 == here {
            ops.push(EditOp::Substitute { from: a[i - 1], to: b[j - 1] });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete(a[i - 1]));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(b[j - 1]));
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops, cost: d[n * w + m] }
}

/// Total edits over total clean-side length, for `(noisy, clean)` pairs.
pub fn character_error_rate<'a, I>(pairs: I) -> Result<f64, AlignmentError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut edits = 0usize;
    let mut reference = 0usize;
    for (noisy, clean) in pairs {
        let noisy: Vec<char> = noisy.chars().collect();
        let clean: Vec<char> = clean.chars().collect();
        edits += levenshtein_chars(&clean, &noisy);
        reference += clean.len();
    }
    if reference == 0 {
        return Err(AlignmentError::EmptyReference);
    }
    Ok(edits as f64 / reference as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ca, ra)), Some((cb, rb))) => {
                let sub = brute(ra, rb) + usize::from(ca != cb);
                sub.min(brute(ra, b) + 1).min(brute(a, rb) + 1)
            }
        }
    }

    #[test]
    fn distances() {
        assert_eq!(levenshtein_distance("abc", "abc"), 0);
        assert_eq!(levenshtein_distance("kitten", "sitting"), 3);
        assert_eq!(levenshtein_distance("", "ab"), 2);
        assert_eq!(levenshtein_distance("ab", ""), 2);
        assert_eq!(levenshtein_distance("Köln", "Koln"), 1);
    }

    #[test]
    fn alignments() {
        let al = align("cat", "cut");
        assert_eq!(al.ops, vec![EditOp::Match('c'), EditOp::Substitute { from: 'a', to: 'u' }, EditOp::Match('t')]);
        assert_eq!(al.cost, 1);
        assert_eq!(align("ab", "ab").ops, vec![EditOp::Match('a'), EditOp::Match('b')]);
        let al = align("ab", "axb");
        assert_eq!(al.ops, vec![EditOp::Match('a'), EditOp::Insert('x'), EditOp::Match('b')]);
        assert_eq!(al.cost, 1);
        assert_eq!(align("", "").ops, vec![]);
        assert_eq!(align("ab", "").ops, vec![EditOp::Delete('a'), EditOp::Delete('b')]);
    }

    #[test]
    fn error_rates() {
        assert_eq!(character_error_rate([("abc", "abc")]), Ok(0.0));
        assert_eq!(character_error_rate([("cut", "cat")]), Ok(1.0 / 3.0));
        assert_eq!(character_error_rate([("ab", "abcd"), ("x", "x")]), Ok(2.0 / 5.0));
        assert_eq!(character_error_rate([("ab", "")]), Err(AlignmentError::EmptyReference));
        assert_eq!(character_error_rate(std::iter::empty()), Err(AlignmentError::EmptyReference));
    }

    fn short() -> impl Strategy<Value = String> {
        "[abcx]{0,7}"
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in short(), b in short()) {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            prop_assert_eq!(levenshtein_distance(&a, &b), brute(&ac, &bc));
        }

        #[test]
        fn metric_axioms(a in short(), b in short(), c in short()) {
            prop_assert_eq!(levenshtein_distance(&a, &b), levenshtein_distance(&b, &a));
            prop_assert_eq!(levenshtein_distance(&a, &a), 0);
            prop_assert!(levenshtein_distance(&a, &c) <= levenshtein_distance(&a, &b) + levenshtein_distance(&b, &c));
        }

        #[test]
        fn alignment_replays(a in "\\PC{0,10}", b in "\\PC{0,10}") {
            let al = align(&a, &b);
            prop_assert_eq!(al.replay(), b.clone());
            prop_assert_eq!(al.source(), a.clone());
            prop_assert_eq!(al.cost, levenshtein_distance(&a, &b));
            prop_assert_eq!(al.cost, al.ops.iter().filter(|o| o.is_edit()).count());
        }
    }
}
