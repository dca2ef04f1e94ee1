use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::field::{lie_bracket, VectorField};
use super::ControlSystem;
use crate::error::{Error, Result};

/// A nested bracket expression over field indices, e.g. `[1]`, `[[1,2]]`,
/// `[[1,[1,2]]]`. Index 0 denotes the drift.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BracketWord {
    Leaf(usize),
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn leaf(i: usize) -> Self {
        BracketWord::Leaf(i)
    }

    pub fn bracket(a: BracketWord, b: BracketWord) -> Self {
        BracketWord::Bracket(Box::new(a), Box::new(b))
    }

    /// Right-nested word `[i_1,[i_2,[...,i_k]]]`.
    pub fn right_nested(leaves: &[usize]) -> Self {
        assert!(!leaves.is_empty(), "a bracket word needs at least one leaf");
        let (last, rest) = leaves.split_last().unwrap();
        rest.iter()
            .rev()
            .fold(BracketWord::Leaf(*last), |acc, &i| BracketWord::bracket(BracketWord::Leaf(i), acc))
    }

    /// Number of leaf indices.
    pub fn len(&self) -> usize {
        match self {
            BracketWord::Leaf(_) => 1,
            BracketWord::Bracket(a, b) => a.len() + b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            BracketWord::Leaf(i) => out.push(*i),
            BracketWord::Bracket(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn contains_drift(&self) -> bool {
        self.leaves().contains(&0)
    }

    /// The symbolic field of this word for `system`.
    pub fn field(&self, system: &ControlSystem) -> Result<VectorField> {
        match self {
            BracketWord::Leaf(i) => system.field(*i).cloned(),
            BracketWord::Bracket(a, b) => lie_bracket(&a.field(system)?, &b.field(system)?),
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Leaf(i) => write!(f, "{i}"),
            BracketWord::Bracket(a, b) => {
                write!(f, "[")?;
                a.fmt_inner(f)?;
                write!(f, ",")?;
                b.fmt_inner(f)?;
                write!(f, "]")
            }
        }
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        self.fmt_inner(f)?;
        write!(f, "]")
    }
}

impl FromStr for BracketWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidParameter(format!("malformed bracket word `{s}`"));
        let body = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
        let (word, rest) = parse_term(body).ok_or_else(bad)?;
        if !rest.is_empty() {
            return Err(bad());
        }
        Ok(word)
    }
}

fn parse_term(s: &str) -> Option<(BracketWord, &str)> {
    if let Some(rest) = s.strip_prefix('[') {
        let (a, rest) = parse_term(rest)?;
        let rest = rest.strip_prefix(',')?;
        let (b, rest) = parse_term(rest)?;
        let rest = rest.strip_prefix(']')?;
        Some((BracketWord::bracket(a, b), rest))
    } else {
        let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        if end == 0 {
            return None;
        }
        Some((BracketWord::Leaf(s[..end].parse().ok()?), &s[end..]))
    }
}

impl Serialize for BracketWord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BracketWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Right-nested words over `alphabet` up to `max_len` leaves, in increasing
/// length and then lexicographic order on the leaf sequence. Words whose
/// innermost bracket is `[i,i]` vanish identically and are skipped.
pub fn enumerate_words(alphabet: &[usize], max_len: usize) -> Vec<BracketWord> {
    let mut sorted = alphabet.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = sorted.iter().map(|&i| vec![i]).collect();
    for len in 1..=max_len {
        if len > 1 {
            let mut next = Vec::new();
            for head in &sorted {
                for tail in &layer {
                    next.push(std::iter::once(*head).chain(tail.iter().copied()).collect::<Vec<_>>());
                }
            }
            next.sort();
            layer = next;
        }
        for leaves in &layer {
            let k = leaves.len();
            if k >= 2 && leaves[k - 1] == leaves[k - 2] {
                continue;
            }
            out.push(BracketWord::right_nested(leaves));
        }
    }
    out
}

/// Bracket directions spanning the tangent space at a point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketFrame {
    pub words: Vec<BracketWord>,
    pub step: usize,
    /// Columns are the evaluated word fields at the query point.
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Greedy frame selection over [`enumerate_words`]. The drift index is part of
/// the alphabet exactly when the system has a drift.
pub fn bracket_frame(system: &ControlSystem, point: &[f64], max_depth: usize) -> Result<BracketFrame> {
    let alphabet: Vec<usize> = if system.is_driftless() {
        (1..=system.d()).collect()
    } else {
        (0..=system.d()).collect()
    };
    bracket_frame_over(system, point, max_depth, &alphabet, DEFAULT_RANK_TOL)
}

pub fn bracket_frame_over(
    system: &ControlSystem,
    point: &[f64],
    max_depth: usize,
    alphabet: &[usize],
    rank_tol: f64,
) -> Result<BracketFrame> {
    let n = system.n();
    if point.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: point.len() });
    }
    let mut words = Vec::new();
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    for word in enumerate_words(alphabet, max_depth) {
        if words.len() == n {
            break;
        }
        let v = word.field(system)?.eval(point);
        if v.norm() == 0.0 {
            continue;
        }
        let mut trial = cols.clone();
        trial.push(v.clone());
        let m = DMatrix::from_columns(&trial);
        let sv = m.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin > rank_tol * smax {
            cols.push(v);
            words.push(word);
        }
    }
    if words.len() < n {
        return Err(Error::NotBracketGenerating { rank: words.len(), n, max_depth });
    }
    let matrix = DMatrix::from_columns(&cols);
    let mut singular_values: Vec<f64> = matrix.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let step = words.iter().map(BracketWord::len).max().unwrap_or(1);
    Ok(BracketFrame { words, step, matrix, singular_values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let w = BracketWord::right_nested(&[1, 1, 2]);
        assert_eq!(w.to_string(), "[[1,[1,2]]]");
        assert_eq!("[[1,[1,2]]]".parse::<BracketWord>().unwrap(), w);
        assert_eq!(BracketWord::leaf(2).to_string(), "[2]");
        assert_eq!("[ 2 ]".parse::<BracketWord>().unwrap(), BracketWord::leaf(2));
        assert!("[[1,2]".parse::<BracketWord>().is_err());
        assert!("[]".parse::<BracketWord>().is_err());
    }

    #[test]
    fn enumeration_order() {
        let words: Vec<String> = enumerate_words(&[1, 2], 3).iter().map(|w| w.to_string()).collect();
        assert_eq!(
            words,
            vec!["[1]", "[2]", "[[1,2]]", "[[2,1]]", "[[1,[1,2]]]", "[[1,[2,1]]]", "[[2,[1,2]]]", "[[2,[2,1]]]"]
        );
    }
}
