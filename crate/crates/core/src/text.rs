//! Tokenizing, stopword filtering and light suffix stemming for the
//! token-overlap similarity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::hash::sha256_hex;

/// The shipped stopword list. Lines starting with `#` are comments.
pub const STOPWORDS_FILE: &str = include_str!("../data/stopwords.txt");

/// Parsed stopword list together with the hash of the file it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: BTreeSet<String>,
    version: Option<String>,
    hash: String,
}

impl Stopwords {
    pub fn parse(file: &str) -> Self {
        let mut version = None;
        let mut words = BTreeSet::new();
        for line in file.lines().map(str::trim) {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = Some(v.trim().into());
                }
            } else if !line.is_empty() {
                words.insert(line.to_lowercase());
            }
        }
        Self {
            words,
            version,
            hash: sha256_hex(file.as_bytes()),
        }
    }

    pub fn shipped() -> Self {
        Self::parse(STOPWORDS_FILE)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    /// SHA-256 of the stopword file.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

const MIN_STEM: usize = 3;

/// Strips at most one suffix, then a trailing `e`.
///
/// Rules in priority order: `ations`, `ation`, `ators`, `ator`, `ments`,
/// `ment`, `ness`, `ings`, `ing`, `ies`->`y`, `ied`->`y`, `ed`, `ly`,
/// `es` after s/x/z/ch/sh, `s` unless after s/u/i. A rule applies only if
/// at least three characters remain.
pub fn stem(word: &str) -> String {
    const PLAIN: [&str; 9] = [
        "ations", "ation", "ators", "ator", "ments", "ment", "ness", "ings", "ing",
    ];
    let mut out: String = word.into();
    let keep = |w: &str, suffix: &str| w.len() >= suffix.len() + MIN_STEM;
    let mut stripped = false;
    for suffix in PLAIN {
        if word.ends_with(suffix) && keep(word, suffix) {
            out.truncate(word.len() - suffix.len());
            stripped = true;
            break;
        }
    }
    if !stripped {
        if (word.ends_with("ies") || word.ends_with("ied")) && keep(word, "ies") {
            out.truncate(word.len() - 3);
            out.push('y');
        } else if ((word.ends_with("ed") || word.ends_with("ly")) && keep(word, "ed"))
            || (["ses", "xes", "zes", "ches", "shes"].iter().any(|s| word.ends_with(s))
                && keep(word, "es"))
        {
            out.truncate(word.len() - 2);
        } else if word.ends_with('s')
            && keep(word, "s")
            && !["ss", "us", "is"].iter().any(|s| word.ends_with(s))
        {
            out.truncate(word.len() - 1);
        }
    }
    if out.len() > MIN_STEM && out.ends_with('e') {
        out.pop();
    }
    out
}

/// Lowercased, stopword-filtered, stemmed tokens in text order.
pub fn tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 2 && !stopwords.contains(t))
        .map(|t| stem(&t))
        .collect()
}

/// Term-frequency vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermVector(BTreeMap<String, u32>);

impl TermVector {
    pub fn from_text(text: &str, stopwords: &Stopwords) -> Self {
        let mut counts = BTreeMap::new();
        for t in tokens(text, stopwords) {
            *counts.entry(t).or_insert(0) += 1;
        }
        Self(counts)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn norm_sq(&self) -> u64 {
        self.0.values().map(|c| u64::from(*c) * u64::from(*c)).sum()
    }

    /// Cosine similarity in `[0, 1]`; zero when either side is empty.
    /// Computed as `dot / sqrt(|a|^2 |b|^2)` so that equal vectors give
    /// exactly 1.0.
    pub fn cosine(&self, other: &TermVector) -> f64 {
        let (small, large) = if self.0.len() <= other.0.len() {
            (self, other)
        } else {
            (other, self)
        };
        let dot: u64 = small
            .0
            .iter()
            .filter_map(|(t, c)| large.0.get(t).map(|d| u64::from(*c) * u64::from(*d)))
            .sum();
        if dot == 0 {
            return 0.0;
        }
        let denom = libm::sqrt(self.norm_sq() as f64 * other.norm_sq() as f64);
        (dot as f64 / denom).clamp(0.0, 1.0)
    }
}
