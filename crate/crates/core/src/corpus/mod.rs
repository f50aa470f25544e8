//! Dataset ingestion, subsampling, and synthetic corpora.

mod oov;
mod toy;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mr::{DatasetRecord, Example, LangToken, MrError, SlotSchema};

pub use oov::{default_oov_spec, synth_oov, OovSet, OovSpec, OovStats, OOV_COUNT_RANGE, OOV_PHONE_DIGITS};
pub use toy::{gen_toy_nlg, gen_toy_parallel, ToyNlg, ToyNlgSizes, ToyWorldSpec, TOY_SLOTS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{0}: corpus is empty")]
    Empty(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("invalid sample size: {0}")]
    SampleSize(String),
    #[error("test MR patterns also occur in training: {0:?}")]
    SplitOverlap(Vec<String>),
    #[error("OOV pool values occur in the training data: {0:?}")]
    OovOverlap(Vec<String>),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Mr(#[from] MrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// English–Czech sentence pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(String, String)>,
    pub provenance: String,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(String, String)>, provenance: &str) -> Result<Self, CorpusError> {
        if let Some(i) = pairs.iter().position(|(a, b)| a.trim().is_empty() || b.trim().is_empty()) {
            return Err(CorpusError::Line {
                line: i + 1,
                msg: "empty side".into(),
            });
        }
        Ok(ParallelCorpus {
            pairs,
            provenance: provenance.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// One `english\tczech` pair per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.pairs {
            out.push_str(a);
            out.push('\t');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    /// Monolingual sentences of both sides, English first.
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.pairs
            .iter()
            .map(|(a, _)| a.as_str())
            .chain(self.pairs.iter().map(|(_, b)| b.as_str()))
    }
}

/// NLG examples of one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NlgCorpus {
    pub examples: Vec<Example>,
    pub split: Split,
}

impl NlgCorpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(&e.to_record()).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Distinct delexicalized MR patterns.
    pub fn patterns(&self) -> BTreeSet<String> {
        self.examples.iter().map(|e| e.mr.delex_pattern()).collect()
    }
}

pub fn parse_nlg(text: &str, schema: &SlotSchema, split: Split, origin: &str) -> Result<NlgCorpus, CorpusError> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_err = |msg: String| CorpusError::Line { line: i + 1, msg };
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| line_err(e.to_string()))?;
        examples.push(Example::from_record(&record, schema).map_err(|e| line_err(e.to_string()))?);
    }
    if examples.is_empty() {
        return Err(CorpusError::Empty(origin.to_string()));
    }
    Ok(NlgCorpus { examples, split })
}

/// JSON-lines NLG file, one [`DatasetRecord`] per line.
pub fn load_nlg(path: impl AsRef<Path>, schema: &SlotSchema, split: Split) -> Result<NlgCorpus, CorpusError> {
    let path = path.as_ref();
    parse_nlg(&std::fs::read_to_string(path)?, schema, split, &path.display().to_string())
}

pub fn parse_parallel(text: &str, provenance: &str) -> Result<ParallelCorpus, CorpusError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(src), Some(tgt), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CorpusError::Line {
                line: i + 1,
                msg: "expected exactly two tab-separated fields".into(),
            });
        };
        if src.trim().is_empty() || tgt.trim().is_empty() {
            return Err(CorpusError::Line {
                line: i + 1,
                msg: "empty side".into(),
            });
        }
        pairs.push((src.to_string(), tgt.to_string()));
    }
    if pairs.is_empty() {
        return Err(CorpusError::Empty(provenance.to_string()));
    }
    ParallelCorpus::new(pairs, provenance)
}

/// Tab-separated parallel file.
pub fn load_parallel(path: impl AsRef<Path>) -> Result<ParallelCorpus, CorpusError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    parse_parallel(&std::fs::read_to_string(path)?, &name)
}

/// How much of a corpus to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Count(usize),
    Fraction(f64),
}

impl SampleSize {
    /// Number of items kept out of `n`; fractions round down.
    pub fn resolve(self, n: usize) -> Result<usize, CorpusError> {
        match self {
            SampleSize::Count(k) if k <= n => Ok(k),
            SampleSize::Count(k) => Err(CorpusError::SampleSize(format!("{k} exceeds corpus size {n}"))),
            SampleSize::Fraction(f) if (0.0..=1.0).contains(&f) => Ok((f * n as f64).floor() as usize),
            SampleSize::Fraction(f) => Err(CorpusError::SampleSize(format!("fraction {f} outside [0, 1]"))),
        }
    }
}

impl FromStr for SampleSize {
    type Err = CorpusError;

    /// `full`, an integer count, or a fraction containing a decimal point.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "full" {
            return Ok(SampleSize::Fraction(1.0));
        }
        if s.contains('.') {
            s.parse().map(SampleSize::Fraction)
        } else {
            s.parse().map(SampleSize::Count).map_err(|_| ())
                .or_else(|_| s.parse::<f64>().map(SampleSize::Fraction))
        }
        .map_err(|_| CorpusError::SampleSize(s.to_string()))
    }
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Count(k) => write!(f, "{k}"),
            SampleSize::Fraction(x) if *x == 1.0 => f.write_str("full"),
            SampleSize::Fraction(x) => write!(f, "{x}"),
        }
    }
}

/// Uniform sample without replacement, in original order.
///
/// The kept indices are the first `k` of a ChaCha8 Fisher-Yates
/// permutation seeded with `seed`.
pub fn subsample<T: Clone>(items: &[T], size: SampleSize, seed: u64) -> Result<Vec<T>, CorpusError> {
    let k = size.resolve(items.len())?;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut kept = idx[..k].to_vec();
    kept.sort_unstable();
    Ok(kept.into_iter().map(|i| items[i].clone()).collect())
}

/// A pair with the language of its target side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectedPair {
    pub source: String,
    pub target: String,
    pub target_lang: LangToken,
}

/// Every pair English → Czech, followed by every pair Czech → English.
pub fn bidirectionalize(corpus: &ParallelCorpus) -> Vec<DirectedPair> {
    let forward = corpus.pairs.iter().map(|(en, cs)| DirectedPair {
        source: en.clone(),
        target: cs.clone(),
        target_lang: LangToken::Cs,
    });
    let backward = corpus.pairs.iter().map(|(en, cs)| DirectedPair {
        source: cs.clone(),
        target: en.clone(),
        target_lang: LangToken::En,
    });
    forward.chain(backward).collect()
}

/// Fails when any delexicalized test MR pattern occurs in training.
pub fn check_split_disjoint(train: &NlgCorpus, test: &NlgCorpus) -> Result<(), CorpusError> {
    let train_patterns = train.patterns();
    let shared: Vec<String> = test.patterns().intersection(&train_patterns).cloned().collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::SplitOverlap(shared))
    }
}
