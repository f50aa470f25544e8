//! Slot error rate and the word-overlap metric suite.
//!
//! All overlap metrics read text through [`eval_tokenize`] and accept any
//! number of references per prediction.

mod bleu;
mod cider;
mod corpus;
mod meteor;
mod nist;
mod rouge;
mod ser;
mod tokenize;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, bleu_with, BleuOptions, BLEU_MAX_ORDER};
pub use cider::{cider, CIDER_MAX_ORDER};
pub use corpus::{EvalCorpus, EvalItem};
pub use meteor::{align as meteor_align, meteor_lite, meteor_lite_with, sentence_meteor, MeteorParams};
pub use nist::{nist, NIST_MAX_ORDER};
pub use rouge::{lcs_len, lcs_recall, rouge_l, rouge_l_with, ROUGE_BETA};
pub use ser::{compute_ser, SerReport, SlotTally};
pub use tokenize::eval_tokenize;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("evaluation corpus is empty")]
    EmptyCorpus,
    #[error("item {0} has no references")]
    NoReferences(usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// Value range of a metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 0–100.
    Bleu,
    /// Non-negative, unbounded.
    Nist,
    /// 0–1.
    Unit,
    /// 0–10.
    Cider,
}

impl Scale {
    pub fn contains(self, v: f64) -> bool {
        let eps = 1e-9;
        match self {
            Scale::Bleu => (-eps..=100.0 + eps).contains(&v),
            Scale::Nist => v >= -eps,
            Scale::Unit => (-eps..=1.0 + eps).contains(&v),
            Scale::Cider => (-eps..=10.0 + eps).contains(&v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    pub value: f64,
    pub scale: Scale,
}

impl MetricScore {
    pub fn new(name: &str, value: f64, scale: Scale) -> Self {
        debug_assert!(scale.contains(value), "{name} = {value} out of range");
        MetricScore {
            name: name.to_string(),
            value,
            scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu,
    Nist,
    RougeL,
    Cider,
    MeteorLite,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Bleu,
        Metric::Nist,
        Metric::RougeL,
        Metric::Cider,
        Metric::MeteorLite,
    ];

    pub fn compute(self, corpus: &EvalCorpus) -> MetricScore {
        match self {
            Metric::Bleu => bleu(corpus),
            Metric::Nist => nist(corpus),
            Metric::RougeL => rouge_l(corpus),
            Metric::Cider => cider(corpus),
            Metric::MeteorLite => meteor_lite(corpus),
        }
    }
}

impl FromStr for Metric {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "bleu" => Ok(Metric::Bleu),
            "nist" => Ok(Metric::Nist),
            "rouge_l" | "rouge" => Ok(Metric::RougeL),
            "cider" => Ok(Metric::Cider),
            "meteor_lite" | "meteor" => Ok(Metric::MeteorLite),
            _ => Err(MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

/// Score a corpus with several metrics, in the order given.
pub fn score_all(corpus: &EvalCorpus, metrics: &[Metric]) -> Vec<MetricScore> {
    metrics.iter().map(|m| m.compute(corpus)).collect()
}
