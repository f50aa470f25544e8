use std::collections::HashMap;

use super::tokenize::eval_tokenize;
use super::MetricsError;

/// A prediction with its references, all tokenized with [`eval_tokenize`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub prediction: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// Non-empty list of items, each with at least one reference.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new<P, R>(items: impl IntoIterator<Item = (P, Vec<R>)>) -> Result<Self, MetricsError>
    where
        P: AsRef<str>,
        R: AsRef<str>,
    {
        let items: Vec<EvalItem> = items
            .into_iter()
            .map(|(pred, refs)| EvalItem {
                prediction: eval_tokenize(pred.as_ref()),
                references: refs.iter().map(|r| eval_tokenize(r.as_ref())).collect(),
            })
            .collect();
        Self::from_tokens(items)
    }

    pub fn from_tokens(items: Vec<EvalItem>) -> Result<Self, MetricsError> {
        if items.is_empty() {
            return Err(MetricsError::EmptyCorpus);
        }
        if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
            return Err(MetricsError::NoReferences(i));
        }
        Ok(EvalCorpus { items })
    }

    /// Merge rows sharing a grouping key (e.g. the MR string) into one
    /// multi-reference item. The first prediction seen for a key is used and
    /// keys keep their first-seen order.
    pub fn grouped<K, P, R>(rows: impl IntoIterator<Item = (K, P, R)>) -> Result<Self, MetricsError>
    where
        K: AsRef<str>,
        P: AsRef<str>,
        R: AsRef<str>,
    {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut items: Vec<(String, Vec<String>)> = Vec::new();
        for (key, pred, reference) in rows {
            match index.get(key.as_ref()) {
                Some(&i) => items[i].1.push(reference.as_ref().to_string()),
                None => {
                    index.insert(key.as_ref().to_string(), items.len());
                    items.push((pred.as_ref().to_string(), vec![reference.as_ref().to_string()]));
                }
            }
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// n-gram counts of a token sequence.
pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// For each n-gram, the largest count it has in any single reference.
pub(crate) fn max_ref_counts(refs: &[Vec<String>], n: usize) -> HashMap<&[String], usize> {
    let mut best: HashMap<&[String], usize> = HashMap::new();
    for r in refs {
        for (gram, c) in ngram_counts(r, n) {
            let slot = best.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    best
}
