use std::collections::{BTreeMap, HashMap, HashSet};

use super::corpus::{ngram_counts, EvalCorpus};
use super::{MetricScore, Scale};

pub const CIDER_MAX_ORDER: usize = 4;

/// CIDEr on a 0–10 scale.
///
/// n-gram vectors hold raw counts times `ln(N) − ln(max(1, df))`, where `N`
/// is the number of items and `df` the number of items whose reference set
/// contains the n-gram. Per order, the item score is the mean cosine between
/// the prediction vector and each reference vector; orders 1..4 are averaged,
/// then items, then scaled by 10. A zero vector has cosine 0 with anything.
pub fn cider(corpus: &EvalCorpus) -> MetricScore {
    let n_items = corpus.len() as f64;
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for item in corpus.items() {
        let mut seen: HashSet<&[String]> = HashSet::new();
        for r in &item.references {
            for n in 1..=CIDER_MAX_ORDER {
                seen.extend(ngram_counts(r, n).into_keys());
            }
        }
        for gram in seen {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    let log_n = n_items.ln();
    let vector = |tokens: &'_ [String], n: usize| -> BTreeMap<Vec<String>, f64> {
        ngram_counts(tokens, n)
            .into_iter()
            .map(|(gram, c)| {
                let d = df.get(gram).copied().unwrap_or(0).max(1) as f64;
                (gram.to_vec(), c as f64 * (log_n - d.ln()))
            })
            .collect()
    };

    let mut total = 0.0;
    for item in corpus.items() {
        let mut item_score = 0.0;
        for n in 1..=CIDER_MAX_ORDER {
            let pv = vector(&item.prediction, n);
            let mut sim = 0.0;
            for r in &item.references {
                sim += cosine(&pv, &vector(r, n));
            }
            item_score += sim / item.references.len() as f64;
        }
        total += item_score / CIDER_MAX_ORDER as f64;
    }
    MetricScore::new("cider", 10.0 * total / n_items, Scale::Cider)
}

fn cosine(a: &BTreeMap<Vec<String>, f64>, b: &BTreeMap<Vec<String>, f64>) -> f64 {
    let norm = |v: &BTreeMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(g, x)| b.get(g).map(|y| x * y))
        .sum();
    dot / (na * nb)
}
