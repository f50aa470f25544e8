use super::corpus::EvalCorpus;
use super::{MetricScore, Scale};

pub const ROUGE_BETA: f64 = 1.2;

/// ROUGE-L: per item the best LCS F-measure over its references
/// (`F = (1 + β²)·P·R / (R + β²·P)`, β = 1.2), averaged over items.
pub fn rouge_l(corpus: &EvalCorpus) -> MetricScore {
    rouge_l_with(corpus, ROUGE_BETA)
}

pub fn rouge_l_with(corpus: &EvalCorpus, beta: f64) -> MetricScore {
    let mut sum = 0.0;
    for item in corpus.items() {
        let best = item
            .references
            .iter()
            .map(|r| lcs_f(&item.prediction, r, beta))
            .fold(0.0, f64::max);
        sum += best;
    }
    MetricScore::new("rouge_l", sum / corpus.len() as f64, Scale::Unit)
}

pub(crate) fn lcs_f(pred: &[String], reference: &[String], beta: f64) -> f64 {
    let lcs = lcs_len(pred, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / pred.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Recall of the best-matching reference, `LCS / |ref|`.
pub fn lcs_recall(pred: &[String], reference: &[String]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    lcs_len(pred, reference) as f64 / reference.len() as f64
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
