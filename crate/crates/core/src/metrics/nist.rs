use std::collections::HashMap;

use super::corpus::{max_ref_counts, ngram_counts, EvalCorpus};
use super::{MetricScore, Scale};

pub const NIST_MAX_ORDER: usize = 5;

/// Corpus NIST score.
///
/// Each matched n-gram (clipped as in BLEU) contributes its information
/// weight `log2(count(w1..w(n-1)) / count(w1..wn))`, with counts taken over
/// all reference sentences (for unigrams the numerator is the total number
/// of reference words). Per order the weights are divided by the number of
/// predicted n-grams, summed over orders 1..5, and multiplied by
/// `exp(beta * ln²(min(1, sys_len / ref_len)))`, with `beta` chosen so that
/// the factor is 0.5 at a length ratio of 2/3. `ref_len` sums each item's
/// mean reference length.
pub fn nist(corpus: &EvalCorpus) -> MetricScore {
    let info = InfoWeights::new(corpus);
    let mut weighted = [0.0f64; NIST_MAX_ORDER];
    let mut total = [0usize; NIST_MAX_ORDER];
    let mut sys_len = 0usize;
    let mut ref_len = 0.0f64;
    for item in corpus.items() {
        sys_len += item.prediction.len();
        let refs = &item.references;
        ref_len += refs.iter().map(Vec::len).sum::<usize>() as f64 / refs.len() as f64;
        for n in 1..=NIST_MAX_ORDER {
            let clip = max_ref_counts(refs, n);
            let mut grams: Vec<(&[String], usize)> = ngram_counts(&item.prediction, n).into_iter().collect();
            grams.sort();
            for (gram, count) in grams {
                total[n - 1] += count;
                let hits = count.min(clip.get(gram).copied().unwrap_or(0));
                if hits > 0 {
                    weighted[n - 1] += hits as f64 * info.weight(gram);
                }
            }
        }
    }
    let mut score = 0.0;
    for n in 0..NIST_MAX_ORDER {
        if total[n] > 0 {
            score += weighted[n] / total[n] as f64;
        }
    }
    let value = score * brevity_factor(sys_len as f64, ref_len);
    MetricScore::new("nist", value, Scale::Nist)
}

pub(crate) fn brevity_factor(sys_len: f64, ref_len: f64) -> f64 {
    if ref_len <= 0.0 {
        return 1.0;
    }
    let ratio = (sys_len / ref_len).min(1.0);
    if ratio <= 0.0 {
        return 0.0;
    }
    let beta = 0.5f64.ln() / 1.5f64.ln().powi(2);
    (beta * ratio.ln().powi(2)).exp()
}

struct InfoWeights<'a> {
    counts: HashMap<&'a [String], usize>,
    words: usize,
}

impl<'a> InfoWeights<'a> {
    fn new(corpus: &'a EvalCorpus) -> Self {
        let mut counts = HashMap::new();
        let mut words = 0;
        for item in corpus.items() {
            for r in &item.references {
                words += r.len();
                for n in 1..=NIST_MAX_ORDER {
                    for (gram, c) in ngram_counts(r, n) {
                        *counts.entry(gram).or_insert(0) += c;
                    }
                }
            }
        }
        InfoWeights { counts, words }
    }

    fn weight(&self, gram: &[String]) -> f64 {
        let count = self.counts.get(gram).copied().unwrap_or(0);
        if count == 0 {
            return 0.0;
        }
        let context = if gram.len() == 1 {
            self.words
        } else {
            self.counts.get(&gram[..gram.len() - 1]).copied().unwrap_or(0)
        };
        (context as f64 / count as f64).log2()
    }
}
