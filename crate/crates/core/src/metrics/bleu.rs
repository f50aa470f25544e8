use super::corpus::{max_ref_counts, ngram_counts, EvalCorpus};
use super::{MetricScore, Scale};

pub const BLEU_MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuOptions {
    /// Add one to matched and total counts for orders above one.
    pub add_one_smoothing: bool,
}

/// Corpus BLEU on a 0–100 scale.
///
/// Clipped n-gram precisions for n = 1..4 (clip = largest count in any one
/// reference), geometric mean, times the brevity penalty. The effective
/// reference length of an item is the reference length closest to the
/// prediction length, the shorter one on ties.
pub fn bleu(corpus: &EvalCorpus) -> MetricScore {
    bleu_with(corpus, BleuOptions::default())
}

pub fn bleu_with(corpus: &EvalCorpus, opts: BleuOptions) -> MetricScore {
    let mut matched = [0usize; BLEU_MAX_ORDER];
    let mut total = [0usize; BLEU_MAX_ORDER];
    let mut pred_len = 0usize;
    let mut ref_len = 0usize;
    for item in corpus.items() {
        let c = item.prediction.len();
        pred_len += c;
        ref_len += closest_ref_len(c, item.references.iter().map(Vec::len));
        for n in 1..=BLEU_MAX_ORDER {
            let clip = max_ref_counts(&item.references, n);
            for (gram, count) in ngram_counts(&item.prediction, n) {
                matched[n - 1] += count.min(clip.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }

    let mut log_sum = 0.0;
    for n in 0..BLEU_MAX_ORDER {
        let (m, t) = if opts.add_one_smoothing && n > 0 {
            (matched[n] + 1, total[n] + 1)
        } else {
            (matched[n], total[n])
        };
        if m == 0 || t == 0 {
            return MetricScore::new("bleu", 0.0, Scale::Bleu);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = if pred_len == 0 {
        0.0
    } else if pred_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / pred_len as f64).exp()
    };
    let value = 100.0 * bp * (log_sum / BLEU_MAX_ORDER as f64).exp();
    MetricScore::new("bleu", value, Scale::Bleu)
}

fn closest_ref_len(pred: usize, refs: impl Iterator<Item = usize>) -> usize {
    refs.min_by_key(|&r| (r.abs_diff(pred), r)).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exactly_100() {
        let corpus = EvalCorpus::new(vec![
            ("the cat sat on the mat", vec!["the cat sat on the mat"]),
            ("Kočár z Vídně je v centru .", vec!["Kočár z Vídně je v centru ."]),
        ])
        .unwrap();
        assert_eq!(bleu(&corpus).value, 100.0);
    }

    #[test]
    fn repeated_word_is_clipped_to_zero() {
        // unigram 1/4 after clipping, no bigram matches → 0 without smoothing.
        let corpus = EvalCorpus::new(vec![("the the the the", vec!["the cat"])]).unwrap();
        assert_eq!(bleu(&corpus).value, 0.0);
        let smoothed = bleu_with(&corpus, BleuOptions { add_one_smoothing: true });
        // p1 = 1/4, p2 = 1/4, p3 = 1/3, p4 = 1/2; prediction longer than reference.
        let want = 100.0 * (0.25f64 * 0.25 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((smoothed.value - want).abs() < 1e-9);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let corpus = EvalCorpus::new(vec![("", vec!["a b c d"])]).unwrap();
        assert_eq!(bleu(&corpus).value, 0.0);
    }

    #[test]
    fn closest_length_prefers_shorter_on_tie() {
        assert_eq!(closest_ref_len(5, [3, 7, 4, 6].into_iter()), 4);
        assert_eq!(closest_ref_len(5, [9, 5].into_iter()), 5);
    }
}
