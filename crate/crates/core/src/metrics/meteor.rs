//! Exact-match METEOR without stemming, synonyms or paraphrases.

use std::collections::HashMap;

use super::corpus::EvalCorpus;
use super::{MetricScore, Scale};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeteorParams {
    /// Weight of precision in the harmonic mean.
    pub alpha: f64,
    /// Maximum fragmentation penalty.
    pub gamma: f64,
    /// Penalty exponent.
    pub theta: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            gamma: 0.5,
            theta: 3.0,
        }
    }
}

/// Search nodes spent per alignment before settling for the best found.
const ALIGN_BUDGET: usize = 200_000;

pub fn meteor_lite(corpus: &EvalCorpus) -> MetricScore {
    meteor_lite_with(corpus, MeteorParams::default())
}

/// Per item the best score over references, averaged over items.
pub fn meteor_lite_with(corpus: &EvalCorpus, params: MeteorParams) -> MetricScore {
    let mut sum = 0.0;
    for item in corpus.items() {
        let best = item
            .references
            .iter()
            .map(|r| sentence_meteor(&item.prediction, r, params))
            .fold(0.0, f64::max);
        sum += best;
    }
    MetricScore::new("meteor_lite", sum / corpus.len() as f64, Scale::Unit)
}

pub fn sentence_meteor(pred: &[String], reference: &[String], params: MeteorParams) -> f64 {
    let (matches, chunks) = align(pred, reference);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / pred.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    let frag = chunks as f64 / m;
    let penalty = params.gamma * frag.powf(params.theta);
    fmean * (1.0 - penalty)
}

/// Maximum exact-match alignment with the fewest chunks: `(matches, chunks)`.
///
/// Every maximum matching pairs `min(count_pred(w), count_ref(w))` copies of
/// each word `w`; which copies pair up only changes the chunk count, so the
/// search enumerates those choices depth first, pruning on the chunk count.
pub fn align(pred: &[String], reference: &[String]) -> (usize, usize) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, w) in reference.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut pred_left: HashMap<&str, usize> = HashMap::new();
    for w in pred {
        *pred_left.entry(w.as_str()).or_insert(0) += 1;
    }
    let matches: usize = pred_left
        .iter()
        .map(|(w, &c)| c.min(positions.get(w).map_or(0, Vec::len)))
        .sum();
    if matches == 0 {
        return (0, 0);
    }

    let mut search = ChunkSearch {
        pred,
        positions: &positions,
        used: vec![false; reference.len()],
        best: usize::MAX,
        nodes: 0,
    };
    // Copies of each word still to be aligned.
    let mut need: HashMap<&str, usize> = pred_left
        .iter()
        .map(|(w, &c)| (*w, c.min(positions.get(w).map_or(0, Vec::len))))
        .collect();
    search.run(0, None, 0, &mut need, &mut pred_left);
    (matches, search.best)
}

struct ChunkSearch<'a> {
    pred: &'a [String],
    positions: &'a HashMap<&'a str, Vec<usize>>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl<'a> ChunkSearch<'a> {
    /// `last`: (pred index, ref index) of the previous aligned pair.
    fn run(
        &mut self,
        i: usize,
        last: Option<(usize, usize)>,
        chunks: usize,
        need: &mut HashMap<&'a str, usize>,
        pred_left: &mut HashMap<&'a str, usize>,
    ) {
        if chunks >= self.best {
            return;
        }
        if i == self.pred.len() {
            self.best = chunks;
            return;
        }
        self.nodes += 1;
        if self.nodes > ALIGN_BUDGET && self.best != usize::MAX {
            return;
        }
        let word = self.pred[i].as_str();
        let needed = need.get(word).copied().unwrap_or(0);
        let left = pred_left[word];
        *pred_left.get_mut(word).unwrap() -= 1;

        if needed > 0 {
            // Try continuing the current chunk first, then other free slots.
            let mut options: Vec<usize> = self.positions[word]
                .iter()
                .copied()
                .filter(|&j| !self.used[j])
                .collect();
            let cont = last.and_then(|(pi, pj)| (pi + 1 == i).then_some(pj + 1));
            options.sort_by_key(|&j| (Some(j) != cont, j));
            for j in options {
                let extra = usize::from(Some(j) != cont);
                self.used[j] = true;
                *need.get_mut(word).unwrap() -= 1;
                self.run(i + 1, Some((i, j)), chunks + extra, need, pred_left);
                *need.get_mut(word).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // Leave this token unaligned if the later copies can still supply
        // every match this word needs.
        if left > needed {
            self.run(i + 1, last, chunks, need, pred_left);
        }
        *pred_left.get_mut(word).unwrap() += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_one_chunk() {
        let p = MeteorParams::default();
        let s = sentence_meteor(&t("a b c d"), &t("a b c d"), p);
        assert!((s - (1.0 - 0.5 * (0.25f64).powi(3))).abs() < 1e-15);
    }

    #[test]
    fn swapped_pair_two_chunks() {
        let p = MeteorParams::default();
        assert_eq!(align(&t("b a"), &t("a b")), (2, 2));
        assert!((sentence_meteor(&t("b a"), &t("a b"), p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_overlap() {
        let c = EvalCorpus::new(vec![("x y", vec!["a b"])]).unwrap();
        assert_eq!(meteor_lite(&c).value, 0.0);
    }

    #[test]
    fn repeated_words_pick_fewest_chunks() {
        // Greedy left-to-right would pair the first "the" with ref 0 and
        // break the "the cat" chunk.
        assert_eq!(align(&t("the cat"), &t("the dog the cat")), (2, 1));
        assert_eq!(align(&t("a a b"), &t("b a a")), (3, 2));
        assert_eq!(align(&t("a x a b"), &t("a b")), (2, 1));
    }
}
