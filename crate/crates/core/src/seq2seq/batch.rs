//! Training examples, padded batches, and the pre-training example streams.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Seq2SeqError;
use crate::subword::{SubwordModel, BOS_ID, EOS_ID, MASK_ID, PAD_ID, TO_CS_ID, TO_EN_ID, TRANSLATE_ID};

/// One source/target pair in token ids. The target carries no `<bos>` or
/// `<eos>`; batching adds them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqExample {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

impl Seq2SeqExample {
    pub fn new(source: Vec<u32>, target: Vec<u32>) -> Self {
        Seq2SeqExample { source, target }
    }

    /// Keep at most `max_len` source tokens and `max_len - 1` target tokens.
    pub fn truncated(mut self, max_len: usize) -> Self {
        self.source.truncate(max_len);
        self.target.truncate(max_len.saturating_sub(1));
        self
    }
}

/// Padded id matrices, row-major, with masks marking real tokens.
///
/// Target rows hold `<bos> tokens… <eos>`; the decoder reads all but the
/// last kept token and predicts all but the first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub source: Vec<u32>,
    pub source_mask: Vec<bool>,
    pub tgt_len: usize,
    pub target: Vec<u32>,
    pub target_mask: Vec<bool>,
}

impl Batch {
    pub fn new(examples: &[Seq2SeqExample]) -> Self {
        let src_len = examples.iter().map(|e| e.source.len()).max().unwrap_or(0);
        let tgt_len = examples.iter().map(|e| e.target.len() + 2).max().unwrap_or(0);
        let mut b = Batch {
            size: examples.len(),
            src_len,
            source: Vec::with_capacity(examples.len() * src_len),
            source_mask: Vec::with_capacity(examples.len() * src_len),
            tgt_len,
            target: Vec::with_capacity(examples.len() * tgt_len),
            target_mask: Vec::with_capacity(examples.len() * tgt_len),
        };
        for e in examples {
            push_row(&mut b.source, &mut b.source_mask, e.source.iter().copied(), src_len);
            let tgt = std::iter::once(BOS_ID)
                .chain(e.target.iter().copied())
                .chain(std::iter::once(EOS_ID));
            push_row(&mut b.target, &mut b.target_mask, tgt, tgt_len);
        }
        b
    }

    /// The same batch with extra padding columns on both sides.
    pub fn padded(&self, extra_src: usize, extra_tgt: usize) -> Self {
        let widen = |ids: &[u32], mask: &[bool], len: usize, extra: usize| {
            let mut out_ids = Vec::new();
            let mut out_mask = Vec::new();
            for r in 0..self.size {
                out_ids.extend_from_slice(&ids[r * len..(r + 1) * len]);
                out_ids.extend(std::iter::repeat_n(PAD_ID, extra));
                out_mask.extend_from_slice(&mask[r * len..(r + 1) * len]);
                out_mask.extend(std::iter::repeat_n(false, extra));
            }
            (out_ids, out_mask)
        };
        let (source, source_mask) = widen(&self.source, &self.source_mask, self.src_len, extra_src);
        let (target, target_mask) = widen(&self.target, &self.target_mask, self.tgt_len, extra_tgt);
        Batch {
            size: self.size,
            src_len: self.src_len + extra_src,
            source,
            source_mask,
            tgt_len: self.tgt_len + extra_tgt,
            target,
            target_mask,
        }
    }

    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let shape_ok = self.source.len() == self.size * self.src_len
            && self.source_mask.len() == self.source.len()
            && self.target.len() == self.size * self.tgt_len
            && self.target_mask.len() == self.target.len();
        if !shape_ok {
            return Err(Seq2SeqError::Batch("id matrix and mask shapes disagree".into()));
        }
        let mask_ok = |ids: &[u32], mask: &[bool]| ids.iter().zip(mask).all(|(&t, &m)| m == (t != PAD_ID));
        if !mask_ok(&self.source, &self.source_mask) || !mask_ok(&self.target, &self.target_mask) {
            return Err(Seq2SeqError::Batch("mask does not match padding".into()));
        }
        for r in 0..self.size {
            if self.source_row(r).is_empty() {
                return Err(Seq2SeqError::Batch(format!("example {r} has an empty source")));
            }
            if self.target_row(r).len() < 2 {
                return Err(Seq2SeqError::Batch(format!("example {r} has no target to predict")));
            }
        }
        Ok(())
    }

    /// Unpadded source tokens of example `r`.
    pub fn source_row(&self, r: usize) -> Vec<u32> {
        kept(&self.source, &self.source_mask, r, self.src_len)
    }

    /// Unpadded target tokens of example `r`, `<bos>` and `<eos>` included.
    pub fn target_row(&self, r: usize) -> Vec<u32> {
        kept(&self.target, &self.target_mask, r, self.tgt_len)
    }

    /// Number of predicted target tokens.
    pub fn target_tokens(&self) -> usize {
        (0..self.size).map(|r| self.target_row(r).len().saturating_sub(1)).sum()
    }
}

fn push_row(ids: &mut Vec<u32>, mask: &mut Vec<bool>, row: impl Iterator<Item = u32>, len: usize) {
    let start = ids.len();
    ids.extend(row);
    mask.extend(std::iter::repeat_n(true, ids.len() - start));
    while ids.len() < start + len {
        ids.push(PAD_ID);
        mask.push(false);
    }
}

fn kept(ids: &[u32], mask: &[bool], r: usize, len: usize) -> Vec<u32> {
    ids[r * len..(r + 1) * len]
        .iter()
        .zip(&mask[r * len..(r + 1) * len])
        .filter(|(_, &m)| m)
        .map(|(&t, _)| t)
        .collect()
}

/// Pre-training objective on parallel data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainMode {
    /// English → Czech only.
    Nmt,
    /// Both directions.
    Binmt,
}

/// Translation examples: `[TRANSLATE] <2cs> english → czech`, plus the
/// reverse direction with `<2en>` in bidirectional mode.
pub fn make_pretrain_batches<S: AsRef<str>>(
    pairs: &[(S, S)],
    mode: PretrainMode,
    subword: &SubwordModel,
) -> Vec<Seq2SeqExample> {
    let mut out = Vec::with_capacity(pairs.len() * 2);
    for (en, cs) in pairs {
        let en_ids = subword.encode(en.as_ref()).0;
        let cs_ids = subword.encode(cs.as_ref()).0;
        out.push(translate(TO_CS_ID, &en_ids, &cs_ids));
        if mode == PretrainMode::Binmt {
            out.push(translate(TO_EN_ID, &cs_ids, &en_ids));
        }
    }
    out
}

fn translate(lang: u32, from: &[u32], to: &[u32]) -> Seq2SeqExample {
    let mut source = Vec::with_capacity(from.len() + 2);
    source.push(TRANSLATE_ID);
    source.push(lang);
    source.extend_from_slice(from);
    Seq2SeqExample::new(source, to.to_vec())
}

/// Span-masking examples from monolingual token sequences.
///
/// A span of `⌈span_fraction · len⌉` tokens at a uniformly drawn start is
/// replaced by `<mask>` in the source and becomes the target. Empty
/// sentences are skipped.
pub fn make_mass_batches<R: Rng + ?Sized>(
    sentences: &[Vec<u32>],
    span_fraction: f64,
    rng: &mut R,
) -> Result<Vec<Seq2SeqExample>, Seq2SeqError> {
    if !(span_fraction > 0.0 && span_fraction <= 1.0) {
        return Err(Seq2SeqError::Config(format!("span fraction {span_fraction} outside (0, 1]")));
    }
    let mut out = Vec::with_capacity(sentences.len());
    for s in sentences.iter().filter(|s| !s.is_empty()) {
        let n = s.len();
        let span = ((span_fraction * n as f64).ceil() as usize).clamp(1, n);
        let start = rng.random_range(0..=n - span);
        let mut source = s.clone();
        source[start..start + span].fill(MASK_ID);
        out.push(Seq2SeqExample::new(source, s[start..start + span].to_vec()));
    }
    Ok(out)
}

/// Shuffle `examples` and cut them into batches of `batch_size`.
pub fn shuffled_batches<R: Rng + ?Sized>(examples: &[Seq2SeqExample], batch_size: usize, rng: &mut R) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|idx| Batch::new(&idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subword::train_subword;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_pads_and_masks() {
        let b = Batch::new(&[
            Seq2SeqExample::new(vec![10, 11, 12], vec![20]),
            Seq2SeqExample::new(vec![13], vec![21, 22, 23]),
        ]);
        assert_eq!((b.src_len, b.tgt_len), (3, 5));
        assert_eq!(b.source, vec![10, 11, 12, 13, 0, 0]);
        assert_eq!(b.target_row(0), vec![BOS_ID, 20, EOS_ID]);
        assert_eq!(b.target_row(1), vec![BOS_ID, 21, 22, 23, EOS_ID]);
        assert_eq!(b.target_tokens(), 2 + 4);
        b.validate().unwrap();
        let p = b.padded(2, 3);
        p.validate().unwrap();
        assert_eq!(p.source_row(1), b.source_row(1));
        assert_eq!(p.target_row(0), b.target_row(0));
    }

    #[test]
    fn inconsistent_mask_rejected() {
        let mut b = Batch::new(&[Seq2SeqExample::new(vec![10], vec![20])]);
        b.source_mask[0] = false;
        assert!(b.validate().is_err());
    }

    #[test]
    fn nmt_and_binmt_streams() {
        let sw = train_subword(["hello world", "ahoj svete"], 300).unwrap();
        let pairs = [("hello world", "ahoj svete")];
        let nmt = make_pretrain_batches(&pairs, PretrainMode::Nmt, &sw);
        assert_eq!(nmt.len(), 1);
        assert_eq!(sw.decode_ids(&nmt[0].source).unwrap(), "[TRANSLATE] <2cs> hello world");
        assert_eq!(sw.decode_ids(&nmt[0].target).unwrap(), "ahoj svete");
        let bi = make_pretrain_batches(&pairs, PretrainMode::Binmt, &sw);
        assert_eq!(bi.len(), 2 * nmt.len());
        assert_eq!(sw.decode_ids(&bi[1].source).unwrap(), "[TRANSLATE] <2en> ahoj svete");
        assert_eq!(sw.decode_ids(&bi[1].target).unwrap(), "hello world");
    }

    #[test]
    fn mass_span_shapes() {
        let s: Vec<u32> = (100..110).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ex = make_mass_batches(std::slice::from_ref(&s), 0.5, &mut rng).unwrap();
        assert_eq!(ex[0].source.iter().filter(|&&t| t == MASK_ID).count(), 5);
        assert_eq!(ex[0].target.len(), 5);
        let start = ex[0].source.iter().position(|&t| t == MASK_ID).unwrap();
        assert_eq!(&s[start..start + 5], &ex[0].target[..]);

        let full = make_mass_batches(std::slice::from_ref(&s), 1.0, &mut rng).unwrap();
        assert_eq!(full[0].target, s);
        assert!(full[0].source.iter().all(|&t| t == MASK_ID));

        let again = make_mass_batches(&[s.clone(), s.clone()], 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let twice = make_mass_batches(&[s.clone(), s], 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(again, twice);
    }
}
