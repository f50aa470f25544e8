//! Greedy and beam-search decoding with cached decoder keys and values.

use std::cmp::Ordering;

use super::linalg::{add_assign, gemm, log_softmax, Mat, MatMut, Real};
use super::model::{add_position, attend, Seg, Transformer};
use crate::subword::{BOS_ID, EOS_ID, PAD_ID};

/// Anything that scores the next token given a decoding prefix.
pub trait StepScorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State before any token has been generated.
    fn start(&self) -> Self::State;

    /// Feeds `tokens[i]` to `states[i]` and returns next-token
    /// log-probabilities for each hypothesis.
    fn step(&self, states: &mut [Self::State], tokens: &[u32]) -> Vec<Vec<f64>>;
}

/// Tokens that are never generated.
fn banned(token: u32) -> bool {
    token == PAD_ID || token == BOS_ID
}

/// Decoder state of one hypothesis: cached self-attention keys and values
/// per layer.
#[derive(Clone, Debug)]
pub struct CacheState<T> {
    pos: usize,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
}

/// A transformer bound to one encoded source sentence.
pub struct IncrementalDecoder<'a, T> {
    model: &'a Transformer<T>,
    src_len: usize,
    cross_k: Vec<Vec<T>>,
    cross_v: Vec<Vec<T>>,
}

impl<'a, T: Real> IncrementalDecoder<'a, T> {
    pub fn new(model: &'a Transformer<T>, source: &[u32]) -> Self {
        assert!(!source.is_empty(), "empty source");
        let enc = model.encode(source);
        let p = model.params();
        let n = source.len();
        let (cross_k, cross_v) = model
            .layout()
            .dec
            .iter()
            .map(|l| (l.cross_attn.k.forward(p, &enc, n), l.cross_attn.v.forward(p, &enc, n)))
            .unzip();
        IncrementalDecoder {
            model,
            src_len: n,
            cross_k,
            cross_v,
        }
    }

    /// Raw logits for each hypothesis after feeding `tokens`.
    pub fn step_logits(&self, states: &mut [CacheState<T>], tokens: &[u32]) -> Vec<T> {
        let m = self.model;
        let cfg = m.config();
        let (d, v, heads) = (cfg.d_model, cfg.vocab_size, cfg.heads);
        let p = m.params();
        let layout = m.layout();
        let b = tokens.len();
        let emb = &p[layout.embedding.clone()];
        let scale = T::of((d as f64).sqrt());
        let mut x = vec![T::zero(); b * d];
        for (i, (&t, st)) in tokens.iter().zip(states.iter()).enumerate() {
            let row = &mut x[i * d..(i + 1) * d];
            for (o, &e) in row.iter_mut().zip(&emb[t as usize * d..(t as usize + 1) * d]) {
                *o = e * scale;
            }
            add_position(row, st.pos);
        }
        let one = |i: usize| Seg { off: i, len: 1 };
        for (l, layer) in layout.dec.iter().enumerate() {
            let (h, _) = layer.ln_self.forward(p, &x);
            let q = layer.self_attn.q.forward(p, &h, b);
            let k = layer.self_attn.k.forward(p, &h, b);
            let val = layer.self_attn.v.forward(p, &h, b);
            let mut ctx = vec![T::zero(); b * d];
            for (i, st) in states.iter_mut().enumerate() {
                st.keys[l].extend_from_slice(&k[i * d..(i + 1) * d]);
                st.values[l].extend_from_slice(&val[i * d..(i + 1) * d]);
                let len = st.keys[l].len() / d;
                let (c, _) = attend(
                    &q[i * d..(i + 1) * d],
                    &st.keys[l],
                    &st.values[l],
                    &[one(0)],
                    &[Seg { off: 0, len }],
                    false,
                    heads,
                    d,
                );
                ctx[i * d..(i + 1) * d].copy_from_slice(&c);
            }
            add_assign(&mut x, &layer.self_attn.o.forward(p, &ctx, b));

            let (h, _) = layer.ln_cross.forward(p, &x);
            let q = layer.cross_attn.q.forward(p, &h, b);
            let qs: Vec<Seg> = (0..b).map(one).collect();
            let ks = vec![Seg { off: 0, len: self.src_len }; b];
            let (ctx, _) = attend(&q, &self.cross_k[l], &self.cross_v[l], &qs, &ks, false, heads, d);
            add_assign(&mut x, &layer.cross_attn.o.forward(p, &ctx, b));

            let (h, _) = layer.ln_ff.forward(p, &x);
            let mut up = layer.ff.up.forward(p, &h, b);
            for u in &mut up {
                *u = u.max(T::zero());
            }
            add_assign(&mut x, &layer.ff.down.forward(p, &up, b));
        }
        let (y, _) = layout.dec_norm.forward(p, &x);
        let mut logits = vec![T::zero(); b * v];
        gemm(
            T::of(1.0 / (d as f64).sqrt()),
            Mat::new(&y, b, d),
            Mat::new(&p[layout.output_matrix()], v, d).t(),
            T::zero(),
            MatMut::new(&mut logits, b, v),
        );
        for st in states.iter_mut() {
            st.pos += 1;
        }
        logits
    }
}

impl<T: Real> StepScorer for IncrementalDecoder<'_, T> {
    type State = CacheState<T>;

    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }

    fn start(&self) -> CacheState<T> {
        let layers = self.model.config().layers;
        CacheState {
            pos: 0,
            keys: vec![Vec::new(); layers],
            values: vec![Vec::new(); layers],
        }
    }

    fn step(&self, states: &mut [CacheState<T>], tokens: &[u32]) -> Vec<Vec<f64>> {
        let v = self.vocab_size();
        self.step_logits(states, tokens)
            .chunks_exact(v)
            .map(|row| log_softmax(row).into_iter().map(|x| x.f64()).collect())
            .collect()
    }
}

/// A decoded sequence. `tokens` ends with `<eos>` when `finished`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability divided by length, `<eos>` included.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens without the trailing `<eos>`.
    pub fn output(&self) -> &[u32] {
        match self.tokens.last() {
            Some(&EOS_ID) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Argmax decoding; ties go to the smaller token id.
pub fn greedy_decode<S: StepScorer>(scorer: &S, max_len: usize) -> Hypothesis {
    let mut state = [scorer.start()];
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    let mut last = BOS_ID;
    for _ in 0..max_len {
        let lp = scorer.step(&mut state, &[last]).remove(0);
        let (best, &best_lp) = lp
            .iter()
            .enumerate()
            .filter(|(t, _)| !banned(*t as u32))
            .fold((usize::MAX, &f64::NEG_INFINITY), |acc, (t, l)| if *l > *acc.1 { (t, l) } else { acc });
        let best = best as u32;
        tokens.push(best);
        log_prob += best_lp;
        last = best;
        if best == EOS_ID {
            return Hypothesis {
                tokens,
                log_prob,
                finished: true,
            };
        }
    }
    Hypothesis {
        tokens,
        log_prob,
        finished: false,
    }
}

/// Length-normalised beam search.
///
/// Every step expands all live hypotheses and keeps the `beam` best
/// continuations by summed log-probability (ties: earlier parent, then
/// smaller token id). Continuations ending in `<eos>` leave the beam.
/// Search stops once `beam` hypotheses have finished or after `max_len`
/// tokens, at which point unfinished hypotheses compete as they are. The
/// result maximises log-probability divided by length; equal scores go to
/// the lexicographically smaller token sequence.
pub fn beam_decode<S: StepScorer>(scorer: &S, beam: usize, max_len: usize) -> Hypothesis {
    let beam = beam.max(1);
    let mut live: Vec<(Hypothesis, S::State)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        scorer.start(),
    )];
    let mut done: Vec<Hypothesis> = Vec::new();
    let mut exhausted = true;
    for _ in 0..max_len {
        let last: Vec<u32> = live.iter().map(|(h, _)| *h.tokens.last().unwrap_or(&BOS_ID)).collect();
        let mut states: Vec<S::State> = live.iter().map(|(_, s)| s.clone()).collect();
        let lps = scorer.step(&mut states, &last);
        let mut cands: Vec<(f64, usize, u32)> = Vec::new();
        for (i, lp) in lps.iter().enumerate() {
            for (t, &l) in lp.iter().enumerate() {
                if !banned(t as u32) && l > f64::NEG_INFINITY {
                    cands.push((live[i].0.log_prob + l, i, t as u32));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(beam);
        let mut next = Vec::with_capacity(cands.len());
        for (lp, i, t) in cands {
            let mut tokens = live[i].0.tokens.clone();
            tokens.push(t);
            let h = Hypothesis {
                tokens,
                log_prob: lp,
                finished: t == EOS_ID,
            };
            if h.finished {
                done.push(h);
            } else {
                next.push((h, states[i].clone()));
            }
        }
        live = next;
        if done.len() >= beam || live.is_empty() {
            exhausted = false;
            break;
        }
    }
    if exhausted {
        done.extend(live.into_iter().map(|(h, _)| h));
    }
    done.into_iter()
        .max_by(hypothesis_order)
        .unwrap_or(Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        })
}

/// Summed log-probability of forcing `tokens` through the scorer.
pub fn sequence_log_prob<S: StepScorer>(scorer: &S, tokens: &[u32]) -> f64 {
    let mut state = [scorer.start()];
    let mut last = BOS_ID;
    let mut total = 0.0;
    for &t in tokens {
        total += scorer.step(&mut state, &[last])[0][t as usize];
        last = t;
    }
    total
}

/// Compare two hypotheses the way [`beam_decode`] ranks them.
pub fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    a.score().total_cmp(&b.score()).then_with(|| b.tokens.cmp(&a.tokens))
}

/// Decode one source sentence with the model.
pub fn decode_source<T: Real>(model: &Transformer<T>, source: &[u32], beam: usize, max_len: usize) -> Hypothesis {
    let dec = IncrementalDecoder::new(model, source);
    if beam <= 1 {
        greedy_decode(&dec, max_len)
    } else {
        beam_decode(&dec, beam, max_len)
    }
}
