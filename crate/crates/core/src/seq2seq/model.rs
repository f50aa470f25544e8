//! Encoder-decoder forward pass, label-smoothed loss and backpropagation.
//!
//! Tokens of a batch are packed without padding: every kept token is one
//! row, and attention runs per example over that example's rows only. Pad
//! columns therefore cannot influence anything.

use rand::{Rng, RngCore};

use super::batch::Batch;
use super::config::TransformerConfig;
use super::linalg::{add_assign, gemm, log_softmax, softmax_rows, LnCache, Mat, MatMut, Real};
use super::params::{AttnParams, FfParams, ParamLayout};
use super::Seq2SeqError;

/// Rows `[off, off + len)` of a packed matrix belong to one example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Seg {
    pub off: usize,
    pub len: usize,
}

fn segments(lens: impl Iterator<Item = usize>) -> Vec<Seg> {
    let mut off = 0;
    lens.map(|len| {
        let s = Seg { off, len };
        off += len;
        s
    })
    .collect()
}

/// Sinusoidal position encoding of one position.
pub(crate) fn add_position<T: Real>(row: &mut [T], pos: usize) {
    let d = row.len();
    for i in (0..d).step_by(2) {
        let angle = pos as f64 / 10000f64.powf(i as f64 / d as f64);
        row[i] += T::of(angle.sin());
        if i + 1 < d {
            row[i + 1] += T::of(angle.cos());
        }
    }
}

/// Decoder logits, one row per predicted target token.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits<T> {
    pub data: Vec<T>,
    pub vocab: usize,
    segs: Vec<Seg>,
}

impl<T: Real> Logits<T> {
    /// Logits predicting target token `pos` (0-based, after `<bos>`) of
    /// example `example`.
    pub fn row(&self, example: usize, pos: usize) -> &[T] {
        let s = self.segs[example];
        assert!(pos < s.len);
        let r = s.off + pos;
        &self.data[r * self.vocab..(r + 1) * self.vocab]
    }

    pub fn positions(&self, example: usize) -> usize {
        self.segs[example].len
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    pub loss: T,
    pub logits: Logits<T>,
    pub target_tokens: usize,
}

struct Packed {
    src: Vec<u32>,
    src_segs: Vec<Seg>,
    dec_in: Vec<u32>,
    labels: Vec<u32>,
    tgt_segs: Vec<Seg>,
}

fn pack(batch: &Batch, vocab: usize) -> Result<Packed, Seq2SeqError> {
    batch.validate()?;
    let mut src = Vec::new();
    let mut dec_in = Vec::new();
    let mut labels = Vec::new();
    let mut src_lens = Vec::new();
    let mut tgt_lens = Vec::new();
    for r in 0..batch.size {
        let s = batch.source_row(r);
        let t = batch.target_row(r);
        src_lens.push(s.len());
        tgt_lens.push(t.len() - 1);
        src.extend(s);
        dec_in.extend_from_slice(&t[..t.len() - 1]);
        labels.extend_from_slice(&t[1..]);
    }
    if let Some(&bad) = src.iter().chain(&labels).chain(&dec_in).find(|&&t| t as usize >= vocab) {
        return Err(Seq2SeqError::Batch(format!("token id {bad} outside vocabulary of {vocab}")));
    }
    Ok(Packed {
        src,
        src_segs: segments(src_lens.into_iter()),
        dec_in,
        labels,
        tgt_segs: segments(tgt_lens.into_iter()),
    })
}

struct AttnTape<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
}

struct FfTape<T> {
    up: Vec<T>,
    act: Vec<T>,
}

struct EncTape<T> {
    ln_attn: LnCache<T>,
    h_attn: Vec<T>,
    attn: AttnTape<T>,
    drop_attn: Option<Vec<T>>,
    ln_ff: LnCache<T>,
    h_ff: Vec<T>,
    ff: FfTape<T>,
    drop_ff: Option<Vec<T>>,
}

struct DecTape<T> {
    ln_self: LnCache<T>,
    h_self: Vec<T>,
    self_attn: AttnTape<T>,
    drop_self: Option<Vec<T>>,
    ln_cross: LnCache<T>,
    h_cross: Vec<T>,
    cross_attn: AttnTape<T>,
    drop_cross: Option<Vec<T>>,
    ln_ff: LnCache<T>,
    h_ff: Vec<T>,
    ff: FfTape<T>,
    drop_ff: Option<Vec<T>>,
}

struct Tape<T> {
    packed: Packed,
    drop_src: Option<Vec<T>>,
    drop_tgt: Option<Vec<T>>,
    enc: Vec<EncTape<T>>,
    enc_ln: LnCache<T>,
    enc_out: Vec<T>,
    dec: Vec<DecTape<T>>,
    dec_ln: LnCache<T>,
    dec_out: Vec<T>,
    logits: Vec<T>,
}

/// Dropout context: `None` evaluates deterministically.
struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut dyn RngCore>,
}

impl Dropout<'_> {
    fn apply<T: Real>(&mut self, x: &mut [T]) -> Option<Vec<T>> {
        let rng = self.rng.as_mut()?;
        if self.rate <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.random::<f64>() < self.rate { T::zero() } else { keep })
            .collect();
        for (v, &m) in x.iter_mut().zip(&mask) {
            *v *= m;
        }
        Some(mask)
    }
}

fn mask_grad<T: Real>(d: &[T], mask: &Option<Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => d.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => d.to_vec(),
    }
}

/// Scaled dot-product attention for all examples and heads.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    qs: &[Seg],
    ks: &[Seg],
    causal: bool,
    heads: usize,
    d: usize,
) -> (Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let nq = qs.last().map_or(0, |s| s.off + s.len);
    let nk = ks.last().map_or(0, |s| s.off + s.len);
    let mut ctx = vec![T::zero(); nq * d];
    let mut probs = Vec::with_capacity(qs.iter().zip(ks).map(|(a, b)| a.len * b.len).sum::<usize>() * heads);
    for (qe, ke) in qs.iter().zip(ks) {
        for h in 0..heads {
            let mut s = vec![T::zero(); qe.len * ke.len];
            gemm(
                scale,
                Mat::new(q, nq, d).block(qe.off, qe.len, h * dh, dh),
                Mat::new(k, nk, d).block(ke.off, ke.len, h * dh, dh).t(),
                T::zero(),
                MatMut::new(&mut s, qe.len, ke.len),
            );
            if causal {
                for i in 0..qe.len {
                    for j in i + 1..ke.len {
                        s[i * ke.len + j] = T::neg_infinity();
                    }
                }
            }
            softmax_rows(&mut s, ke.len);
            gemm(
                T::one(),
                Mat::new(&s, qe.len, ke.len),
                Mat::new(v, nk, d).block(ke.off, ke.len, h * dh, dh),
                T::zero(),
                MatMut::new(&mut ctx, nq, d).block(qe.off, qe.len, h * dh, dh),
            );
            probs.extend(s);
        }
    }
    (ctx, probs)
}

#[allow(clippy::too_many_arguments)]
fn attend_backward<T: Real>(
    dctx: &[T],
    tape: &AttnTape<T>,
    qs: &[Seg],
    ks: &[Seg],
    heads: usize,
    d: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::of(1.0 / (dh as f64).sqrt());
    let nq = qs.last().map_or(0, |s| s.off + s.len);
    let nk = ks.last().map_or(0, |s| s.off + s.len);
    let mut dq = vec![T::zero(); nq * d];
    let mut dk = vec![T::zero(); nk * d];
    let mut dv = vec![T::zero(); nk * d];
    let mut poff = 0;
    for (qe, ke) in qs.iter().zip(ks) {
        let (lq, lk) = (qe.len, ke.len);
        for h in 0..heads {
            let p = &tape.probs[poff..poff + lq * lk];
            poff += lq * lk;
            let dctx_h = Mat::new(dctx, nq, d).block(qe.off, lq, h * dh, dh);
            let mut dp = vec![T::zero(); lq * lk];
            gemm(
                T::one(),
                dctx_h,
                Mat::new(&tape.v, nk, d).block(ke.off, lk, h * dh, dh).t(),
                T::zero(),
                MatMut::new(&mut dp, lq, lk),
            );
            gemm(
                T::one(),
                Mat::new(p, lq, lk).t(),
                dctx_h,
                T::one(),
                MatMut::new(&mut dv, nk, d).block(ke.off, lk, h * dh, dh),
            );
            // Softmax Jacobian, row by row.
            for i in 0..lq {
                let row_p = &p[i * lk..(i + 1) * lk];
                let row_dp = &mut dp[i * lk..(i + 1) * lk];
                let dot: T = row_p.iter().zip(row_dp.iter()).map(|(&a, &b)| a * b).sum();
                for (g, &pp) in row_dp.iter_mut().zip(row_p) {
                    *g = pp * (*g - dot);
                }
            }
            gemm(
                scale,
                Mat::new(&dp, lq, lk),
                Mat::new(&tape.k, nk, d).block(ke.off, lk, h * dh, dh),
                T::one(),
                MatMut::new(&mut dq, nq, d).block(qe.off, lq, h * dh, dh),
            );
            gemm(
                scale,
                Mat::new(&dp, lq, lk).t(),
                Mat::new(&tape.q, nq, d).block(qe.off, lq, h * dh, dh),
                T::one(),
                MatMut::new(&mut dk, nk, d).block(ke.off, lk, h * dh, dh),
            );
        }
    }
    (dq, dk, dv)
}

/// Trained or freshly initialised encoder-decoder.
#[derive(Clone, Debug)]
pub struct Transformer<T> {
    config: TransformerConfig,
    layout: ParamLayout,
    params: Vec<T>,
}

impl<T: Real> Transformer<T> {
    pub fn new<R: Rng + ?Sized>(config: TransformerConfig, rng: &mut R) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = layout.init(rng);
        Ok(Transformer { config, layout, params })
    }

    pub fn from_params(config: TransformerConfig, params: Vec<T>) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(Seq2SeqError::Shape {
                expected: layout.total(),
                got: params.len(),
            });
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Seq2SeqError::NonFinite("parameters".into()));
        }
        Ok(Transformer { config, layout, params })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// The same model in another precision.
    pub fn cast<U: Real>(&self) -> Transformer<U> {
        Transformer {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }

    /// Loss and logits without dropout.
    pub fn forward_loss(&self, batch: &Batch) -> Result<ForwardOutput<T>, Seq2SeqError> {
        let tape = self.forward(batch, None)?;
        self.finish(tape).map(|(out, _)| out)
    }

    /// Loss and gradient; dropout is active when `rng` is given.
    pub fn loss_and_grad(&self, batch: &Batch, rng: Option<&mut dyn RngCore>) -> Result<(T, Vec<T>), Seq2SeqError> {
        let tape = self.forward(batch, rng)?;
        let (out, dlogits) = self.finish(tape)?;
        let tape = dlogits.1;
        let grad = self.backward(&tape, &dlogits.0);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Seq2SeqError::NonFinite("gradient".into()));
        }
        Ok((out.loss, grad))
    }

    fn embed(&self, tokens: &[u32], segs: &[Seg]) -> Vec<T> {
        let d = self.config.d_model;
        let scale = T::of((d as f64).sqrt());
        let emb = &self.params[self.layout.embedding.clone()];
        let mut x = vec![T::zero(); tokens.len() * d];
        for s in segs {
            for pos in 0..s.len {
                let r = s.off + pos;
                let t = tokens[r] as usize;
                let row = &mut x[r * d..(r + 1) * d];
                for (o, &e) in row.iter_mut().zip(&emb[t * d..(t + 1) * d]) {
                    *o = e * scale;
                }
                add_position(row, pos);
            }
        }
        x
    }

    fn embed_backward(&self, g: &mut [T], tokens: &[u32], dx: &[T]) {
        let d = self.config.d_model;
        let scale = T::of((d as f64).sqrt());
        let emb = &mut g[self.layout.embedding.clone()];
        for (r, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            for (o, &v) in emb[t * d..(t + 1) * d].iter_mut().zip(&dx[r * d..(r + 1) * d]) {
                *o += v * scale;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn mha(
        &self,
        a: &AttnParams,
        hq: &[T],
        qs: &[Seg],
        hkv: &[T],
        ks: &[Seg],
        causal: bool,
    ) -> (Vec<T>, AttnTape<T>) {
        let p = &self.params;
        let nq = hq.len() / self.config.d_model;
        let nk = hkv.len() / self.config.d_model;
        let q = a.q.forward(p, hq, nq);
        let k = a.k.forward(p, hkv, nk);
        let v = a.v.forward(p, hkv, nk);
        let (ctx, probs) = attend(&q, &k, &v, qs, ks, causal, self.config.heads, self.config.d_model);
        let out = a.o.forward(p, &ctx, nq);
        (out, AttnTape { q, k, v, probs, ctx })
    }

    #[allow(clippy::too_many_arguments)]
    fn mha_backward(
        &self,
        g: &mut [T],
        a: &AttnParams,
        tape: &AttnTape<T>,
        dout: &[T],
        hq: &[T],
        qs: &[Seg],
        hkv: &[T],
        ks: &[Seg],
    ) -> (Vec<T>, Vec<T>) {
        let p = &self.params;
        let d = self.config.d_model;
        let nq = hq.len() / d;
        let nk = hkv.len() / d;
        let mut dctx = vec![T::zero(); nq * d];
        a.o.backward(p, g, dout, &tape.ctx, nq, Some(&mut dctx));
        let (dq, dk, dv) = attend_backward(&dctx, tape, qs, ks, self.config.heads, d);
        let mut dhq = vec![T::zero(); nq * d];
        a.q.backward(p, g, &dq, hq, nq, Some(&mut dhq));
        let mut dhkv = vec![T::zero(); nk * d];
        a.k.backward(p, g, &dk, hkv, nk, Some(&mut dhkv));
        a.v.backward(p, g, &dv, hkv, nk, Some(&mut dhkv));
        (dhq, dhkv)
    }

    fn ff(&self, f: &FfParams, h: &[T]) -> (Vec<T>, FfTape<T>) {
        let n = h.len() / self.config.d_model;
        let up = f.up.forward(&self.params, h, n);
        let act: Vec<T> = up.iter().map(|&u| u.max(T::zero())).collect();
        let out = f.down.forward(&self.params, &act, n);
        (out, FfTape { up, act })
    }

    fn ff_backward(&self, g: &mut [T], f: &FfParams, tape: &FfTape<T>, dout: &[T], h: &[T]) -> Vec<T> {
        let p = &self.params;
        let n = h.len() / self.config.d_model;
        let mut dact = vec![T::zero(); tape.act.len()];
        f.down.backward(p, g, dout, &tape.act, n, Some(&mut dact));
        for (da, &u) in dact.iter_mut().zip(&tape.up) {
            if u <= T::zero() {
                *da = T::zero();
            }
        }
        let mut dh = vec![T::zero(); h.len()];
        f.up.backward(p, g, &dact, h, n, Some(&mut dh));
        dh
    }

    /// Encoder output rows for a packed source.
    pub(crate) fn encode(&self, src: &[u32]) -> Vec<T> {
        let segs = [Seg { off: 0, len: src.len() }];
        let mut drop = Dropout { rate: 0.0, rng: None };
        let (out, _, _, _) = self.encode_packed(src, &segs, &mut drop);
        out
    }

    fn encode_packed(
        &self,
        src: &[u32],
        segs: &[Seg],
        drop: &mut Dropout<'_>,
    ) -> (Vec<T>, Option<Vec<T>>, Vec<EncTape<T>>, LnCache<T>) {
        let p = &self.params;
        let mut x = self.embed(src, segs);
        let drop_src = drop.apply(&mut x);
        let mut tapes = Vec::with_capacity(self.config.layers);
        for layer in &self.layout.enc {
            let (h_attn, ln_attn) = layer.ln_attn.forward(p, &x);
            let (mut a, attn) = self.mha(&layer.attn, &h_attn, segs, &h_attn, segs, false);
            let drop_attn = drop.apply(&mut a);
            add_assign(&mut x, &a);
            let (h_ff, ln_ff) = layer.ln_ff.forward(p, &x);
            let (mut f, ff) = self.ff(&layer.ff, &h_ff);
            let drop_ff = drop.apply(&mut f);
            add_assign(&mut x, &f);
            tapes.push(EncTape {
                ln_attn,
                h_attn,
                attn,
                drop_attn,
                ln_ff,
                h_ff,
                ff,
                drop_ff,
            });
        }
        let (out, ln) = self.layout.enc_norm.forward(p, &x);
        (out, drop_src, tapes, ln)
    }

    fn forward(&self, batch: &Batch, rng: Option<&mut dyn RngCore>) -> Result<Tape<T>, Seq2SeqError> {
        let packed = pack(batch, self.config.vocab_size)?;
        let p = &self.params;
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let mut drop = Dropout {
            rate: self.config.dropout,
            rng,
        };
        let (enc_out, drop_src, enc, enc_ln) = self.encode_packed(&packed.src, &packed.src_segs, &mut drop);

        let ts = &packed.tgt_segs;
        let ss = &packed.src_segs;
        let mut x = self.embed(&packed.dec_in, ts);
        let drop_tgt = drop.apply(&mut x);
        let mut dec = Vec::with_capacity(self.config.layers);
        for layer in &self.layout.dec {
            let (h_self, ln_self) = layer.ln_self.forward(p, &x);
            let (mut a, self_attn) = self.mha(&layer.self_attn, &h_self, ts, &h_self, ts, true);
            let drop_self = drop.apply(&mut a);
            add_assign(&mut x, &a);
            let (h_cross, ln_cross) = layer.ln_cross.forward(p, &x);
            let (mut c, cross_attn) = self.mha(&layer.cross_attn, &h_cross, ts, &enc_out, ss, false);
            let drop_cross = drop.apply(&mut c);
            add_assign(&mut x, &c);
            let (h_ff, ln_ff) = layer.ln_ff.forward(p, &x);
            let (mut f, ff) = self.ff(&layer.ff, &h_ff);
            let drop_ff = drop.apply(&mut f);
            add_assign(&mut x, &f);
            dec.push(DecTape {
                ln_self,
                h_self,
                self_attn,
                drop_self,
                ln_cross,
                h_cross,
                cross_attn,
                drop_cross,
                ln_ff,
                h_ff,
                ff,
                drop_ff,
            });
        }
        let (dec_out, dec_ln) = self.layout.dec_norm.forward(p, &x);
        let nt = packed.dec_in.len();
        let mut logits = vec![T::zero(); nt * v];
        gemm(
            T::of(1.0 / (d as f64).sqrt()),
            Mat::new(&dec_out, nt, d),
            Mat::new(&p[self.layout.output_matrix()], v, d).t(),
            T::zero(),
            MatMut::new(&mut logits, nt, v),
        );
        Ok(Tape {
            packed,
            drop_src,
            drop_tgt,
            enc,
            enc_ln,
            enc_out,
            dec,
            dec_ln,
            dec_out,
            logits,
        })
    }

    /// Loss from the tape; also returns the logit gradient and the tape.
    #[allow(clippy::type_complexity)]
    fn finish(&self, tape: Tape<T>) -> Result<(ForwardOutput<T>, (Vec<T>, Tape<T>)), Seq2SeqError> {
        let v = self.config.vocab_size;
        let eps = self.config.label_smoothing;
        let nt = tape.packed.labels.len();
        let inv_n = 1.0 / nt as f64;
        let off = T::of(eps / v as f64);
        let on = T::of(1.0 - eps) + off;
        let mut total = 0.0f64;
        let mut dlogits = vec![T::zero(); nt * v];
        for (r, &label) in tape.packed.labels.iter().enumerate() {
            let row = &tape.logits[r * v..(r + 1) * v];
            let lp = log_softmax(row);
            let sum_lp: f64 = lp.iter().map(|x| x.f64()).sum();
            let nll = -(1.0 - eps) * lp[label as usize].f64() - eps / v as f64 * sum_lp;
            total += nll;
            let drow = &mut dlogits[r * v..(r + 1) * v];
            for (j, (g, &l)) in drow.iter_mut().zip(&lp).enumerate() {
                let q = if j == label as usize { on } else { off };
                *g = (l.exp() - q) * T::of(inv_n);
            }
        }
        let loss = total * inv_n;
        if !loss.is_finite() {
            return Err(Seq2SeqError::NonFinite(format!("loss over {nt} target tokens")));
        }
        let out = ForwardOutput {
            loss: T::of(loss),
            logits: Logits {
                data: tape.logits.clone(),
                vocab: v,
                segs: tape.packed.tgt_segs.clone(),
            },
            target_tokens: nt,
        };
        Ok((out, (dlogits, tape)))
    }

    fn backward(&self, tape: &Tape<T>, dlogits: &[T]) -> Vec<T> {
        let p = &self.params;
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let nt = tape.packed.dec_in.len();
        let ts = &tape.packed.tgt_segs;
        let ss = &tape.packed.src_segs;
        let mut g = vec![T::zero(); p.len()];
        let s = T::of(1.0 / (d as f64).sqrt());
        let out_w = self.layout.output_matrix();

        let mut dy = vec![T::zero(); nt * d];
        gemm(
            s,
            Mat::new(dlogits, nt, v),
            Mat::new(&p[out_w.clone()], v, d),
            T::zero(),
            MatMut::new(&mut dy, nt, d),
        );
        gemm(
            s,
            Mat::new(dlogits, nt, v).t(),
            Mat::new(&tape.dec_out, nt, d),
            T::one(),
            MatMut::new(&mut g[out_w], v, d),
        );
        let mut dx = self.layout.dec_norm.backward(p, &mut g, &dy, &tape.dec_ln);
        let mut d_enc = vec![T::zero(); tape.enc_out.len()];
        for (layer, t) in self.layout.dec.iter().zip(&tape.dec).rev() {
            let df = mask_grad(&dx, &t.drop_ff);
            let dh = self.ff_backward(&mut g, &layer.ff, &t.ff, &df, &t.h_ff);
            add_assign(&mut dx, &layer.ln_ff.backward(p, &mut g, &dh, &t.ln_ff));

            let dc = mask_grad(&dx, &t.drop_cross);
            let (dhq, dkv) = self.mha_backward(&mut g, &layer.cross_attn, &t.cross_attn, &dc, &t.h_cross, ts, &tape.enc_out, ss);
            add_assign(&mut d_enc, &dkv);
            add_assign(&mut dx, &layer.ln_cross.backward(p, &mut g, &dhq, &t.ln_cross));

            let da = mask_grad(&dx, &t.drop_self);
            let (mut dh, dkv) = self.mha_backward(&mut g, &layer.self_attn, &t.self_attn, &da, &t.h_self, ts, &t.h_self, ts);
            add_assign(&mut dh, &dkv);
            add_assign(&mut dx, &layer.ln_self.backward(p, &mut g, &dh, &t.ln_self));
        }
        let dx_tgt = mask_grad(&dx, &tape.drop_tgt);
        self.embed_backward(&mut g, &tape.packed.dec_in, &dx_tgt);

        let mut dx = self.layout.enc_norm.backward(p, &mut g, &d_enc, &tape.enc_ln);
        for (layer, t) in self.layout.enc.iter().zip(&tape.enc).rev() {
            let df = mask_grad(&dx, &t.drop_ff);
            let dh = self.ff_backward(&mut g, &layer.ff, &t.ff, &df, &t.h_ff);
            add_assign(&mut dx, &layer.ln_ff.backward(p, &mut g, &dh, &t.ln_ff));

            let da = mask_grad(&dx, &t.drop_attn);
            let (mut dh, dkv) = self.mha_backward(&mut g, &layer.attn, &t.attn, &da, &t.h_attn, ss, &t.h_attn, ss);
            add_assign(&mut dh, &dkv);
            add_assign(&mut dx, &layer.ln_attn.backward(p, &mut g, &dh, &t.ln_attn));
        }
        let dx_src = mask_grad(&dx, &tape.drop_src);
        self.embed_backward(&mut g, &tape.packed.src, &dx_src);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::batch::Seq2SeqExample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny(vocab: usize) -> TransformerConfig {
        TransformerConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            dropout: 0.0,
            max_len: 16,
            vocab_size: vocab,
            label_smoothing: 0.1,
            tie_embeddings: true,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, vocab: u32, n: usize) -> Batch {
        let ex: Vec<Seq2SeqExample> = (0..n)
            .map(|_| {
                let ls = rng.random_range(1..6);
                let lt = rng.random_range(1..6);
                Seq2SeqExample::new(
                    (0..ls).map(|_| rng.random_range(8..vocab)).collect(),
                    (0..lt).map(|_| rng.random_range(8..vocab)).collect(),
                )
            })
            .collect();
        Batch::new(&ex)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model: Transformer<f64> = Transformer::new(tiny(20), &mut rng).unwrap();
        assert!(model.num_params() <= 5000);
        let batch = random_batch(&mut rng, 20, 3);
        let (_, grad) = model.loss_and_grad(&batch, None).unwrap();
        let h = 1e-5;
        for _ in 0..30 {
            let i = rng.random_range(0..model.num_params());
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let num = (plus.forward_loss(&batch).unwrap().loss - minus.forward_loss(&batch).unwrap().loss) / (2.0 * h);
            let denom = num.abs().max(grad[i].abs()).max(1e-7);
            assert!((num - grad[i]).abs() / denom < 1e-3, "param {i}: numeric {num}, analytic {}", grad[i]);
        }
    }

    #[test]
    fn padding_does_not_change_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model: Transformer<f32> = Transformer::new(tiny(30), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 30, 4);
        let a = model.forward_loss(&batch).unwrap().loss;
        let b = model.forward_loss(&batch.padded(3, 2)).unwrap().loss;
        assert_eq!(a, b);
    }

    #[test]
    fn decoder_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model: Transformer<f64> = Transformer::new(tiny(30), &mut rng).unwrap();
        let src = vec![9, 10, 11];
        let tgt = vec![12, 13, 14, 15, 16];
        let base = model.forward_loss(&Batch::new(&[Seq2SeqExample::new(src.clone(), tgt.clone())])).unwrap();
        for t in 0..tgt.len() {
            let mut changed = tgt.clone();
            changed[t] = 20;
            let out = model.forward_loss(&Batch::new(&[Seq2SeqExample::new(src.clone(), changed)])).unwrap();
            // Target token t is decoder input t + 1.
            for pos in 0..=t {
                assert_eq!(out.logits.row(0, pos), base.logits.row(0, pos), "t={t} pos={pos}");
            }
            assert_ne!(out.logits.row(0, t + 1), base.logits.row(0, t + 1));
        }
    }

    #[test]
    fn dropout_is_seeded_and_eval_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut cfg = tiny(30);
        cfg.dropout = 0.3;
        let model: Transformer<f32> = Transformer::new(cfg, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 30, 2);
        assert_eq!(model.forward_loss(&batch).unwrap(), model.forward_loss(&batch).unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let a = model.loss_and_grad(&batch, Some(&mut r1)).unwrap();
        let b = model.loss_and_grad(&batch, Some(&mut r2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, model.forward_loss(&batch).unwrap().loss);
    }

    #[test]
    fn untied_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = tiny(12);
        cfg.tie_embeddings = false;
        let model: Transformer<f64> = Transformer::new(cfg, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 12, 2);
        let (_, grad) = model.loss_and_grad(&batch, None).unwrap();
        let out = model.layout().output.clone().unwrap();
        for i in [out.start, out.start + 17, model.layout().embedding.start + 70] {
            let mut plus = model.clone();
            plus.params_mut()[i] += 1e-5;
            let mut minus = model.clone();
            minus.params_mut()[i] -= 1e-5;
            let num = (plus.forward_loss(&batch).unwrap().loss - minus.forward_loss(&batch).unwrap().loss) / 2e-5;
            assert!((num - grad[i]).abs() <= 1e-3 * num.abs().max(grad[i].abs()).max(1e-7));
        }
    }

    #[test]
    fn positions_are_bounded() {
        let mut row = vec![0.0f64; 6];
        add_position(&mut row, 0);
        assert_eq!(row, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let mut row = vec![0.0f64; 6];
        add_position(&mut row, 1000);
        assert!(row.iter().all(|x| x.abs() <= 1.0));
    }
}
