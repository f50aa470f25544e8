//! Flat parameter storage and the named tensors inside it.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::TransformerConfig;
use super::linalg::{layer_norm, layer_norm_backward, linear, linear_backward, LnCache, Real};

/// Name and shape of one tensor in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Zeros,
    Ones,
    /// Normal with the given standard deviation.
    Normal(f64),
}

#[derive(Clone, Debug)]
pub(crate) struct Lin {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Lin {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], n: usize) -> Vec<T> {
        linear(x, n, &p[self.w.clone()], &p[self.b.clone()], self.d_in, self.d_out)
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], dy: &[T], x: &[T], n: usize, dx: Option<&mut [T]>) {
        let (dw, db) = split_pair(g, &self.w, &self.b);
        linear_backward(dy, x, &p[self.w.clone()], n, self.d_in, self.d_out, dw, db, dx);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub g: Range<usize>,
    pub b: Range<usize>,
    pub d: usize,
}

impl Norm {
    pub fn forward<T: Real>(&self, p: &[T], x: &[T]) -> (Vec<T>, LnCache<T>) {
        layer_norm(x, self.d, &p[self.g.clone()], &p[self.b.clone()])
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], dy: &[T], cache: &LnCache<T>) -> Vec<T> {
        let (dg, db) = split_pair(g, &self.g, &self.b);
        layer_norm_backward(dy, cache, self.d, &p[self.g.clone()], dg, db)
    }
}

/// Two disjoint mutable ranges of one buffer; `a` must precede `b`.
fn split_pair<'a, T>(g: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

#[derive(Clone, Debug)]
pub(crate) struct AttnParams {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
}

#[derive(Clone, Debug)]
pub(crate) struct FfParams {
    pub up: Lin,
    pub down: Lin,
}

#[derive(Clone, Debug)]
pub(crate) struct EncLayer {
    pub ln_attn: Norm,
    pub attn: AttnParams,
    pub ln_ff: Norm,
    pub ff: FfParams,
}

#[derive(Clone, Debug)]
pub(crate) struct DecLayer {
    pub ln_self: Norm,
    pub self_attn: AttnParams,
    pub ln_cross: Norm,
    pub cross_attn: AttnParams,
    pub ln_ff: Norm,
    pub ff: FfParams,
}

/// Where every tensor lives in the flat parameter vector.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    pub(crate) embedding: Range<usize>,
    pub(crate) output: Option<Range<usize>>,
    pub(crate) enc: Vec<EncLayer>,
    pub(crate) enc_norm: Norm,
    pub(crate) dec: Vec<DecLayer>,
    pub(crate) dec_norm: Norm,
    total: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    total: usize,
}

impl Builder {
    fn tensor(&mut self, name: String, shape: Vec<usize>, init: Init) -> Range<usize> {
        let n: usize = shape.iter().product();
        let range = self.total..self.total + n;
        self.total += n;
        self.specs.push(TensorSpec {
            name,
            shape,
            range: range.clone(),
        });
        self.inits.push(init);
        range
    }

    fn lin(&mut self, prefix: &str, d_in: usize, d_out: usize) -> Lin {
        // Glorot-style scale keeps activations of order one at init.
        let std = (2.0 / (d_in + d_out) as f64).sqrt();
        Lin {
            w: self.tensor(format!("{prefix}.weight"), vec![d_in, d_out], Init::Normal(std)),
            b: self.tensor(format!("{prefix}.bias"), vec![d_out], Init::Zeros),
            d_in,
            d_out,
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            g: self.tensor(format!("{prefix}.gain"), vec![d], Init::Ones),
            b: self.tensor(format!("{prefix}.bias"), vec![d], Init::Zeros),
            d,
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnParams {
        AttnParams {
            q: self.lin(&format!("{prefix}.q"), d, d),
            k: self.lin(&format!("{prefix}.k"), d, d),
            v: self.lin(&format!("{prefix}.v"), d, d),
            o: self.lin(&format!("{prefix}.o"), d, d),
        }
    }

    fn ff(&mut self, prefix: &str, d: usize, d_ff: usize) -> FfParams {
        FfParams {
            up: self.lin(&format!("{prefix}.up"), d, d_ff),
            down: self.lin(&format!("{prefix}.down"), d_ff, d),
        }
    }
}

impl ParamLayout {
    pub fn new(cfg: &TransformerConfig) -> Self {
        let d = cfg.d_model;
        let v = cfg.vocab_size;
        let emb_std = 1.0 / (d as f64).sqrt();
        let mut b = Builder {
            specs: Vec::new(),
            inits: Vec::new(),
            total: 0,
        };
        let embedding = b.tensor("embedding".into(), vec![v, d], Init::Normal(emb_std));
        let output = (!cfg.tie_embeddings).then(|| b.tensor("output".into(), vec![v, d], Init::Normal(emb_std)));
        let enc = (0..cfg.layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncLayer {
                    ln_attn: b.norm(&format!("{p}.ln_attn"), d),
                    attn: b.attn(&format!("{p}.attn"), d),
                    ln_ff: b.norm(&format!("{p}.ln_ff"), d),
                    ff: b.ff(&format!("{p}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let enc_norm = b.norm("encoder.ln_out", d);
        let dec = (0..cfg.layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                DecLayer {
                    ln_self: b.norm(&format!("{p}.ln_self"), d),
                    self_attn: b.attn(&format!("{p}.self_attn"), d),
                    ln_cross: b.norm(&format!("{p}.ln_cross"), d),
                    cross_attn: b.attn(&format!("{p}.cross_attn"), d),
                    ln_ff: b.norm(&format!("{p}.ln_ff"), d),
                    ff: b.ff(&format!("{p}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let dec_norm = b.norm("decoder.ln_out", d);
        ParamLayout {
            specs: b.specs,
            inits: b.inits,
            embedding,
            output,
            enc,
            enc_norm,
            dec,
            dec_norm,
            total: b.total,
        }
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Output projection: the embedding when tied.
    pub(crate) fn output_matrix(&self) -> Range<usize> {
        self.output.clone().unwrap_or_else(|| self.embedding.clone())
    }

    /// Fresh parameters drawn from `rng`.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut p = vec![T::zero(); self.total];
        for (spec, init) in self.specs.iter().zip(&self.inits) {
            for x in &mut p[spec.range.clone()] {
                *x = match *init {
                    Init::Zeros => T::zero(),
                    Init::Ones => T::one(),
                    Init::Normal(std) => {
                        let z: f64 = StandardNormal.sample(rng);
                        T::of(z * std)
                    }
                };
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_is_contiguous_and_counted() {
        let cfg = TransformerConfig::desk(300);
        let layout = ParamLayout::new(&cfg);
        let mut next = 0;
        for s in layout.specs() {
            assert_eq!(s.range.start, next, "{}", s.name);
            assert_eq!(s.range.len(), s.shape.iter().product::<usize>());
            next = s.range.end;
        }
        assert_eq!(next, layout.total());
        let d = 64;
        let attn = 4 * (d * d + d);
        let ff = d * 256 + 256 + 256 * d + d;
        let enc_layer = 2 * 2 * d + attn + ff;
        let dec_layer = 3 * 2 * d + 2 * attn + ff;
        assert_eq!(layout.total(), 300 * d + 2 * (enc_layer + dec_layer) + 4 * d);
    }

    #[test]
    fn untied_adds_output_matrix() {
        let mut cfg = TransformerConfig::desk(300);
        let tied = ParamLayout::new(&cfg).total();
        cfg.tie_embeddings = false;
        assert_eq!(ParamLayout::new(&cfg).total(), tied + 300 * 64);
    }

    #[test]
    fn init_is_seeded() {
        let layout = ParamLayout::new(&TransformerConfig::desk(300));
        let a: Vec<f32> = layout.init(&mut ChaCha8Rng::seed_from_u64(1));
        let b: Vec<f32> = layout.init(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.is_finite()));
        let emb = &a[layout.embedding.clone()];
        let var = emb.iter().map(|x| (x * x) as f64).sum::<f64>() / emb.len() as f64;
        assert!((var * 64.0 - 1.0).abs() < 0.05, "{var}");
    }
}
