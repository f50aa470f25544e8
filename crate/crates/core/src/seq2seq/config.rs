use serde::{Deserialize, Serialize};

use super::Seq2SeqError;

/// Shape and regularisation of the encoder-decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub vocab_size: usize,
    pub label_smoothing: f64,
    /// Share one matrix between the input embedding and the output layer.
    #[serde(default = "yes")]
    pub tie_embeddings: bool,
}

fn yes() -> bool {
    true
}

impl TransformerConfig {
    /// Desk-scale default for a given vocabulary.
    pub fn desk(vocab_size: usize) -> Self {
        TransformerConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            dropout: 0.1,
            max_len: 128,
            vocab_size,
            label_smoothing: 0.1,
            tie_embeddings: true,
        }
    }

    /// The configuration of the original large model.
    pub fn base(vocab_size: usize) -> Self {
        TransformerConfig {
            layers: 6,
            heads: 8,
            d_model: 512,
            d_ff: 2048,
            max_len: 256,
            ..Self::desk(vocab_size)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let bad = |msg: &str| Err(Seq2SeqError::Config(msg.to_string()));
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layers, heads, d_model and d_ff must be positive");
        }
        if self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if self.vocab_size < crate::subword::BYTE_BASE as usize {
            return bad("vocab_size must cover the reserved tokens");
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must be in [0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TransformerConfig::desk(4000).validate().unwrap();
        TransformerConfig::base(32000).validate().unwrap();
        let mut c = TransformerConfig::desk(4000);
        c.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let c = TransformerConfig::desk(500);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TransformerConfig>(&s).unwrap(), c);
    }
}
