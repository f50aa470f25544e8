//! Versioned TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::SampleSize;
use crate::seq2seq::{TrainConfig, TransformerConfig};
use crate::subword::MIN_TARGET_SIZE;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Scratch,
    Mass,
    Nmt,
    Binmt,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Scratch => "scratch",
            Variant::Mass => "mass",
            Variant::Nmt => "nmt",
            Variant::Binmt => "binmt",
        }
    }

    pub fn uses_parallel(self) -> bool {
        matches!(self, Variant::Nmt | Variant::Binmt)
    }
}

impl std::str::FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scratch" => Ok(Variant::Scratch),
            "mass" => Ok(Variant::Mass),
            "nmt" => Ok(Variant::Nmt),
            "binmt" => Ok(Variant::Binmt),
            _ => Err(HarnessError::Config(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexMode {
    #[default]
    Lex,
    Delex,
}

/// Where the corpora come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// Generated toy world.
    Toy {
        world_seed: u64,
        #[serde(default = "default_stems")]
        stems: usize,
        #[serde(default = "default_markers")]
        markers: usize,
        #[serde(default = "default_entities")]
        entities: usize,
        parallel_pairs: usize,
        nlg_train: usize,
        nlg_dev: usize,
        nlg_test: usize,
    },
    /// Files on disk; relative paths resolve against the config file.
    Files {
        nlg_train: PathBuf,
        nlg_dev: PathBuf,
        nlg_test: PathBuf,
        surface_forms: PathBuf,
        #[serde(default)]
        schema: Option<PathBuf>,
        #[serde(default)]
        parallel: Option<PathBuf>,
        /// One sentence per line.
        #[serde(default)]
        monolingual: Option<PathBuf>,
    },
}

fn default_stems() -> usize {
    200
}
fn default_markers() -> usize {
    5
}
fn default_entities() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    #[serde(default = "full")]
    pub nlg: SampleSize,
    #[serde(default = "full")]
    pub parallel: SampleSize,
}

fn full() -> SampleSize {
    SampleSize::Fraction(1.0)
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            nlg: full(),
            parallel: full(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerConfig {
    pub target_size: usize,
}

/// Architecture without the vocabulary size, which the tokenizer decides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub label_smoothing: f64,
    #[serde(default = "yes")]
    pub tie_embeddings: bool,
}

fn yes() -> bool {
    true
}

impl ModelConfig {
    pub fn desk() -> Self {
        let d = TransformerConfig::desk(MIN_TARGET_SIZE);
        ModelConfig {
            layers: d.layers,
            heads: d.heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            dropout: d.dropout,
            max_len: d.max_len,
            label_smoothing: d.label_smoothing,
            tie_embeddings: d.tie_embeddings,
        }
    }

    pub fn with_vocab(&self, vocab_size: usize) -> TransformerConfig {
        TransformerConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            dropout: self.dropout,
            max_len: self.max_len,
            vocab_size,
            label_smoothing: self.label_smoothing,
            tie_embeddings: self.tie_embeddings,
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Dev examples decoded at each evaluation during fine-tuning.
    #[serde(default)]
    pub dev_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub variant: Variant,
    #[serde(default)]
    pub mode: LexMode,
    pub seed: u64,
    /// Fraction of each sentence masked for span corruption (`mass`).
    #[serde(default = "half")]
    pub mass_span_fraction: f64,
    pub data: DataConfig,
    #[serde(default)]
    pub subsample: SubsampleConfig,
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub pretrain: Option<TrainConfig>,
    pub finetune: TrainConfig,
    pub decode: DecodeConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and make its data paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Files {
            nlg_train,
            nlg_dev,
            nlg_test,
            surface_forms,
            schema,
            parallel,
            monolingual,
        } = &mut self.data
        {
            for p in [nlg_train, nlg_dev, nlg_test, surface_forms] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            for p in [schema, parallel, monolingual].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.tokenizer.target_size < MIN_TARGET_SIZE {
            return Err(HarnessError::Config(format!("tokenizer.target_size must be at least {MIN_TARGET_SIZE}")));
        }
        self.model
            .with_vocab(self.tokenizer.target_size)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.mass_span_fraction > 0.0 && self.mass_span_fraction <= 1.0) {
            return bad("mass_span_fraction must lie in (0, 1]");
        }
        if self.decode.beam == 0 || self.decode.max_len == 0 {
            return bad("decode.beam and decode.max_len must be positive");
        }
        if self.finetune.batch_size == 0 {
            return bad("finetune.batch_size must be positive");
        }
        match (self.variant, &self.pretrain) {
            (Variant::Scratch, _) => {}
            (_, None) => return bad("a [pretrain] section is required for this variant"),
            (_, Some(p)) if p.batch_size == 0 => return bad("pretrain.batch_size must be positive"),
            _ => {}
        }
        if let DataConfig::Files {
            parallel, monolingual, ..
        } = &self.data
        {
            if self.variant.uses_parallel() && parallel.is_none() {
                return bad("nmt and binmt need data.parallel");
            }
            if self.variant == Variant::Mass && monolingual.is_none() {
                return bad("mass needs data.monolingual");
            }
        }
        Ok(())
    }

    /// The toy-world configuration used by the acceptance experiments.
    pub fn toy(variant: Variant, seed: u64) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: format!("toy-{}", variant.as_str()),
            variant,
            mode: LexMode::Lex,
            seed,
            mass_span_fraction: half(),
            data: DataConfig::Toy {
                world_seed: 1,
                stems: default_stems(),
                markers: default_markers(),
                entities: default_entities(),
                parallel_pairs: 50_000,
                nlg_train: 2000,
                nlg_dev: 200,
                nlg_test: 200,
            },
            subsample: SubsampleConfig {
                nlg: SampleSize::Count(500),
                parallel: full(),
            },
            tokenizer: TokenizerConfig { target_size: 800 },
            model: ModelConfig::desk(),
            pretrain: (variant != Variant::Scratch).then(|| TrainConfig {
                steps: 5000,
                batch_size: 32,
                base_lr: 0.5,
                warmup_steps: 400,
                clip_norm: Some(1.0),
                eval_every: None,
            }),
            finetune: TrainConfig {
                steps: 1000,
                batch_size: 32,
                base_lr: 0.5,
                warmup_steps: 200,
                clip_norm: Some(1.0),
                eval_every: None,
            },
            decode: DecodeConfig {
                beam: 1,
                max_len: 80,
                dev_limit: None,
            },
        }
    }
}
