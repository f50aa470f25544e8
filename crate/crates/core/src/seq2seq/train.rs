//! Training loop, fine-tuning and checkpoint selection.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{shuffled_batches, Batch, Seq2SeqExample};
use super::checkpoint::TransformerCheckpoint;
use super::config::TransformerConfig;
use super::model::Transformer;
use super::optim::{OptimizerState, Schedule};
use super::Seq2SeqError;

/// Budget and schedule of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_steps: u64,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Evaluate (and possibly keep a snapshot) every this many steps.
    #[serde(default)]
    pub eval_every: Option<u64>,
}

impl TrainConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            base_lr: self.base_lr,
            warmup_steps: self.warmup_steps,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// One forward/backward pass and Adam update.
pub fn train_step(
    model: &mut Transformer<f32>,
    opt: &mut OptimizerState<f32>,
    batch: &Batch,
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<StepStats, Seq2SeqError> {
    let (loss, grad) = model.loss_and_grad(batch, dropout_rng)?;
    let lr = opt.next_lr();
    let grad_norm = opt.apply(model.params_mut(), &grad)?;
    Ok(StepStats {
        step: opt.step,
        loss: loss as f64,
        lr,
        grad_norm,
    })
}

/// Runs `cfg.steps` updates over reshuffled epochs of `examples`.
///
/// `on_eval` is called every `cfg.eval_every` steps and after the last one.
pub fn train<F>(
    model: &mut Transformer<f32>,
    opt: &mut OptimizerState<f32>,
    examples: &[Seq2SeqExample],
    cfg: &TrainConfig,
    seed: u64,
    mut on_eval: F,
) -> Result<Vec<StepStats>, Seq2SeqError>
where
    F: FnMut(&StepStats, &Transformer<f32>) -> Result<(), Seq2SeqError>,
{
    if examples.is_empty() && cfg.steps > 0 {
        return Err(Seq2SeqError::Batch("no training examples".into()));
    }
    let max_len = model.config().max_len;
    let examples: Vec<Seq2SeqExample> = examples.iter().map(|e| e.clone().truncated(max_len)).collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut history = Vec::with_capacity(cfg.steps as usize);
    let mut epoch: Vec<Batch> = Vec::new();
    for i in 0..cfg.steps {
        if epoch.is_empty() {
            epoch = shuffled_batches(&examples, cfg.batch_size, &mut order_rng);
            epoch.reverse();
        }
        let batch = epoch.pop().expect("non-empty epoch");
        let stats = train_step(model, opt, &batch, Some(&mut drop_rng))?;
        history.push(stats);
        let last = i + 1 == cfg.steps;
        if cfg.eval_every.is_some_and(|k| k > 0 && stats.step % k == 0) || last {
            on_eval(&stats, model)?;
        }
    }
    Ok(history)
}

/// Continue from `checkpoint` on new data with every parameter trainable
/// and a fresh optimizer.
pub fn finetune<F>(
    checkpoint: &TransformerCheckpoint,
    config: &TransformerConfig,
    subword_fingerprint: &str,
    examples: &[Seq2SeqExample],
    cfg: &TrainConfig,
    seed: u64,
    on_eval: F,
) -> Result<TransformerCheckpoint, Seq2SeqError>
where
    F: FnMut(&StepStats, &Transformer<f32>) -> Result<(), Seq2SeqError>,
{
    checkpoint.check_compatible(config, subword_fingerprint)?;
    let mut model = checkpoint.model.clone();
    let mut opt = OptimizerState::new(model.num_params(), cfg.schedule());
    train(&mut model, &mut opt, examples, cfg, seed, on_eval)?;
    Ok(TransformerCheckpoint {
        model,
        optimizer: Some(opt),
        subword_fingerprint: subword_fingerprint.to_string(),
        task: "finetune".to_string(),
    })
}

/// Step with the highest development score; the earliest on ties.
pub fn select_checkpoint(history: &[(u64, f64)]) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for &(step, score) in history {
        match best {
            Some((bs, b)) if score < b || (score == b && step >= bs) => {}
            _ if score.is_nan() => {}
            _ => best = Some((step, score)),
        }
    }
    best.map(|(s, _)| s)
}
