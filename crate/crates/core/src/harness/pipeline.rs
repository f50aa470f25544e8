//! The pretrain → finetune → decode → evaluate pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataConfig, ExperimentConfig, LexMode, Variant};
use super::evaluate::{evaluate_predictions, EvalReport};
use super::HarnessError;
use crate::corpus::{
    gen_toy_nlg, gen_toy_parallel, load_nlg, load_parallel, subsample, NlgCorpus, ParallelCorpus, Split,
    ToyNlgSizes, ToyWorldSpec,
};
use crate::metrics::{bleu, EvalCorpus, Metric};
use crate::mr::{
    delexicalize, find_placeholders, linearize, placeholder, Example, LinearizationConfig, MeaningRepresentation,
    SchemaMode, SlotSchema, SurfaceFormTable,
};
use crate::seq2seq::{
    decode_source, finetune, make_mass_batches, make_pretrain_batches, select_checkpoint, train, OptimizerState,
    PretrainMode, Seq2SeqExample, TrainConfig, Transformer, TransformerCheckpoint,
};
use crate::subword::{train_subword, SubwordModel};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    #[serde(default)]
    pub skipped: bool,
    /// Artifact file name → sha256.
    pub artifacts: BTreeMap<String, String>,
}

/// What a run produced, rewritten after every stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let toml = cfg.to_toml();
        std::fs::write(dir.join("config.toml"), &toml)?;
        let run = Run {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                name: cfg.name.clone(),
                config_sha256: sha256_hex(toml.as_bytes()),
                ..Manifest::default()
            },
        };
        run.persist()?;
        Ok(run)
    }

    fn persist(&self) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(self.dir.join("manifest.json"), json)?;
        Ok(())
    }

    /// Run one stage. `f` returns its value and the files it wrote (or
    /// read, for inputs); their hashes go into the manifest. A failure is
    /// recorded under the stage's name before it propagates.
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&Path) -> Result<(T, Vec<PathBuf>), HarnessError>,
    ) -> Result<T, HarnessError> {
        match f(&self.dir).and_then(|(value, files)| {
            let mut artifacts = BTreeMap::new();
            for file in files {
                let label = file
                    .strip_prefix(&self.dir)
                    .unwrap_or(&file)
                    .to_string_lossy()
                    .into_owned();
                artifacts.insert(label, sha256_hex(&std::fs::read(&file)?));
            }
            Ok((value, artifacts))
        }) {
            Ok((value, artifacts)) => {
                self.manifest.stages.push(StageRecord {
                    name: name.to_string(),
                    skipped: false,
                    artifacts,
                });
                self.persist()?;
                Ok(value)
            }
            Err(e) => {
                self.manifest.failed_stage = Some(name.to_string());
                self.manifest.error = Some(e.to_string());
                self.persist()?;
                Err(HarnessError::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    fn skip(&mut self, name: &str) -> Result<(), HarnessError> {
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            skipped: true,
            artifacts: BTreeMap::new(),
        });
        self.persist()
    }
}

/// Corpora of one experiment, before subsampling.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: NlgCorpus,
    pub dev: NlgCorpus,
    pub test: NlgCorpus,
    pub surface_forms: SurfaceFormTable,
    pub schema: SlotSchema,
    pub parallel: Option<ParallelCorpus>,
    pub monolingual: Option<Vec<String>>,
    pub world: Option<ToyWorldSpec>,
}

pub fn prepare_data(cfg: &DataConfig) -> Result<PreparedData, HarnessError> {
    match cfg {
        DataConfig::Toy {
            world_seed,
            stems,
            markers,
            entities,
            parallel_pairs,
            nlg_train,
            nlg_dev,
            nlg_test,
        } => {
            let world = ToyWorldSpec::generate(*world_seed, *stems, *markers, *entities)?;
            let parallel = gen_toy_parallel(&world, *parallel_pairs)?;
            let nlg = gen_toy_nlg(
                &world,
                ToyNlgSizes {
                    train: *nlg_train,
                    dev: *nlg_dev,
                    test: *nlg_test,
                },
            )?;
            let monolingual = parallel.sentences().map(String::from).collect();
            Ok(PreparedData {
                train: nlg.train,
                dev: nlg.dev,
                test: nlg.test,
                surface_forms: nlg.surface_forms,
                schema: SlotSchema::restaurant(),
                parallel: Some(parallel),
                monolingual: Some(monolingual),
                world: Some(world),
            })
        }
        DataConfig::Files {
            nlg_train,
            nlg_dev,
            nlg_test,
            surface_forms,
            schema,
            parallel,
            monolingual,
        } => {
            let schema = match schema {
                Some(p) => SlotSchema::load(p, SchemaMode::Strict)?,
                None => SlotSchema::restaurant(),
            };
            let monolingual = match monolingual {
                Some(p) => {
                    let text = std::fs::read_to_string(p)?;
                    Some(text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect())
                }
                None => None,
            };
            Ok(PreparedData {
                train: load_nlg(nlg_train, &schema, Split::Train)?,
                dev: load_nlg(nlg_dev, &schema, Split::Dev)?,
                test: load_nlg(nlg_test, &schema, Split::Test)?,
                surface_forms: SurfaceFormTable::load(surface_forms)?,
                parallel: parallel.as_ref().map(load_parallel).transpose()?,
                monolingual,
                world: None,
                schema,
            })
        }
    }
}

/// `mr` with every delexicalizable value replaced by its placeholder.
pub fn delex_mr(mr: &MeaningRepresentation, schema: &SlotSchema) -> MeaningRepresentation {
    let mut out = MeaningRepresentation::new(mr.act()).expect("act already validated");
    for (key, value) in mr.slots() {
        let v = if schema.is_delexicalizable(key) {
            placeholder(key)
        } else {
            value.clone()
        };
        out.push(key.clone(), &v).expect("keys already validated");
    }
    out
}

/// Linearized model input for `mr`.
pub fn nlg_source(mr: &MeaningRepresentation, mode: LexMode, schema: &SlotSchema) -> String {
    let cfg = LinearizationConfig::generate_cs();
    match mode {
        LexMode::Lex => linearize(mr, &cfg),
        LexMode::Delex => linearize(&delex_mr(mr, schema), &cfg),
    }
}

/// Training target for `example`.
pub fn nlg_target(example: &Example, mode: LexMode, table: &SurfaceFormTable, schema: &SlotSchema) -> String {
    match (mode, &example.delex_reference) {
        (LexMode::Lex, _) => example.reference.clone(),
        (LexMode::Delex, Some(d)) => d.clone(),
        (LexMode::Delex, None) => delexicalize(&example.mr, &example.reference, table, schema).text,
    }
}

/// Copy MR values into the placeholders of a delexicalized prediction.
/// Placeholders naming slots absent from the MR stay as they are.
pub fn copy_lexicalize(text: &str, mr: &MeaningRepresentation) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, end, key) in find_placeholders(text) {
        if let Some(value) = mr.get(&key) {
            out.push_str(&text[cursor..start]);
            out.push_str(value);
            cursor = end;
        }
    }
    out.push_str(&text[cursor..]);
    out
}

/// Every text the tokenizer is trained on, independent of variant, mode
/// and subsampling so that runs of one data configuration share a
/// vocabulary.
pub fn tokenizer_corpus(data: &PreparedData) -> Vec<String> {
    let mut texts = Vec::new();
    if let Some(p) = &data.parallel {
        texts.extend(p.sentences().map(String::from));
    } else if let Some(m) = &data.monolingual {
        texts.extend(m.iter().cloned());
    }
    for e in &data.train.examples {
        texts.push(nlg_source(&e.mr, LexMode::Lex, &data.schema));
        texts.push(nlg_source(&e.mr, LexMode::Delex, &data.schema));
        texts.push(e.reference.clone());
        texts.push(nlg_target(e, LexMode::Delex, &data.surface_forms, &data.schema));
    }
    texts
}

/// Encoded fine-tuning pairs.
pub fn nlg_examples(
    examples: &[Example],
    mode: LexMode,
    data: &PreparedData,
    tokenizer: &SubwordModel,
) -> Vec<Seq2SeqExample> {
    examples
        .iter()
        .map(|e| {
            Seq2SeqExample::new(
                tokenizer.encode(&nlg_source(&e.mr, mode, &data.schema)).0,
                tokenizer.encode(&nlg_target(e, mode, &data.surface_forms, &data.schema)).0,
            )
        })
        .collect()
}

/// Decode every example; delexicalized outputs are copy-lexicalized.
pub fn decode_examples(
    model: &Transformer<f32>,
    tokenizer: &SubwordModel,
    examples: &[Example],
    mode: LexMode,
    schema: &SlotSchema,
    beam: usize,
    max_len: usize,
) -> Result<Vec<String>, HarnessError> {
    examples
        .iter()
        .map(|e| {
            let src = tokenizer.encode(&nlg_source(&e.mr, mode, schema)).0;
            let hyp = decode_source(model, &src, beam, max_len);
            let text = tokenizer.decode_ids(hyp.output())?.replace(['\n', '\r'], " ");
            let text = text.trim().to_string();
            Ok(match mode {
                LexMode::Lex => text,
                LexMode::Delex => copy_lexicalize(&text, &e.mr),
            })
        })
        .collect()
}

/// Key of a pre-training run: everything its result depends on.
fn pretrain_key(cfg: &ExperimentConfig, tokenizer_fp: &str) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        variant: Variant,
        data: &'a DataConfig,
        parallel: String,
        model: &'a super::config::ModelConfig,
        pretrain: &'a Option<TrainConfig>,
        mass_span_fraction: f64,
        seed: u64,
        tokenizer: &'a str,
    }
    let key = Key {
        variant: cfg.variant,
        data: &cfg.data,
        parallel: cfg.subsample.parallel.to_string(),
        model: &cfg.model,
        pretrain: &cfg.pretrain,
        mass_span_fraction: cfg.mass_span_fraction,
        seed: cfg.seed,
        tokenizer: tokenizer_fp,
    };
    sha256_hex(&serde_json::to_vec(&key).expect("key serializes"))[..16].to_string()
}

/// Initial model for fine-tuning: a fresh one for `scratch`, otherwise one
/// pre-trained with the variant's objective.
pub fn pretrain_model(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    tokenizer: &SubwordModel,
) -> Result<TransformerCheckpoint, HarnessError> {
    let model_cfg = cfg.model.with_vocab(tokenizer.vocab_size());
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Transformer::<f32>::new(model_cfg, &mut init_rng)?;
    let fp = tokenizer.fingerprint();
    if cfg.variant == Variant::Scratch {
        return Ok(TransformerCheckpoint::new(model, &fp, "init"));
    }
    let tc = cfg
        .pretrain
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing [pretrain] section".into()))?;
    let examples = match cfg.variant {
        Variant::Nmt | Variant::Binmt => {
            let parallel = data
                .parallel
                .as_ref()
                .ok_or_else(|| HarnessError::Config("no parallel corpus".into()))?;
            let pairs = subsample(&parallel.pairs, cfg.subsample.parallel, cfg.seed)?;
            let mode = if cfg.variant == Variant::Nmt {
                PretrainMode::Nmt
            } else {
                PretrainMode::Binmt
            };
            make_pretrain_batches(&pairs, mode, tokenizer)
        }
        Variant::Mass => {
            let mono = data
                .monolingual
                .as_ref()
                .ok_or_else(|| HarnessError::Config("no monolingual corpus".into()))?;
            let sentences: Vec<Vec<u32>> = mono.iter().map(|s| tokenizer.encode(s).0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            make_mass_batches(&sentences, cfg.mass_span_fraction, &mut rng)?
        }
        Variant::Scratch => unreachable!(),
    };
    let mut opt = OptimizerState::new(model.num_params(), tc.schedule());
    train(&mut model, &mut opt, &examples, tc, cfg.seed, |_, _| Ok(()))?;
    let mut ck = TransformerCheckpoint::new(model, &fp, cfg.variant.as_str());
    ck.optimizer = Some(opt);
    Ok(ck)
}

/// Reuse of pre-trained checkpoints across runs.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory holding pre-trained checkpoints keyed by their inputs.
    pub pretrain_cache: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub report: EvalReport,
    /// `(step, dev BLEU)` at each evaluation during fine-tuning.
    pub dev_history: Vec<(u64, f64)>,
    pub selected_step: Option<u64>,
    pub train_examples: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    run_experiment_with(cfg, out, &RunOptions::default())
}

struct Prefix {
    run: Run,
    data: PreparedData,
    tokenizer: SubwordModel,
    initial: TransformerCheckpoint,
}

/// Stages up to and including pre-training.
fn run_prefix(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Prefix, HarnessError> {
    cfg.validate()?;
    let mut run = Run::new(out, cfg)?;

    let data = run.stage("data", |dir| {
        let data = prepare_data(&cfg.data)?;
        let mut files = Vec::new();
        match &cfg.data {
            DataConfig::Toy { .. } => {
                let mut write = |name: &str, text: String| -> Result<(), HarnessError> {
                    let p = dir.join(name);
                    std::fs::write(&p, text)?;
                    files.push(p);
                    Ok(())
                };
                write("world.txt", data.world.as_ref().expect("toy world").to_text())?;
                write("nlg_train.jsonl", data.train.to_jsonl())?;
                write("nlg_dev.jsonl", data.dev.to_jsonl())?;
                write("nlg_test.jsonl", data.test.to_jsonl())?;
                write("surface_forms.tsv", data.surface_forms.to_file_string())?;
                if let Some(p) = &data.parallel {
                    write("parallel.tsv", p.to_tsv())?;
                }
            }
            DataConfig::Files {
                nlg_train,
                nlg_dev,
                nlg_test,
                surface_forms,
                schema,
                parallel,
                monolingual,
            } => {
                files.extend([nlg_train, nlg_dev, nlg_test, surface_forms].into_iter().cloned());
                files.extend([schema, parallel, monolingual].into_iter().flatten().cloned());
            }
        }
        Ok((data, files))
    })?;

    let tokenizer = run.stage("tokenizer", |dir| {
        let tok = train_subword(tokenizer_corpus(&data).iter(), cfg.tokenizer.target_size)?;
        let p = dir.join("tokenizer.txt");
        tok.save(&p)?;
        Ok((tok, vec![p]))
    })?;
    let fp = tokenizer.fingerprint();

    let initial = if cfg.variant == Variant::Scratch {
        run.skip("pretrain")?;
        pretrain_model(cfg, &data, &tokenizer)?
    } else {
        run.stage("pretrain", |dir| {
            let p = dir.join("pretrain.ckpt");
            let cached = opts
                .pretrain_cache
                .as_ref()
                .map(|c| c.join(format!("{}-{}.ckpt", cfg.variant.as_str(), pretrain_key(cfg, &fp))));
            let ck = match &cached {
                Some(c) if c.exists() => TransformerCheckpoint::load(c)?,
                _ => {
                    let ck = pretrain_model(cfg, &data, &tokenizer)?;
                    if let Some(c) = &cached {
                        std::fs::create_dir_all(c.parent().expect("cache dir"))?;
                        ck.save(c)?;
                    }
                    ck
                }
            };
            ck.save(&p)?;
            Ok((ck, vec![p]))
        })?
    };
    Ok(Prefix {
        run,
        data,
        tokenizer,
        initial,
    })
}

/// Run only the data, tokenizer and pretrain stages.
pub fn run_pretrain(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Manifest, HarnessError> {
    Ok(run_prefix(cfg, out, opts)?.run.manifest)
}

/// Execute every stage of `cfg` in `out`. On failure the manifest names the
/// failing stage and keeps the stages that completed.
pub fn run_experiment_with(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    let Prefix {
        mut run,
        data,
        tokenizer,
        initial,
    } = run_prefix(cfg, out, opts)?;
    let fp = tokenizer.fingerprint();

    let train_examples = subsample(&data.train.examples, cfg.subsample.nlg, cfg.seed)?;
    let (model, dev_history, selected_step) = run.stage("finetune", |dir| {
        let examples = nlg_examples(&train_examples, cfg.mode, &data, &tokenizer);
        let dev_n = cfg.decode.dev_limit.unwrap_or(data.dev.len()).min(data.dev.len());
        let dev = &data.dev.examples[..dev_n];
        let mut history: Vec<(u64, f64)> = Vec::new();
        let mut best: Option<(f64, Transformer<f32>)> = None;
        let mut fine = finetune(
            &initial,
            initial.config(),
            &fp,
            &examples,
            &cfg.finetune,
            cfg.seed,
            |stats, model| {
                if cfg.finetune.eval_every.is_none() || dev.is_empty() {
                    return Ok(());
                }
                let preds = decode_examples(model, &tokenizer, dev, cfg.mode, &data.schema, 1, cfg.decode.max_len)
                    .map_err(|e| crate::seq2seq::Seq2SeqError::Config(e.to_string()))?;
                let corpus = EvalCorpus::new(dev.iter().zip(&preds).map(|(e, p)| (p.as_str(), vec![e.reference.as_str()])))
                    .map_err(|e| crate::seq2seq::Seq2SeqError::Config(e.to_string()))?;
                let score = bleu(&corpus).value;
                history.push((stats.step, score));
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, model.clone()));
                }
                Ok(())
            },
        )?;
        let selected = select_checkpoint(&history);
        if let Some((_, model)) = best {
            fine.model = model;
        }
        let p = dir.join("finetune.ckpt");
        fine.save(&p)?;
        let h = dir.join("dev_history.json");
        std::fs::write(&h, serde_json::to_string_pretty(&history)?)?;
        Ok(((fine.model, history, selected), vec![p, h]))
    })?;

    let predictions = run.stage("decode", |dir| {
        let preds = decode_examples(
            &model,
            &tokenizer,
            &data.test.examples,
            cfg.mode,
            &data.schema,
            cfg.decode.beam,
            cfg.decode.max_len,
        )?;
        let p = dir.join("predictions.txt");
        let mut text = preds.join("\n");
        text.push('\n');
        std::fs::write(&p, text)?;
        Ok((preds, vec![p]))
    })?;

    let report = run.stage("evaluate", |dir| {
        let report = evaluate_predictions(
            &data.test.examples,
            &predictions,
            &data.surface_forms,
            &data.schema,
            &Metric::ALL,
            false,
        )?;
        let p = dir.join("metrics.json");
        std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
        Ok((report, vec![p]))
    })?;

    Ok(RunSummary {
        dir: out.to_path_buf(),
        manifest: run.manifest,
        report,
        dev_history,
        selected_step,
        train_examples: train_examples.len(),
    })
}
