use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use d2t::corpus::{
    default_oov_spec, gen_toy_nlg, gen_toy_parallel, load_nlg, synth_oov, OovSpec, SampleSize, Split, ToyNlgSizes,
    ToyWorldSpec,
};
use d2t::harness::pipeline::decode_examples;
use d2t::harness::rating::{create_rating_tasks, SystemOutputs};
use d2t::harness::service::serve;
use d2t::harness::{
    evaluate_predictions, run_experiment, run_low_resource_matrix, run_pretrain, ExperimentConfig, LexMode, MatrixSpec,
    RatingStore, RunOptions, Variant,
};
use d2t::metrics::Metric;
use d2t::mr::{SchemaMode, SlotSchema, SurfaceFormTable};
use d2t::seq2seq::TransformerCheckpoint;
use d2t::subword::{train_subword, SubwordModel};

#[derive(Parser)]
#[command(name = "d2t", version, about = "Data-to-text generation with translation pre-training")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a subword vocabulary on text files (one sentence per line).
    TokenizerTrain {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Target vocabulary size, reserved and byte tokens included.
        #[arg(long, default_value_t = 8000)]
        size: usize,
    },
    /// Run the data, tokenizer and pretrain stages of an experiment.
    Pretrain,
    /// Run a whole experiment: pretrain, fine-tune, decode and evaluate.
    Finetune,
    /// Generate text for the MRs of a JSONL file.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Must be the tokenizer the checkpoint was trained with.
        #[arg(long)]
        tokenizer: PathBuf,
        /// NLG JSONL; only the MRs are read.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        /// `lex` or `delex` (placeholders copied back from the MR).
        #[arg(long, default_value = "lex")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Maximum output tokens.
        #[arg(long, default_value_t = 80)]
        max_len: usize,
    },
    /// Score predictions (one per line) against a JSONL file.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        /// NLG JSONL with the MRs and references.
        #[arg(long)]
        data: PathBuf,
        /// `value<TAB>form|form|...` per line.
        #[arg(long)]
        surface_forms: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        /// Comma-separated metric names.
        #[arg(long, default_value = "bleu,nist,rouge_l,cider,meteor_lite")]
        metrics: String,
        /// Merge examples sharing an MR into one multi-reference item.
        #[arg(long)]
        group_by_mr: bool,
    },
    /// Build the out-of-vocabulary challenge set.
    OovGen {
        /// Training JSONL whose values must not appear.
        #[arg(long)]
        train: PathBuf,
        /// Template and pool spec (TOML); the bundled one by default.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Write a synthetic toy world with its corpora.
    ToyGen {
        #[arg(long, default_value_t = 1)]
        world_seed: u64,
        /// Sentence pairs in the parallel corpus.
        #[arg(long, default_value_t = 50_000)]
        parallel: usize,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        dev: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
    },
    /// Run the low-resource grid over fine-tuning sizes and parallel fractions.
    Matrix {
        #[arg(long, value_delimiter = ',', default_value = "scratch,mass,nmt,binmt")]
        variants: Vec<String>,
        /// Fine-tuning set sizes: counts, fractions such as 0.5, or `full`.
        #[arg(long, value_delimiter = ',', default_value = "100,1000,full")]
        sizes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1")]
        parallel_fracs: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Serve the rating API. Creates the store on first use.
    EvalServe {
        /// Directory holding tasks.json and ledger.jsonl.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Rated examples (JSONL); required when creating the store.
        #[arg(long)]
        data: Option<PathBuf>,
        /// `NAME=FILE` predictions per system.
        #[arg(long = "system")]
        systems: Vec<String>,
        /// Examples sampled for rating.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Aggregate the ratings in a store.
    EvalReport {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Args)]
struct SchemaArg {
    /// Slot schema file; the restaurant schema by default.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl SchemaArg {
    fn load(&self) -> Result<SlotSchema> {
        Ok(match &self.schema {
            Some(p) => SlotSchema::load(p, SchemaMode::Strict)?,
            None => SlotSchema::restaurant(),
        })
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(String::from).collect())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, &json)?;
    println!("{json}");
    Ok(())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let out = cli.out.clone();
    std::fs::create_dir_all(&out)?;
    match &cli.cmd {
        Cmd::TokenizerTrain { inputs, size } => {
            let mut lines = Vec::new();
            for p in inputs {
                lines.extend(read_lines(p)?);
            }
            let tok = train_subword(lines.iter(), *size)?;
            tok.save(out.join("tokenizer.txt"))?;
            println!("vocabulary {} fingerprint {}", tok.vocab_size(), tok.fingerprint());
        }
        Cmd::Pretrain => {
            let cfg = load_config(&cli)?;
            let manifest = run_pretrain(&cfg, &out, &RunOptions::default())?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Cmd::Finetune => {
            let cfg = load_config(&cli)?;
            let summary = run_experiment(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary.report)?);
        }
        Cmd::Decode {
            checkpoint,
            tokenizer,
            data,
            schema,
            mode,
            beam,
            max_len,
        } => {
            let schema = schema.load()?;
            let mode = match mode.as_str() {
                "lex" => LexMode::Lex,
                "delex" => LexMode::Delex,
                m => bail!("unknown mode `{m}`"),
            };
            let tok = SubwordModel::load(tokenizer)?;
            let ck = TransformerCheckpoint::load(checkpoint)?;
            if ck.subword_fingerprint != tok.fingerprint() {
                bail!("checkpoint was trained with a different tokenizer");
            }
            let corpus = load_nlg(data, &schema, Split::Test)?;
            let preds = decode_examples(&ck.model, &tok, &corpus.examples, mode, &schema, *beam, *max_len)?;
            let mut text = preds.join("\n");
            text.push('\n');
            std::fs::write(out.join("predictions.txt"), text)?;
            println!("decoded {} examples", preds.len());
        }
        Cmd::Evaluate {
            pred,
            data,
            surface_forms,
            schema,
            metrics,
            group_by_mr,
        } => {
            let schema = schema.load()?;
            let corpus = load_nlg(data, &schema, Split::Test)?;
            let table = SurfaceFormTable::load(surface_forms)?;
            let mut preds = read_lines(pred)?;
            while preds.len() > corpus.len() && preds.last().is_some_and(|l| l.is_empty()) {
                preds.pop();
            }
            let metrics: Vec<Metric> = metrics
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(|m| m.trim().parse())
                .collect::<Result<_, _>>()?;
            let report = evaluate_predictions(&corpus.examples, &preds, &table, &schema, &metrics, *group_by_mr)?;
            write_json(&out.join("metrics.json"), &report)?;
        }
        Cmd::OovGen { train, spec, schema } => {
            let schema = schema.load()?;
            let mut spec = match spec {
                Some(p) => OovSpec::from_toml(&std::fs::read_to_string(p)?)?,
                None => default_oov_spec(0),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let train = load_nlg(train, &schema, Split::Train)?;
            let set = synth_oov(&spec, &train, &schema)?;
            std::fs::write(out.join("oov.jsonl"), set.corpus.to_jsonl())?;
            write_json(&out.join("oov_stats.json"), &set.stats)?;
        }
        Cmd::ToyGen {
            world_seed,
            parallel,
            train,
            dev,
            test,
        } => {
            let world = ToyWorldSpec::desk(cli.seed.unwrap_or(*world_seed));
            let nlg = gen_toy_nlg(
                &world,
                ToyNlgSizes {
                    train: *train,
                    dev: *dev,
                    test: *test,
                },
            )?;
            std::fs::write(out.join("world.txt"), world.to_text())?;
            std::fs::write(out.join("parallel.tsv"), gen_toy_parallel(&world, *parallel)?.to_tsv())?;
            std::fs::write(out.join("nlg_train.jsonl"), nlg.train.to_jsonl())?;
            std::fs::write(out.join("nlg_dev.jsonl"), nlg.dev.to_jsonl())?;
            std::fs::write(out.join("nlg_test.jsonl"), nlg.test.to_jsonl())?;
            std::fs::write(out.join("surface_forms.tsv"), nlg.surface_forms.to_file_string())?;
            println!("wrote toy world to {}", out.display());
        }
        Cmd::Matrix {
            variants,
            sizes,
            parallel_fracs,
            seeds,
        } => {
            let base = match &cli.config {
                Some(_) => load_config(&cli)?,
                None => ExperimentConfig::toy(Variant::Binmt, 1),
            };
            let spec = MatrixSpec {
                variants: variants.iter().map(|v| v.parse()).collect::<Result<_, _>>()?,
                nlg_sizes: sizes.iter().map(|s| s.parse::<SampleSize>()).collect::<Result<_, _>>()?,
                parallel_fracs: parallel_fracs.clone(),
                seeds: seeds.clone(),
            };
            let mut base = base;
            if base.pretrain.is_none() {
                base.pretrain = ExperimentConfig::toy(Variant::Binmt, base.seed).pretrain;
            }
            let report = run_low_resource_matrix(&base, &spec, &out)?;
            println!("{}", report.to_markdown());
        }
        Cmd::EvalServe {
            store,
            addr,
            data,
            systems,
            n,
            schema,
        } => {
            let store = if store.join("tasks.json").exists() {
                RatingStore::open(store)?
            } else {
                let data = data.as_ref().context("--data is needed to create a store")?;
                let schema = schema.load()?;
                let corpus = load_nlg(data, &schema, Split::Test)?;
                let systems = systems
                    .iter()
                    .map(|s| {
                        let (name, file) = s.split_once('=').context("--system takes NAME=FILE")?;
                        let mut predictions = read_lines(Path::new(file))?;
                        predictions.truncate(corpus.len());
                        Ok(SystemOutputs {
                            name: name.to_string(),
                            predictions,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if systems.is_empty() {
                    bail!("at least one --system is needed to create a store");
                }
                let tasks = create_rating_tasks(&corpus.examples, &systems, *n, cli.seed.unwrap_or(0))?;
                RatingStore::create(store, tasks)?
            };
            println!("serving {} tasks on http://{addr}", store.tasks().len());
            tokio::runtime::Runtime::new()?.block_on(serve(store, *addr))?;
        }
        Cmd::EvalReport { store } => {
            let store = RatingStore::open(store)?;
            store.audit()?;
            write_json(&out.join("rating_report.json"), &store.report())?;
        }
    }
    Ok(())
}
