//! Grids of runs over fine-tuning set sizes and pre-training fractions.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Variant};
use super::pipeline::{run_experiment_with, RunOptions};
use super::HarnessError;
use crate::corpus::SampleSize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub variants: Vec<Variant>,
    pub nlg_sizes: Vec<SampleSize>,
    /// Applied to variants pre-trained on parallel data.
    pub parallel_fracs: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl MatrixSpec {
    pub fn standard(variants: Vec<Variant>, seeds: Vec<u64>) -> Self {
        MatrixSpec {
            variants,
            nlg_sizes: vec![SampleSize::Count(100), SampleSize::Count(1000), SampleSize::Fraction(1.0)],
            parallel_fracs: vec![0.01, 0.1, 1.0],
            seeds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixTable {
    /// Fine-tuning set size varies, all parallel data.
    Nlg,
    /// Parallel fraction varies, all fine-tuning data.
    Nmt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub table: MatrixTable,
    pub variant: Variant,
    pub nlg_size: SampleSize,
    pub parallel_fraction: f64,
    /// Fine-tuning examples actually used.
    pub train_examples: usize,
    pub seeds: Vec<u64>,
    pub ser: Vec<f64>,
    pub bleu: Vec<f64>,
    pub mean_ser: f64,
    pub mean_bleu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rows: Vec<MatrixRow>,
    /// Places where SER did not fall as the data grew.
    pub warnings: Vec<String>,
}

impl MatrixReport {
    pub fn row(&self, table: MatrixTable, variant: Variant, nlg_size: SampleSize, fraction: f64) -> Option<&MatrixRow> {
        self.rows
            .iter()
            .find(|r| r.table == table && r.variant == variant && r.nlg_size == nlg_size && r.parallel_fraction == fraction)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| table | variant | nlg size | parallel | n | BLEU | SER % |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            writeln!(
                out,
                "| {:?} | {} | {} | {} | {} | {:.2} | {:.2} |",
                r.table,
                r.variant.as_str(),
                r.nlg_size,
                r.parallel_fraction,
                r.train_examples,
                r.mean_bleu,
                r.mean_ser
            )
            .unwrap();
        }
        for w in &self.warnings {
            writeln!(out, "\nwarning: {w}").unwrap();
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn slug(x: impl std::fmt::Display) -> String {
    x.to_string().replace('.', "p")
}

/// Run the grid. Pre-trained checkpoints are cached under `out/pretrain`
/// and shared between rows, so a cell equals a standalone
/// [`run_experiment_with`](super::run_experiment_with) of the same config.
pub fn run_low_resource_matrix(
    base: &ExperimentConfig,
    spec: &MatrixSpec,
    out: &Path,
) -> Result<MatrixReport, HarnessError> {
    if spec.seeds.is_empty() || spec.variants.is_empty() {
        return Err(HarnessError::Config("matrix needs at least one variant and one seed".into()));
    }
    let opts = RunOptions {
        pretrain_cache: Some(out.join("pretrain")),
    };
    let mut rows = Vec::new();
    let cell = |table: MatrixTable, variant: Variant, size: SampleSize, frac: f64| -> Result<MatrixRow, HarnessError> {
        let (mut ser, mut bleu, mut n) = (Vec::new(), Vec::new(), 0);
        for &seed in &spec.seeds {
            let mut cfg = base.clone();
            cfg.variant = variant;
            cfg.seed = seed;
            cfg.name = format!("{}-{}-{}-{}", base.name, variant.as_str(), slug(size), slug(frac));
            cfg.subsample.nlg = size;
            cfg.subsample.parallel = SampleSize::Fraction(frac);
            let dir = out.join(format!("{:?}", table).to_lowercase()).join(format!(
                "{}-n{}-p{}-s{seed}",
                variant.as_str(),
                slug(size),
                slug(frac)
            ));
            let summary = run_experiment_with(&cfg, &dir, &opts)?;
            ser.push(summary.report.ser.percent());
            bleu.push(summary.report.metric("bleu").unwrap_or(f64::NAN));
            n = summary.train_examples;
        }
        Ok(MatrixRow {
            table,
            variant,
            nlg_size: size,
            parallel_fraction: frac,
            train_examples: n,
            seeds: spec.seeds.clone(),
            mean_ser: mean(&ser),
            mean_bleu: mean(&bleu),
            ser,
            bleu,
        })
    };
    for &variant in &spec.variants {
        for &size in &spec.nlg_sizes {
            rows.push(cell(MatrixTable::Nlg, variant, size, 1.0)?);
        }
    }
    for &variant in spec.variants.iter().filter(|v| v.uses_parallel()) {
        for &frac in &spec.parallel_fracs {
            rows.push(cell(MatrixTable::Nmt, variant, SampleSize::Fraction(1.0), frac)?);
        }
    }
    let warnings = monotonicity_warnings(&rows);
    let report = MatrixReport { rows, warnings };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("matrix.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.join("matrix.md"), report.to_markdown())?;
    Ok(report)
}

/// Within each (table, variant), mean SER should not rise as the data
/// grows; each rise is reported.
pub fn monotonicity_warnings(rows: &[MatrixRow]) -> Vec<String> {
    let mut warnings = Vec::new();
    for table in [MatrixTable::Nlg, MatrixTable::Nmt] {
        let mut variants: Vec<Variant> = rows.iter().filter(|r| r.table == table).map(|r| r.variant).collect();
        variants.dedup();
        for v in variants {
            let mut group: Vec<&MatrixRow> = rows.iter().filter(|r| r.table == table && r.variant == v).collect();
            match table {
                MatrixTable::Nlg => group.sort_by_key(|r| r.train_examples),
                MatrixTable::Nmt => group.sort_by(|a, b| a.parallel_fraction.total_cmp(&b.parallel_fraction)),
            }
            for w in group.windows(2) {
                if w[1].mean_ser > w[0].mean_ser {
                    warnings.push(format!(
                        "{:?}/{}: SER rose from {:.2} (nlg {}, parallel {}) to {:.2} (nlg {}, parallel {})",
                        table,
                        v.as_str(),
                        w[0].mean_ser,
                        w[0].nlg_size,
                        w[0].parallel_fraction,
                        w[1].mean_ser,
                        w[1].nlg_size,
                        w[1].parallel_fraction
                    ));
                }
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, ser: f64) -> MatrixRow {
        MatrixRow {
            table: MatrixTable::Nlg,
            variant: Variant::Binmt,
            nlg_size: SampleSize::Count(n),
            parallel_fraction: 1.0,
            train_examples: n,
            seeds: vec![1],
            ser: vec![ser],
            bleu: vec![0.0],
            mean_ser: ser,
            mean_bleu: 0.0,
        }
    }

    #[test]
    fn rising_ser_is_flagged() {
        assert!(monotonicity_warnings(&[row(100, 30.0), row(1000, 10.0), row(2000, 10.0)]).is_empty());
        let w = monotonicity_warnings(&[row(1000, 10.0), row(100, 30.0), row(2000, 12.0)]);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("10.00") && w[0].contains("12.00"));
    }
}
