//! Scoring predictions against an NLG corpus.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::{compute_ser, score_all, EvalCorpus, Metric, MetricScore, SerReport};
use crate::mr::{Example, SlotSchema, SurfaceFormTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub metrics: Vec<MetricScore>,
    pub ser: SerReport,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

/// Word-overlap metrics and SER of `predictions`, aligned with `examples`.
///
/// With `group_by_mr`, examples sharing an MR become one multi-reference
/// item for the overlap metrics (the first prediction for the MR is
/// scored). SER is always computed per example.
pub fn evaluate_predictions(
    examples: &[Example],
    predictions: &[String],
    table: &SurfaceFormTable,
    schema: &SlotSchema,
    metrics: &[Metric],
    group_by_mr: bool,
) -> Result<EvalReport, HarnessError> {
    if examples.len() != predictions.len() {
        return Err(HarnessError::Config(format!(
            "{} predictions for {} examples",
            predictions.len(),
            examples.len()
        )));
    }
    let corpus = if group_by_mr {
        EvalCorpus::grouped(
            examples
                .iter()
                .zip(predictions)
                .map(|(e, p)| (e.mr.to_string(), p.as_str(), e.reference.as_str())),
        )?
    } else {
        EvalCorpus::new(examples.iter().zip(predictions).map(|(e, p)| (p.as_str(), vec![e.reference.as_str()])))?
    };
    let ser = compute_ser(
        examples.iter().zip(predictions).map(|(e, p)| (&e.mr, p.as_str())),
        table,
        schema,
    );
    Ok(EvalReport {
        examples: examples.len(),
        metrics: score_all(&corpus, metrics),
        ser,
    })
}
