//! Meaning representations: parsing, flattening, and slot-value substitution.

mod delex;
mod linearize;
mod normalize;
mod repr;
mod schema;
mod surface;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delex::{
    delexicalize, find_placeholders, lexicalize, placeholder, value_realized, Delexicalized,
    FormSelector, IdentitySelector, RecordedSelector, PLACEHOLDER_PREFIX,
};
pub use linearize::{
    linearize, linearize_text, parse_linearized, LangToken, LinearizationConfig, TaskToken,
};
pub use normalize::{normalize, Normalized};
pub use repr::{parse_mr, MeaningRepresentation};
pub use schema::{SchemaMode, SlotKey, SlotSchema, RESTAURANT_SCHEMA};
pub use surface::SurfaceFormTable;

#[derive(Debug, Error)]
pub enum MrError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown slot key `{0}`")]
    UnknownSlot(String),
    #[error("duplicate slot key `{0}`")]
    DuplicateSlot(String),
    #[error("empty value for slot `{0}`")]
    EmptyValue(String),
    #[error("not an identifier: `{0}`")]
    BadIdentifier(String),
    #[error("placeholder `{0}` has no slot in the MR")]
    UnmatchedPlaceholder(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One line of a dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub mr: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delex_text: Option<String>,
}

/// An MR with its reference text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub mr: MeaningRepresentation,
    pub reference: String,
    pub delex_reference: Option<String>,
}

impl Example {
    pub fn new(
        mr: MeaningRepresentation,
        reference: String,
        delex_reference: Option<String>,
    ) -> Result<Self, MrError> {
        if let Some(delex) = &delex_reference {
            for (_, _, key) in find_placeholders(delex) {
                if mr.get(&key).is_none() {
                    return Err(MrError::UnmatchedPlaceholder(format!(
                        "{PLACEHOLDER_PREFIX}{key}"
                    )));
                }
            }
        }
        Ok(Example {
            mr,
            reference,
            delex_reference,
        })
    }

    pub fn from_record(record: &DatasetRecord, schema: &SlotSchema) -> Result<Self, MrError> {
        let mr = parse_mr(&record.mr, schema)?;
        Self::new(mr, record.text.clone(), record.delex_text.clone())
    }

    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord {
            mr: self.mr.to_string(),
            text: self.reference.clone(),
            delex_text: self.delex_reference.clone(),
        }
    }
}
