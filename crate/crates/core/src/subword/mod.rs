//! Byte-level BPE shared between the source and target languages.
//!
//! Text is cut into pieces before merging: a piece is a run of non-space
//! characters together with the single space in front of it, and every other
//! whitespace character is a piece of its own. Encoding puts one space in
//! front of the text and decoding takes it off again, so the space byte acts
//! as the word-boundary marker and `decode(encode(x)) == x` for any string.
//!
//! The 256 byte tokens are always in the vocabulary, which rules out unknown
//! tokens. Control tokens get fixed ids below the byte tokens.

mod model;
mod train;

use thiserror::Error;

pub use model::{SubwordModel, TokenSequence};
pub use train::train_subword;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const GENERATE_ID: u32 = 4;
pub const TRANSLATE_ID: u32 = 5;
pub const TO_EN_ID: u32 = 6;
pub const TO_CS_ID: u32 = 7;

/// Reserved tokens, indexed by id.
pub const RESERVED: [&str; 8] = [
    "<pad>",
    "<bos>",
    "<eos>",
    "<mask>",
    "[GENERATE]",
    "[TRANSLATE]",
    "<2en>",
    "<2cs>",
];

/// Reserved tokens that are recognised in input text.
pub const CONTROL_IDS: [u32; 4] = [GENERATE_ID, TRANSLATE_ID, TO_EN_ID, TO_CS_ID];

/// Id of the first byte token; byte `b` has id `BYTE_BASE + b`.
pub const BYTE_BASE: u32 = RESERVED.len() as u32;
/// Smallest admissible vocabulary: reserved tokens plus all bytes, plus one
/// so that at least one merge fits.
pub const MIN_TARGET_SIZE: usize = RESERVED.len() + 256 + 1;

/// Desk-scale default vocabulary size.
pub const DEFAULT_TARGET_SIZE: usize = 4000;

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("target size {got} is below the minimum {min}")]
    TargetTooSmall { got: usize, min: usize },
    #[error("token id {id} is outside the vocabulary of {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
