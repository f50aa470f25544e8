//! Flattening MRs into model input strings.
//!
//! `[GENERATE] <2cs> inform name = Pivo & Basilico phone = 250625609`
//!
//! Value tokens that equal the key/value separator, or that begin with a
//! backslash, are written with one extra leading backslash so that the
//! flattened string can be read back unambiguously.

use serde::{Deserialize, Serialize};

use super::repr::MeaningRepresentation;
use super::schema::SlotSchema;
use super::MrError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskToken {
    #[serde(rename = "[TRANSLATE]")]
    Translate,
    #[serde(rename = "[GENERATE]")]
    Generate,
}

impl TaskToken {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskToken::Translate => "[TRANSLATE]",
            TaskToken::Generate => "[GENERATE]",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LangToken {
    #[serde(rename = "<2en>")]
    En,
    #[serde(rename = "<2cs>")]
    Cs,
}

impl LangToken {
    pub fn as_str(self) -> &'static str {
        match self {
            LangToken::En => "<2en>",
            LangToken::Cs => "<2cs>",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizationConfig {
    pub task: TaskToken,
    pub lang: LangToken,
    /// Token written between a slot key and its value.
    pub separator: String,
}

impl LinearizationConfig {
    pub fn new(task: TaskToken, lang: LangToken) -> Self {
        LinearizationConfig {
            task,
            lang,
            separator: "=".to_string(),
        }
    }

    /// `[GENERATE] <2cs>`, the NLG fine-tuning input prefix.
    pub fn generate_cs() -> Self {
        Self::new(TaskToken::Generate, LangToken::Cs)
    }

    fn prefix(&self) -> String {
        format!("{} {}", self.task.as_str(), self.lang.as_str())
    }
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        Self::generate_cs()
    }
}

pub fn linearize(mr: &MeaningRepresentation, cfg: &LinearizationConfig) -> String {
    let mut out = cfg.prefix();
    out.push(' ');
    out.push_str(mr.act());
    for (key, value) in mr.slots() {
        out.push(' ');
        out.push_str(key.as_str());
        out.push(' ');
        out.push_str(&cfg.separator);
        for token in value.split(' ') {
            out.push(' ');
            if token == cfg.separator || token.starts_with('\\') {
                out.push('\\');
            }
            out.push_str(token);
        }
    }
    out
}

/// Prefix plain text (a translation source sentence) with the control tokens.
pub fn linearize_text(text: &str, cfg: &LinearizationConfig) -> String {
    let body = super::repr::collapse_whitespace(text);
    if body.is_empty() {
        cfg.prefix()
    } else {
        format!("{} {}", cfg.prefix(), body)
    }
}

/// Strict inverse of [`linearize`]: the control tokens must match `cfg`.
pub fn parse_linearized(
    text: &str,
    cfg: &LinearizationConfig,
    schema: &SlotSchema,
) -> Result<MeaningRepresentation, MrError> {
    let tokens: Vec<&str> = text.split(' ').collect();
    let bad = |pos: usize, msg: &str| MrError::Syntax {
        pos,
        msg: msg.to_string(),
    };
    if tokens.len() < 3 {
        return Err(bad(0, "missing control tokens or act"));
    }
    if tokens[0] != cfg.task.as_str() || tokens[1] != cfg.lang.as_str() {
        return Err(bad(0, "control tokens do not match configuration"));
    }
    let mut mr = MeaningRepresentation::new(tokens[2])?;
    let seps: Vec<usize> = (3..tokens.len())
        .filter(|&i| tokens[i] == cfg.separator)
        .collect();
    if seps.is_empty() {
        return if tokens.len() == 3 {
            Ok(mr)
        } else {
            Err(bad(3, "expected `key =` after act"))
        };
    }
    if seps[0] != 4 {
        return Err(bad(3, "expected `key =` after act"));
    }
    for (n, &sep) in seps.iter().enumerate() {
        let end = seps.get(n + 1).map_or(tokens.len(), |&next| next - 1);
        if end <= sep + 1 {
            return Err(bad(sep, "empty value"));
        }
        let key = schema.key(tokens[sep - 1])?;
        let value: Vec<&str> = tokens[sep + 1..end]
            .iter()
            .map(|t| t.strip_prefix('\\').unwrap_or(t))
            .collect();
        mr.push(key, &value.join(" "))?;
    }
    Ok(mr)
}
