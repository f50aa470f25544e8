use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::{is_identifier, SlotKey, SlotSchema};
use super::MrError;

/// A dialogue act with its ordered slot/value pairs.
///
/// Values are stored with surrounding whitespace trimmed and internal
/// whitespace runs collapsed to one space, so that every MR has exactly one
/// linearized form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeaningRepresentation {
    act: String,
    slots: Vec<(SlotKey, String)>,
}

impl MeaningRepresentation {
    pub fn new(act: impl Into<String>) -> Result<Self, MrError> {
        let act = act.into();
        if !is_identifier(&act) {
            return Err(MrError::BadIdentifier(act));
        }
        Ok(MeaningRepresentation {
            act,
            slots: Vec::new(),
        })
    }

    /// Append a slot. Keys must be unique and values non-blank.
    pub fn push(&mut self, key: SlotKey, value: &str) -> Result<(), MrError> {
        let value = collapse_whitespace(value);
        if value.is_empty() {
            return Err(MrError::EmptyValue(key.to_string()));
        }
        if self.slots.iter().any(|(k, _)| *k == key) {
            return Err(MrError::DuplicateSlot(key.to_string()));
        }
        self.slots.push((key, value));
        Ok(())
    }

    pub fn with_slot(mut self, key: &str, value: &str) -> Result<Self, MrError> {
        self.push(SlotKey::new(key)?, value)?;
        Ok(self)
    }

    pub fn act(&self) -> &str {
        &self.act
    }

    pub fn slots(&self) -> &[(SlotKey, String)] {
        &self.slots
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.slots
            .iter()
            .find(|(k, _)| k.as_str() == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The MR with every value replaced by its placeholder. Two MRs share a
    /// delexicalized pattern when they differ only in slot values.
    pub fn delex_pattern(&self) -> String {
        let keys: Vec<&str> = self.slots.iter().map(|(k, _)| k.as_str()).collect();
        format!("{}({})", self.act, keys.join(","))
    }
}

/// `act(key=value,...)`; values are quoted when they could not be read back
/// unquoted.
impl fmt::Display for MeaningRepresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.act)?;
        for (i, (key, value)) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{key}=")?;
            if value.contains([',', ')', '(', '"', '\\', '=']) {
                f.write_str("\"")?;
                for c in value.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")?;
            } else {
                f.write_str(value)?;
            }
        }
        f.write_str(")")
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse `act(key=value,...)` notation.
///
/// Values may contain spaces and any non-ASCII text. A value containing `,`
/// or `)` must be double-quoted; inside quotes `\"` and `\\` escape.
pub fn parse_mr(text: &str, schema: &SlotSchema) -> Result<MeaningRepresentation, MrError> {
    Parser::new(text).parse(schema)
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            chars: src.char_indices().collect(),
            pos: 0,
            src,
        }
    }

    /// Character offset of the cursor.
    fn error(&self, msg: impl Into<String>) -> MrError {
        MrError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: char) -> Result<(), MrError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.error(format!("expected `{want}`, found end of input"))),
        }
    }

    fn identifier(&mut self) -> Result<String, MrError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        let ident = self.slice(start, self.pos);
        if !is_identifier(&ident) {
            self.pos = start;
            return Err(self.error("expected identifier"));
        }
        Ok(ident)
    }

    fn slice(&self, from: usize, to: usize) -> String {
        let start = self.chars.get(from).map_or(self.src.len(), |&(b, _)| b);
        let end = self.chars.get(to).map_or(self.src.len(), |&(b, _)| b);
        self.src[start..end].to_string()
    }

    fn value(&mut self) -> Result<String, MrError> {
        self.skip_ws();
        if self.peek() == Some('"') {
            self.pos += 1;
            let mut out = String::new();
            loop {
                match self.peek() {
                    None => return Err(self.error("unterminated quoted value")),
                    Some('"') => {
                        self.pos += 1;
                        break;
                    }
                    Some('\\') => {
                        self.pos += 1;
                        match self.peek() {
                            Some(c @ ('"' | '\\')) => {
                                out.push(c);
                                self.pos += 1;
                            }
                            _ => return Err(self.error("bad escape in quoted value")),
                        }
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            Ok(out)
        } else {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c == ',' || c == ')' {
                    break;
                }
                if c == '"' || c == '(' {
                    return Err(self.error(format!("`{c}` in unquoted value")));
                }
                self.pos += 1;
            }
            Ok(self.slice(start, self.pos))
        }
    }

    fn parse(mut self, schema: &SlotSchema) -> Result<MeaningRepresentation, MrError> {
        let act = self.identifier()?;
        let mut mr = MeaningRepresentation::new(act)?;
        self.expect('(')?;
        self.skip_ws();
        if self.peek() == Some(')') {
            self.pos += 1;
        } else {
            loop {
                let key_pos = {
                    self.skip_ws();
                    self.pos
                };
                let name = self.identifier()?;
                let key = schema.key(&name)?;
                self.expect('=')?;
                let value = self.value()?;
                if let Err(e) = mr.push(key, &value) {
                    self.pos = key_pos;
                    return Err(self.error(e.to_string()));
                }
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return Err(self.error(format!("expected `,` or `)`, found `{c}`"))),
                    None => return Err(self.error("expected `,` or `)`, found end of input")),
                }
            }
        }
        self.skip_ws();
        if self.pos != self.chars.len() {
            return Err(self.error("trailing input after `)`"));
        }
        Ok(mr)
    }
}
