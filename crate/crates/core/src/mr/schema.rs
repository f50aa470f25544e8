//! Slot inventory.
//!
//! The inventory is a closed set read from a tab-separated schema file
//! (`key<TAB>yes|no`, the second column saying whether the slot may be
//! replaced by a placeholder). A copy of the restaurant-domain schema is
//! bundled with the crate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MrError;

/// The slot inventory of the Czech restaurant domain.
pub const RESTAURANT_SCHEMA: &str = include_str!("../../data/restaurant.schema");

/// Name of a slot, e.g. `name` or `good_for_meal`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotKey(String);

impl SlotKey {
    pub fn new(name: impl Into<String>) -> Result<Self, MrError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(MrError::BadIdentifier(name));
        }
        Ok(SlotKey(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// `[a-z_][a-z0-9_]*` (ASCII letters of either case are accepted).
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Whether unknown slot keys are rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaMode {
    /// Keys must be listed in the schema.
    #[default]
    Strict,
    /// Any identifier is accepted; unknown keys are treated as delexicalizable.
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotSchema {
    slots: BTreeMap<SlotKey, bool>,
    order: Vec<SlotKey>,
    mode: SchemaMode,
}

impl SlotSchema {
    pub fn parse(text: &str, mode: SchemaMode) -> Result<Self, MrError> {
        let mut slots = BTreeMap::new();
        let mut order = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |msg: &str| MrError::Malformed {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let (key, flag) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `key<TAB>yes|no`"))?;
            let key = SlotKey::new(key.trim()).map_err(|_| malformed("bad slot key"))?;
            let delex = match flag.trim() {
                "yes" => true,
                "no" => false,
                _ => return Err(malformed("delexicalizable flag must be `yes` or `no`")),
            };
            if slots.insert(key.clone(), delex).is_some() {
                return Err(malformed("duplicate slot key"));
            }
            order.push(key);
        }
        Ok(SlotSchema { slots, order, mode })
    }

    pub fn load(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Self, MrError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, mode)
    }

    /// The bundled twelve-slot restaurant schema.
    pub fn restaurant() -> Self {
        Self::parse(RESTAURANT_SCHEMA, SchemaMode::Strict).expect("bundled schema is valid")
    }

    pub fn with_mode(mut self, mode: SchemaMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> SchemaMode {
        self.mode
    }

    pub fn contains(&self, key: &str) -> bool {
        self.slots.keys().any(|k| k.as_str() == key)
    }

    /// Resolve a key name, applying the schema mode.
    pub fn key(&self, name: &str) -> Result<SlotKey, MrError> {
        let key = SlotKey::new(name)?;
        if self.mode == SchemaMode::Strict && !self.slots.contains_key(&key) {
            return Err(MrError::UnknownSlot(name.to_string()));
        }
        Ok(key)
    }

    pub fn is_delexicalizable(&self, key: &SlotKey) -> bool {
        self.slots.get(key).copied().unwrap_or(true)
    }

    /// Keys in file order.
    pub fn keys(&self) -> &[SlotKey] {
        &self.order
    }
}

impl Default for SlotSchema {
    fn default() -> Self {
        Self::restaurant()
    }
}
