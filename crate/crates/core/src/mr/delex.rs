//! Placeholder substitution (`X-<key>`) in both directions.

use std::collections::{BTreeMap, BTreeSet};

use super::normalize::Normalized;
use super::repr::MeaningRepresentation;
use super::schema::{SlotKey, SlotSchema};
use super::surface::SurfaceFormTable;
use super::MrError;

pub const PLACEHOLDER_PREFIX: &str = "X-";

pub fn placeholder(key: &SlotKey) -> String {
    format!("{PLACEHOLDER_PREFIX}{key}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delexicalized {
    pub text: String,
    /// Placeholder → the exact source span it replaced.
    pub fills: BTreeMap<String, String>,
    /// Delexicalizable slots none of whose forms were found.
    pub unmatched: Vec<SlotKey>,
}

/// Replace, for each delexicalizable slot, its longest matching surface form
/// in `text` by the slot's placeholder.
///
/// Matching is done on normalized text and only whole-word occurrences are
/// considered, so a placeholder never fuses with a neighbouring word.
/// Candidates are taken longest first, earliest position breaking ties; a
/// candidate is skipped when its slot is already placed or it overlaps an
/// earlier choice.
pub fn delexicalize(
    mr: &MeaningRepresentation,
    text: &str,
    table: &SurfaceFormTable,
    schema: &SlotSchema,
) -> Delexicalized {
    let norm = Normalized::new(text);
    // (char length, start, slot index)
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (slot_idx, (key, value)) in mr.slots().iter().enumerate() {
        if !schema.is_delexicalizable(key) {
            continue;
        }
        for form in table.lookup(value) {
            let len = form.chars().count();
            for start in norm.find_all(&form) {
                if !norm.on_word_boundary(start, start + len) {
                    continue;
                }
                candidates.push((len, start, slot_idx));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    let mut placed = vec![false; mr.len()];
    for (len, start, slot_idx) in candidates {
        if placed[slot_idx] {
            continue;
        }
        let end = start + len;
        if chosen.iter().any(|&(s, e, _)| start < e && s < end) {
            continue;
        }
        placed[slot_idx] = true;
        chosen.push((start, end, slot_idx));
    }

    let mut spans: Vec<(usize, usize, usize)> = chosen
        .iter()
        .map(|&(s, e, slot)| {
            let (bs, be) = norm.source_span(s, e);
            (bs, be, slot)
        })
        .collect();
    spans.sort();

    let mut out = String::with_capacity(text.len());
    let mut fills = BTreeMap::new();
    let mut cursor = 0;
    for (bs, be, slot) in spans {
        let key = &mr.slots()[slot].0;
        out.push_str(&text[cursor..bs]);
        let ph = placeholder(key);
        out.push_str(&ph);
        fills.insert(ph, text[bs..be].to_string());
        cursor = be;
    }
    out.push_str(&text[cursor..]);

    let unmatched = mr
        .slots()
        .iter()
        .enumerate()
        .filter(|(i, (key, _))| schema.is_delexicalizable(key) && !placed[*i])
        .map(|(_, (key, _))| key.clone())
        .collect();
    Delexicalized {
        text: out,
        fills,
        unmatched,
    }
}

/// Picks the realization of a slot value for a placeholder.
pub trait FormSelector {
    /// `forms` are the normalized table forms for `value`.
    fn select(&self, key: &SlotKey, value: &str, forms: &BTreeSet<String>) -> String;
}

/// Copies the MR value verbatim.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySelector;

impl FormSelector for IdentitySelector {
    fn select(&self, _key: &SlotKey, value: &str, _forms: &BTreeSet<String>) -> String {
        value.to_string()
    }
}

/// Re-inserts the spans recorded by [`delexicalize`]; falls back to the
/// verbatim value for placeholders it has no record of.
#[derive(Clone, Debug)]
pub struct RecordedSelector<'a> {
    pub fills: &'a BTreeMap<String, String>,
}

impl FormSelector for RecordedSelector<'_> {
    fn select(&self, key: &SlotKey, value: &str, _forms: &BTreeSet<String>) -> String {
        self.fills
            .get(&placeholder(key))
            .cloned()
            .unwrap_or_else(|| value.to_string())
    }
}

/// Locate placeholders: `(byte start, byte end, key)`.
pub fn find_placeholders(text: &str) -> Vec<(usize, usize, String)> {
    let mut found = Vec::new();
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(pos) = text[from..].find(PLACEHOLDER_PREFIX) {
        let start = from + pos;
        let prev_is_word = text[..start]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || c == '_');
        let key_start = start + PLACEHOLDER_PREFIX.len();
        let mut end = key_start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        if !prev_is_word && end > key_start && (bytes[key_start].is_ascii_alphabetic() || bytes[key_start] == b'_') {
            found.push((start, end, text[key_start..end].to_string()));
            from = end;
        } else {
            from = key_start;
        }
    }
    found
}

/// Fill every placeholder in `delex_text` with the selector's choice.
pub fn lexicalize(
    delex_text: &str,
    mr: &MeaningRepresentation,
    table: &SurfaceFormTable,
    selector: &dyn FormSelector,
) -> Result<String, MrError> {
    let mut out = String::with_capacity(delex_text.len());
    let mut cursor = 0;
    for (start, end, key) in find_placeholders(delex_text) {
        let (slot_key, value) = mr
            .slots()
            .iter()
            .find(|(k, _)| k.as_str() == key)
            .ok_or_else(|| MrError::UnmatchedPlaceholder(format!("{PLACEHOLDER_PREFIX}{key}")))?;
        out.push_str(&delex_text[cursor..start]);
        out.push_str(&selector.select(slot_key, value, &table.lookup(value)));
        cursor = end;
    }
    out.push_str(&delex_text[cursor..]);
    Ok(out)
}

/// Whether `value`, in any of its surface forms, occurs in `text_norm`
/// (already normalized).
pub fn value_realized(text_norm: &str, value: &str, table: &SurfaceFormTable) -> bool {
    table
        .lookup(value)
        .iter()
        .any(|form| !form.is_empty() && text_norm.contains(form.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mr::parse_mr;

    fn schema() -> SlotSchema {
        SlotSchema::restaurant()
    }

    #[test]
    fn inflected_name_and_phone() {
        let mr = parse_mr("inform(name=Pivo & Basilico,phone=250625609)", &schema()).unwrap();
        let table =
            SurfaceFormTable::parse("Pivo & Basilico\tPivu & Basilicu|Pivem & Basilicem\n").unwrap();
        let text = "Pivu & Basilicu lze volat na 250625609";
        let d = delexicalize(&mr, text, &table, &schema());
        assert_eq!(d.text, "X-name lze volat na X-phone");
        assert!(d.unmatched.is_empty());
        assert_eq!(d.fills["X-name"], "Pivu & Basilicu");
        assert_eq!(d.fills["X-phone"], "250625609");
    }

    #[test]
    fn kids_allowed_never_replaced() {
        let mr = parse_mr("inform(kids_allowed=Yes)", &schema()).unwrap();
        let text = "Yes, kids are allowed. yes yes";
        let d = delexicalize(&mr, text, &SurfaceFormTable::new(), &schema());
        assert_eq!(d.text, text);
        assert!(d.unmatched.is_empty());
    }

    #[test]
    fn absent_value_reported() {
        let mr = parse_mr("inform(area=Hradčany)", &schema()).unwrap();
        let d = delexicalize(&mr, "Nice place.", &SurfaceFormTable::new(), &schema());
        assert_eq!(d.text, "Nice place.");
        assert_eq!(d.unmatched, vec![SlotKey::new("area").unwrap()]);
    }

    #[test]
    fn longest_match_wins() {
        let mr = parse_mr("inform(address=Kaprova 3,near=Kaprova 38)", &schema()).unwrap();
        let d = delexicalize(&mr, "It is at Kaprova 38, close to Kaprova 3.", &SurfaceFormTable::new(), &schema());
        assert_eq!(d.text, "It is at X-near, close to X-address.");
    }

    #[test]
    fn case_insensitive_match_keeps_source_span() {
        let mr = parse_mr("inform(food=German)", &schema()).unwrap();
        let d = delexicalize(&mr, "GERMAN  food", &SurfaceFormTable::new(), &schema());
        assert_eq!(d.text, "X-food  food");
        assert_eq!(d.fills["X-food"], "GERMAN");
    }

    #[test]
    fn no_match_inside_words() {
        let mr = parse_mr("inform(name=Pivo)", &schema()).unwrap();
        let d = delexicalize(&mr, "Pivovar a Pivo", &SurfaceFormTable::new(), &schema());
        assert_eq!(d.text, "Pivovar a X-name");
    }

    #[test]
    fn lexicalize_identity() {
        let mr = parse_mr("inform(name=Green Spirit)", &schema()).unwrap();
        let table = SurfaceFormTable::new();
        assert_eq!(
            lexicalize("X-name is cheap", &mr, &table, &IdentitySelector).unwrap(),
            "Green Spirit is cheap"
        );
        assert_eq!(
            lexicalize("nothing to fill", &mr, &table, &IdentitySelector).unwrap(),
            "nothing to fill"
        );
        match lexicalize("X-area", &mr, &table, &IdentitySelector) {
            Err(MrError::UnmatchedPlaceholder(p)) => assert_eq!(p, "X-area"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn placeholder_scan() {
        let found = find_placeholders("X-price_range, X-name. MAX-name X-");
        let keys: Vec<&str> = found.iter().map(|(_, _, k)| k.as_str()).collect();
        assert_eq!(keys, vec!["price_range", "name"]);
    }

    #[test]
    fn recorded_round_trip() {
        let mr = parse_mr("inform(name=Pivo & Basilico,phone=250625609)", &schema()).unwrap();
        let table = SurfaceFormTable::parse("Pivo & Basilico\tPivu & Basilicu\n").unwrap();
        let text = "Volejte  PIVU & basilicu: 250625609!";
        let d = delexicalize(&mr, text, &table, &schema());
        let back = lexicalize(&d.text, &mr, &table, &RecordedSelector { fills: &d.fills }).unwrap();
        assert_eq!(back, text);
    }
}
