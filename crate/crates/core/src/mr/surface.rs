use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::normalize::normalize;
use super::MrError;

/// Acceptable realizations (translations, inflections) of slot values.
///
/// Keys and forms are stored normalized. Every value's set contains the
/// value itself; values missing from the table map to that identity set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurfaceFormTable {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl SurfaceFormTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add forms for `value`; repeated values accumulate.
    pub fn insert<I, S>(&mut self, value: &str, forms: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let key = normalize(value);
        let set = self
            .entries
            .entry(key.clone())
            .or_insert_with(|| BTreeSet::from([key]));
        for form in forms {
            let form = normalize(form.as_ref());
            if !form.is_empty() {
                set.insert(form);
            }
        }
    }

    pub fn lookup(&self, value: &str) -> BTreeSet<String> {
        let key = normalize(value);
        match self.entries.get(&key) {
            Some(set) => set.clone(),
            None => BTreeSet::from([key]),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    /// `value<TAB>form1|form2|...`, one entry per line. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, MrError> {
        let mut table = SurfaceFormTable::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let malformed = |msg: &str| MrError::Malformed {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let (value, forms) = raw
                .split_once('\t')
                .ok_or_else(|| malformed("expected `value<TAB>form1|form2|...`"))?;
            if value.trim().is_empty() {
                return Err(malformed("empty value"));
            }
            if forms.contains('\t') {
                return Err(malformed("more than one tab"));
            }
            let forms: Vec<&str> = forms.split('|').collect();
            if forms.iter().any(|f| f.trim().is_empty()) {
                return Err(malformed("empty surface form"));
            }
            table.insert(value, forms);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MrError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Inverse of [`SurfaceFormTable::parse`] (up to normalization).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (value, forms) in &self.entries {
            let forms: Vec<&str> = forms.iter().map(String::as_str).collect();
            out.push_str(value);
            out.push('\t');
            out.push_str(&forms.join("|"));
            out.push('\n');
        }
        out
    }

    pub fn merge(&mut self, other: &SurfaceFormTable) {
        for (value, forms) in &other.entries {
            self.insert(value, forms);
        }
    }
}
