//! Out-of-vocabulary challenge sets: template MRs filled with values never
//! seen in training.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, NlgCorpus, Split};
use crate::mr::{normalize, parse_mr, Example, MeaningRepresentation, SlotSchema};

pub const OOV_PHONE_DIGITS: usize = 9;
pub const OOV_COUNT_RANGE: std::ops::RangeInclusive<u32> = 1..=99;

const NUMERIC_SLOTS: [&str; 2] = ["phone", "count"];
const TEMPLATES: &str = include_str!("../../data/oov/templates.txt");
const POOLS: [(&str, &str); 7] = [
    ("name", include_str!("../../data/oov/name.txt")),
    ("area", include_str!("../../data/oov/area.txt")),
    ("near", include_str!("../../data/oov/near.txt")),
    ("address", include_str!("../../data/oov/address.txt")),
    ("food", include_str!("../../data/oov/food.txt")),
    ("postcode", include_str!("../../data/oov/postcode.txt")),
    ("price", include_str!("../../data/oov/price.txt")),
];

/// Templates (slot values ignored), value pools and sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OovSpec {
    /// MRs in `act(key=?,...)` notation.
    pub templates: Vec<String>,
    pub pools: BTreeMap<String, Vec<String>>,
    pub per_template: usize,
    pub seed: u64,
}

fn lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// The bundled fixture: 10 templates with Czech value pools.
pub fn default_oov_spec(seed: u64) -> OovSpec {
    OovSpec {
        templates: lines(TEMPLATES),
        pools: POOLS.iter().map(|(k, v)| (k.to_string(), lines(v))).collect(),
        per_template: 10,
        seed,
    }
}

impl OovSpec {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        toml::from_str(text).map_err(|e| CorpusError::Spec(e.to_string()))
    }

    fn parsed_templates(&self, schema: &SlotSchema) -> Result<Vec<MeaningRepresentation>, CorpusError> {
        let templates = self
            .templates
            .iter()
            .map(|t| parse_mr(t, schema))
            .collect::<Result<Vec<_>, _>>()?;
        for t in &templates {
            for (key, _) in t.slots() {
                let key = key.as_str();
                let pooled = self.pools.get(key).is_some_and(|p| !p.is_empty());
                if NUMERIC_SLOTS.contains(&key) {
                    if self.pools.contains_key(key) {
                        return Err(CorpusError::Spec(format!("`{key}` is synthesized and must not have a pool")));
                    }
                } else if !pooled {
                    return Err(CorpusError::Spec(format!("no value pool for slot `{key}`")));
                }
            }
        }
        Ok(templates)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OovStats {
    pub mrs: usize,
    pub slots: usize,
    pub unique_values: usize,
    pub slots_per_key: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct OovSet {
    /// MRs with empty references.
    pub corpus: NlgCorpus,
    pub stats: OovStats,
}

/// Fill every template `per_template` times with pooled or synthesized
/// values.
///
/// Phone numbers are 9 random digits and counts lie in 1..=99; numbers that
/// happen to occur in training are redrawn. Fails, listing the values, when
/// a pool shares values with `train`.
pub fn synth_oov(spec: &OovSpec, train: &NlgCorpus, schema: &SlotSchema) -> Result<OovSet, CorpusError> {
    let templates = spec.parsed_templates(schema)?;
    let seen: BTreeSet<String> = train
        .examples
        .iter()
        .flat_map(|e| e.mr.slots().iter().map(|(_, v)| normalize(v)))
        .collect();
    let overlap: BTreeSet<String> = spec
        .pools
        .values()
        .flatten()
        .filter(|v| seen.contains(&normalize(v)))
        .cloned()
        .collect();
    if !overlap.is_empty() {
        return Err(CorpusError::OovOverlap(overlap.into_iter().collect()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fresh_number = |rng: &mut ChaCha8Rng, key: &str| -> Result<String, CorpusError> {
        for _ in 0..10_000 {
            let v = if key == "phone" {
                (0..OOV_PHONE_DIGITS).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
            } else {
                rng.random_range(OOV_COUNT_RANGE).to_string()
            };
            if !seen.contains(&v) {
                return Ok(v);
            }
        }
        Err(CorpusError::Spec(format!("cannot draw an unseen `{key}` value")))
    };

    let mut examples = Vec::with_capacity(templates.len() * spec.per_template);
    let mut values = BTreeSet::new();
    let mut slots_per_key: BTreeMap<String, usize> = BTreeMap::new();
    for template in &templates {
        for _ in 0..spec.per_template {
            let mut mr = MeaningRepresentation::new(template.act())?;
            for (key, _) in template.slots() {
                let value = match spec.pools.get(key.as_str()) {
                    Some(pool) => pool.choose(&mut rng).expect("non-empty pool").clone(),
                    None => fresh_number(&mut rng, key.as_str())?,
                };
                values.insert(normalize(&value));
                *slots_per_key.entry(key.to_string()).or_default() += 1;
                mr.push(key.clone(), &value)?;
            }
            examples.push(Example::new(mr, String::new(), None)?);
        }
    }
    let stats = OovStats {
        mrs: examples.len(),
        slots: slots_per_key.values().sum(),
        unique_values: values.len(),
        slots_per_key,
    };
    Ok(OovSet {
        corpus: NlgCorpus {
            examples,
            split: Split::Test,
        },
        stats,
    })
}
