use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mr::{normalize, value_realized, MeaningRepresentation, SlotKey, SlotSchema, SurfaceFormTable};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotTally {
    /// Distinct values this slot took.
    pub unique: usize,
    /// Occurrences of the slot.
    pub total: usize,
    /// Occurrences whose value was not realized.
    pub errors: usize,
    /// `1 − errors / total`.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerReport {
    pub examples: usize,
    pub incorrect_examples: usize,
    /// Fraction of examples with at least one unrealized slot.
    pub example_error_rate: f64,
    pub per_slot: BTreeMap<SlotKey, SlotTally>,
    /// Pooled over all slots.
    pub slot_accuracy: f64,
}

impl SerReport {
    /// SER as a percentage, the way result tables print it.
    pub fn percent(&self) -> f64 {
        100.0 * self.example_error_rate
    }
}

/// Slot error rate.
///
/// A slot counts as realized when any of its surface forms (the value itself
/// included) is a substring of the normalized prediction. Slots the schema
/// marks as not delexicalizable (`kids_allowed`) are left out of every count.
/// An example is correct when all of its counted slots are realized.
pub fn compute_ser<'a, I>(examples: I, table: &SurfaceFormTable, schema: &SlotSchema) -> SerReport
where
    I: IntoIterator<Item = (&'a MeaningRepresentation, &'a str)>,
{
    let mut per_slot: BTreeMap<SlotKey, (BTreeSet<String>, usize, usize)> = BTreeMap::new();
    let mut n = 0usize;
    let mut incorrect = 0usize;
    for (mr, prediction) in examples {
        n += 1;
        let pred = normalize(prediction);
        let mut ok = true;
        for (key, value) in mr.slots() {
            if !schema.is_delexicalizable(key) {
                continue;
            }
            let entry = per_slot.entry(key.clone()).or_default();
            entry.0.insert(value.clone());
            entry.1 += 1;
            if !value_realized(&pred, value, table) {
                entry.2 += 1;
                ok = false;
            }
        }
        if !ok {
            incorrect += 1;
        }
    }
    let (mut all_total, mut all_errors) = (0, 0);
    let per_slot = per_slot
        .into_iter()
        .map(|(key, (values, total, errors))| {
            all_total += total;
            all_errors += errors;
            let tally = SlotTally {
                unique: values.len(),
                total,
                errors,
                accuracy: 1.0 - errors as f64 / total as f64,
            };
            (key, tally)
        })
        .collect();
    SerReport {
        examples: n,
        incorrect_examples: incorrect,
        example_error_rate: if n == 0 { 0.0 } else { incorrect as f64 / n as f64 },
        per_slot,
        slot_accuracy: if all_total == 0 {
            1.0
        } else {
            1.0 - all_errors as f64 / all_total as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mr::parse_mr;

    fn mr(s: &str) -> MeaningRepresentation {
        parse_mr(s, &SlotSchema::restaurant()).unwrap()
    }

    #[test]
    fn all_slots_present() {
        let m = mr("inform(name=Pivo & Basilico,phone=250625609)");
        let table = SurfaceFormTable::parse("Pivo & Basilico\tPivu & Basilicu\n").unwrap();
        let r = compute_ser(
            [(&m, "Pivu & Basilicu lze volat na 250625609.")],
            &table,
            &SlotSchema::restaurant(),
        );
        assert_eq!(r.example_error_rate, 0.0);
        assert_eq!(r.per_slot[&SlotKey::new("phone").unwrap()].errors, 0);
    }

    #[test]
    fn missing_slot_counted() {
        let m = mr("inform(name=Pivo & Basilico,phone=250625609)");
        let r = compute_ser(
            [(&m, "Pivo & Basilico je dobrá restaurace.")],
            &SurfaceFormTable::new(),
            &SlotSchema::restaurant(),
        );
        assert_eq!(r.example_error_rate, 1.0);
        let phone = &r.per_slot[&SlotKey::new("phone").unwrap()];
        assert_eq!((phone.total, phone.errors), (1, 1));
        assert_eq!(phone.accuracy, 0.0);
        assert_eq!(r.per_slot[&SlotKey::new("name").unwrap()].errors, 0);
    }

    #[test]
    fn three_of_ten_incorrect() {
        let m = mr("inform(food=German)");
        let preds: Vec<&str> = (0..10).map(|i| if i % 3 == 0 && i > 0 { "nic" } else { "german food" }).collect();
        let r = compute_ser(preds.iter().map(|p| (&m, *p)), &SurfaceFormTable::new(), &SlotSchema::restaurant());
        assert_eq!(r.incorrect_examples, 3);
        assert!((r.example_error_rate - 0.3).abs() < 1e-15);
    }

    #[test]
    fn kids_allowed_ignored() {
        let m = mr("inform(name=A,kids_allowed=yes)");
        let r = compute_ser([(&m, "a")], &SurfaceFormTable::new(), &SlotSchema::restaurant());
        assert_eq!(r.example_error_rate, 0.0);
        assert!(!r.per_slot.contains_key(&SlotKey::new("kids_allowed").unwrap()));
    }
}
