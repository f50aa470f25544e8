//! A synthetic pseudo-translation world.
//!
//! Source sentences are sequences of pseudo-word stems, case markers, entity
//! names and digit strings. Translating one requires three skills: map each
//! stem through a dictionary, copy entities and digits, and inflect the word
//! after a marker by appending the marker's suffix (the marker itself is
//! dropped).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, NlgCorpus, ParallelCorpus, Split};
use crate::mr::{delexicalize, Example, MeaningRepresentation, SlotSchema, SurfaceFormTable};

/// Slots of toy NLG MRs, in template order. `name` is always present.
pub const TOY_SLOTS: [&str; 5] = ["name", "good_for_meal", "area", "near", "phone"];

/// The first stems of the dictionary act as the template's function words.
const FUNCTION_WORDS: usize = 5;
const SUFFIXES: [&str; 8] = ["u", "em", "ou", "ech", "ovi", "ách", "ami", "ům"];

const SRC_CONS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const SRC_VOW: &[char] = &['a', 'e', 'i', 'o', 'u'];
const TGT_CONS: &[char] = &[
    'b', 'c', 'd', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z', 'č', 'ř', 'š', 'ž',
];
const TGT_VOW: &[char] = &['a', 'e', 'i', 'o', 'u', 'y', 'á', 'é', 'í', 'ý'];
const TGT_FINAL: &[char] = &['b', 'd', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z', 'š'];
const ENT_FINAL: &[char] = &['n', 'r', 'l', 's', 'k', 't'];

/// Dictionary, inflection rules and entity list of a toy world.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyWorldSpec {
    pub seed: u64,
    /// Source stem → target stem.
    pub stems: Vec<(String, String)>,
    /// Marker word → suffix for the following word.
    pub markers: Vec<(String, String)>,
    pub entities: Vec<String>,
}

enum Word<'a> {
    Stem(&'a str),
    Marker(&'a str),
    Entity(&'a str),
    Digits(&'a str),
}

fn syllables(rng: &mut ChaCha8Rng, n: usize, cons: &[char], vow: &[char]) -> String {
    (0..n)
        .flat_map(|_| [*cons.choose(rng).unwrap(), *vow.choose(rng).unwrap()])
        .collect()
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(char::is_alphabetic)
}

impl ToyWorldSpec {
    /// 200 stems, 5 markers, 50 entities.
    pub fn desk(seed: u64) -> Self {
        Self::generate(seed, 200, 5, 50).expect("desk world parameters are feasible")
    }

    /// Draw a random world.
    ///
    /// Target forms are chosen so that no stem or entity occurs inside a
    /// surface form of another one, which keeps substring-based slot
    /// checks unambiguous.
    pub fn generate(seed: u64, n_stems: usize, n_markers: usize, n_entities: usize) -> Result<Self, CorpusError> {
        if n_markers < 3 || n_markers > SUFFIXES.len() {
            return Err(CorpusError::Spec(format!("markers must be between 3 and {}", SUFFIXES.len())));
        }
        if n_stems <= FUNCTION_WORDS + 1 || n_entities < 2 {
            return Err(CorpusError::Spec("too few stems or entities".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let suffixes: Vec<&str> = SUFFIXES[..n_markers].to_vec();

        let mut markers = Vec::new();
        let mut marker_words = BTreeSet::new();
        while markers.len() < n_markers {
            let w = syllables(&mut rng, 1, SRC_CONS, SRC_VOW);
            if marker_words.insert(w.clone()) {
                markers.push((w, suffixes[markers.len()].to_string()));
            }
        }

        let mut claimed = Claimed::default();
        let mut source_words: BTreeSet<String> = marker_words;
        let mut stems = Vec::new();
        let mut attempts = 0usize;
        while stems.len() < n_stems {
            attempts += 1;
            if attempts > 200_000 {
                return Err(CorpusError::Spec("could not draw enough distinct stems".into()));
            }
            let (ns, nt) = (rng.random_range(2..=3), rng.random_range(2..=3));
            let src = syllables(&mut rng, ns, SRC_CONS, SRC_VOW);
            let mut tgt = syllables(&mut rng, nt, TGT_CONS, TGT_VOW);
            tgt.push(*TGT_FINAL.choose(&mut rng).unwrap());
            if source_words.contains(&src) || !claimed.try_claim(&tgt, &suffixes) {
                continue;
            }
            source_words.insert(src.clone());
            stems.push((src, tgt));
        }

        let mut entities = Vec::new();
        while entities.len() < n_entities {
            attempts += 1;
            if attempts > 400_000 {
                return Err(CorpusError::Spec("could not draw enough distinct entities".into()));
            }
            let mut lower = syllables(&mut rng, 2, SRC_CONS, SRC_VOW);
            lower.push(*ENT_FINAL.choose(&mut rng).unwrap());
            if source_words.contains(&lower) || !claimed.try_claim(&lower, &suffixes) {
                continue;
            }
            source_words.insert(lower.clone());
            let mut chars = lower.chars();
            let first = chars.next().unwrap().to_uppercase().collect::<String>();
            entities.push(first + chars.as_str());
        }

        let spec = ToyWorldSpec {
            seed,
            stems,
            markers,
            entities,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Spec(m));
        if self.stems.len() <= FUNCTION_WORDS + 1 {
            return bad(format!("need more than {} stems", FUNCTION_WORDS + 1));
        }
        if self.markers.len() < 3 {
            return bad("need at least 3 markers".into());
        }
        if self.entities.len() < 2 {
            return bad("need at least 2 entities".into());
        }
        let mut src = BTreeSet::new();
        let mut tgt = BTreeSet::new();
        for (s, t) in &self.stems {
            if !is_word(s) || !is_word(t) || s.chars().any(char::is_uppercase) {
                return bad(format!("stem `{s} -> {t}` is not a pair of lowercase words"));
            }
            if !src.insert(s.as_str()) {
                return bad(format!("source stem `{s}` listed twice"));
            }
            if !tgt.insert(t.as_str()) {
                return bad(format!("target stem `{t}` used twice"));
            }
        }
        let mut markers = BTreeSet::new();
        for (m, suffix) in &self.markers {
            if !is_word(m) || !is_word(suffix) {
                return bad(format!("marker `{m} -> {suffix}` is malformed"));
            }
            if src.contains(m.as_str()) {
                return bad(format!("marker `{m}` is also a stem"));
            }
            if !markers.insert(m.as_str()) {
                return bad(format!("marker `{m}` listed twice"));
            }
        }
        let mut ents = BTreeSet::new();
        for e in &self.entities {
            if !is_word(e) || !e.starts_with(char::is_uppercase) {
                return bad(format!("entity `{e}` must be a capitalized word"));
            }
            if !ents.insert(e.as_str()) {
                return bad(format!("entity `{e}` listed twice"));
            }
        }
        Ok(())
    }

    /// `key: value` lines: `seed: N`, `marker: WORD -> SUFFIX`,
    /// `stem: SOURCE -> TARGET`, `entity: NAME`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut seed = None;
        let mut stems = Vec::new();
        let mut markers = Vec::new();
        let mut entities = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| CorpusError::Line {
                line: i + 1,
                msg: msg.to_string(),
            };
            let (key, value) = line.split_once(':').ok_or_else(|| err("expected `key: value`"))?;
            let value = value.trim();
            let arrow = || {
                value
                    .split_once("->")
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| err("expected `a -> b`"))
            };
            match key.trim() {
                "seed" => seed = Some(value.parse().map_err(|_| err("seed must be an integer"))?),
                "stem" => stems.push(arrow()?),
                "marker" => markers.push(arrow()?),
                "entity" => entities.push(value.to_string()),
                other => return Err(err(&format!("unknown key `{other}`"))),
            }
        }
        let spec = ToyWorldSpec {
            seed: seed.ok_or_else(|| CorpusError::Spec("missing `seed`".into()))?,
            stems,
            markers,
            entities,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, CorpusError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("seed: {}\n", self.seed);
        for (m, s) in &self.markers {
            writeln!(out, "marker: {m} -> {s}").unwrap();
        }
        for (s, t) in &self.stems {
            writeln!(out, "stem: {s} -> {t}").unwrap();
        }
        for e in &self.entities {
            writeln!(out, "entity: {e}").unwrap();
        }
        out
    }

    fn classify<'a>(&'a self, token: &'a str) -> Option<Word<'a>> {
        if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
            return Some(Word::Digits(token));
        }
        if let Some((_, s)) = self.markers.iter().find(|(m, _)| m == token) {
            return Some(Word::Marker(s));
        }
        if let Some((_, t)) = self.stems.iter().find(|(s, _)| s == token) {
            return Some(Word::Stem(t));
        }
        self.entities.iter().find(|e| *e == token).map(|e| Word::Entity(e))
    }

    /// Target-language rendering of a source sentence.
    pub fn translate(&self, source: &str) -> Result<String, CorpusError> {
        let mut out: Vec<String> = Vec::new();
        let mut suffix: Option<&str> = None;
        for token in source.split_whitespace() {
            let word = self
                .classify(token)
                .ok_or_else(|| CorpusError::Spec(format!("`{token}` is not a word of this world")))?;
            let (base, inflects) = match word {
                Word::Marker(s) => {
                    suffix = Some(s);
                    continue;
                }
                Word::Digits(d) => (d, false),
                Word::Stem(t) => (t, true),
                Word::Entity(e) => (e, true),
            };
            let mut w = base.to_string();
            if inflects {
                if let Some(s) = suffix {
                    w.push_str(s);
                }
            }
            suffix = None;
            out.push(w);
        }
        Ok(out.join(" "))
    }

    /// Stems that may fill `good_for_meal` and `area`.
    pub fn value_stems(&self) -> &[(String, String)] {
        &self.stems[FUNCTION_WORDS..]
    }

    /// Every realization of each slot value: value stems map to their target
    /// stem and its inflections, entities to themselves and theirs.
    pub fn surface_table(&self) -> SurfaceFormTable {
        let mut table = SurfaceFormTable::new();
        let inflect = |base: &str| {
            std::iter::once(base.to_string())
                .chain(self.markers.iter().map(move |(_, s)| format!("{base}{s}")))
                .collect::<Vec<_>>()
        };
        for (s, t) in self.value_stems() {
            table.insert(s, inflect(t));
        }
        for e in &self.entities {
            table.insert(e, inflect(e));
        }
        table
    }

    /// Source-language sentence realizing `mr`, clause by clause.
    fn template(&self, mr: &MeaningRepresentation) -> String {
        let fw = |i: usize| self.stems[i].0.as_str();
        let marker = |i: usize| self.markers[i].0.as_str();
        let mut parts = Vec::new();
        for (key, value) in mr.slots() {
            let clause = match key.as_str() {
                "name" => format!("{value} {}", fw(0)),
                "good_for_meal" => format!("{} {} {value}", fw(1), marker(0)),
                "area" => format!("{} {} {value}", fw(2), marker(1)),
                "near" => format!("{} {} {value}", fw(3), marker(2)),
                "phone" => format!("{} {value}", fw(4)),
                other => unreachable!("toy MRs have no `{other}` slot"),
            };
            parts.push(clause);
        }
        parts.join(" ")
    }
}

/// Target forms already in use, for collision checks.
#[derive(Default)]
struct Claimed {
    bases: Vec<String>,
    forms: Vec<String>,
}

impl Claimed {
    fn try_claim(&mut self, base: &str, suffixes: &[&str]) -> bool {
        let forms: Vec<String> = std::iter::once(base.to_string())
            .chain(suffixes.iter().map(|s| format!("{base}{s}")))
            .collect();
        let clash = self.forms.iter().any(|f| f.contains(base))
            || self.bases.iter().any(|b| forms.iter().any(|f| f.contains(b.as_str())));
        if clash {
            return false;
        }
        self.bases.push(base.to_string());
        self.forms.extend(forms);
        true
    }
}

fn digits(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
}

/// `n` random sentence pairs. A pure function of `(spec, n)`.
pub fn gen_toy_parallel(spec: &ToyWorldSpec, n: usize) -> Result<ParallelCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let units = rng.random_range(3..=8);
        let mut words: Vec<String> = Vec::new();
        for _ in 0..units {
            let r: f64 = rng.random();
            let stem = |rng: &mut ChaCha8Rng| spec.stems.choose(rng).unwrap().0.clone();
            let entity = |rng: &mut ChaCha8Rng| spec.entities.choose(rng).unwrap().clone();
            if r < 0.55 {
                words.push(stem(&mut rng));
            } else if r < 0.8 {
                words.push(spec.markers.choose(&mut rng).unwrap().0.clone());
                let w = if rng.random_bool(0.6) { stem(&mut rng) } else { entity(&mut rng) };
                words.push(w);
            } else if r < 0.9 {
                words.push(entity(&mut rng));
            } else {
                let len = rng.random_range(1..=6);
                words.push(digits(&mut rng, len));
            }
        }
        let source = words.join(" ");
        let target = spec.translate(&source)?;
        pairs.push((source, target));
    }
    ParallelCorpus::new(pairs, &format!("toy-world seed {}", spec.seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyNlgSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Toy NLG splits with the gold surface-form table.
#[derive(Clone, Debug)]
pub struct ToyNlg {
    pub train: NlgCorpus,
    pub dev: NlgCorpus,
    pub test: NlgCorpus,
    pub surface_forms: SurfaceFormTable,
}

/// The 16 delexicalized patterns are split 12 for train and dev, 4 for
/// test, so test patterns never occur in training.
pub fn gen_toy_nlg(spec: &ToyWorldSpec, sizes: ToyNlgSizes) -> Result<ToyNlg, CorpusError> {
    spec.validate()?;
    let schema = SlotSchema::restaurant();
    let table = spec.surface_table();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);

    let optional = &TOY_SLOTS[1..];
    let mut patterns: Vec<Vec<&str>> = (0u32..1 << optional.len())
        .map(|bits| {
            let mut keys = vec![TOY_SLOTS[0]];
            keys.extend(optional.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, k)| *k));
            keys
        })
        .collect();
    patterns.shuffle(&mut rng);
    let (test_patterns, train_patterns) = patterns.split_at(4);

    let mut make = |pats: &[Vec<&str>], n: usize, split: Split| -> Result<NlgCorpus, CorpusError> {
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let keys = pats.choose(&mut rng).unwrap();
            let name = spec.entities.choose(&mut rng).unwrap().clone();
            let mut values = spec.value_stems().choose_multiple(&mut rng, 2).map(|(s, _)| s.clone());
            let (meal, area) = (values.next().unwrap(), values.next().unwrap());
            let near = loop {
                let e = spec.entities.choose(&mut rng).unwrap();
                if *e != name {
                    break e.clone();
                }
            };
            let phone = digits(&mut rng, 6);
            let mut mr = MeaningRepresentation::new("inform")?;
            for key in keys {
                let value = match *key {
                    "name" => &name,
                    "good_for_meal" => &meal,
                    "area" => &area,
                    "near" => &near,
                    _ => &phone,
                };
                mr = mr.with_slot(key, value)?;
            }
            let reference = spec.translate(&spec.template(&mr))?;
            let delex = delexicalize(&mr, &reference, &table, &schema);
            debug_assert!(delex.unmatched.is_empty());
            examples.push(Example::new(mr, reference, Some(delex.text))?);
        }
        Ok(NlgCorpus { examples, split })
    };
    let train = make(train_patterns, sizes.train, Split::Train)?;
    let dev = make(train_patterns, sizes.dev, Split::Dev)?;
    let test = make(test_patterns, sizes.test, Split::Test)?;
    Ok(ToyNlg {
        train,
        dev,
        test,
        surface_forms: table,
    })
}
