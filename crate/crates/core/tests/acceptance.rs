//! Acceptance suite. Every criterion prints one line
//!
//! `ACCEPTANCE <name> PASS|FAIL <detail>`
//!
//! straight to stdout, so the lines show up even when libtest captures
//! output. The criteria run one after another inside a single test so their
//! wall-clock limits are not distorted by other tests sharing the CPU.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use d2t::corpus::{default_oov_spec, gen_toy_nlg, load_nlg, synth_oov, CorpusError, SampleSize, Split, ToyNlgSizes, ToyWorldSpec};
use d2t::harness::rating::{
    accuracy_verdict, aggregate, pairwise_bucket, AccuracyVote, PairwiseBucket, Preference, RatingRecord, RatingTask,
    RatingValue, TaskPayload,
};
use d2t::harness::{run_low_resource_matrix, ExperimentConfig, MatrixReport, MatrixSpec, MatrixTable, Variant};
use d2t::metrics::{compute_ser, EvalCorpus, Metric};
use d2t::mr::{parse_mr, SlotSchema, SurfaceFormTable};
use d2t::seq2seq::{
    beam_decode, greedy_decode, hypothesis_order, sequence_log_prob, Batch, Hypothesis, IncrementalDecoder,
    Seq2SeqExample, StepScorer, Transformer, TransformerCheckpoint, TransformerConfig,
};
use d2t::subword::{train_subword, SubwordModel, BOS_ID, CONTROL_IDS, EOS_ID, RESERVED};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Metric oracles: textbook definitions, brute force where possible.

fn tok(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let (mut i, mut j) = (0, chars.len());
        while i < j && !chars[i].is_alphanumeric() {
            out.push(chars[i].to_string());
            i += 1;
        }
        let mut tail = Vec::new();
        while j > i && !chars[j - 1].is_alphanumeric() {
            tail.push(chars[j - 1].to_string());
            j -= 1;
        }
        if i < j {
            out.push(chars[i..j].iter().collect());
        }
        out.extend(tail.into_iter().rev());
    }
    out
}

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

fn distinct(list: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

struct Item {
    pred: Vec<String>,
    refs: Vec<Vec<String>>,
}

fn oracle_bleu(items: &[Item]) -> f64 {
    let (mut c, mut r) = (0usize, 0usize);
    let mut logp = 0.0;
    let mut zero = false;
    for n in 1..=4 {
        let (mut hit, mut tot) = (0usize, 0usize);
        for it in items {
            let p = grams(&it.pred, n);
            tot += p.len();
            for g in distinct(&p) {
                let clip = it.refs.iter().map(|rf| count(&grams(rf, n), &g)).max().unwrap();
                hit += count(&p, &g).min(clip);
            }
        }
        if hit == 0 {
            zero = true;
        } else {
            logp += (hit as f64 / tot as f64).ln() / 4.0;
        }
    }
    for it in items {
        c += it.pred.len();
        let mut best = it.refs[0].len();
        for rf in &it.refs {
            let d = rf.len().abs_diff(it.pred.len());
            let bd = best.abs_diff(it.pred.len());
            if d < bd || (d == bd && rf.len() < best) {
                best = rf.len();
            }
        }
        r += best;
    }
    if zero || c == 0 {
        return 0.0;
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * logp.exp()
}

fn oracle_nist(items: &[Item]) -> f64 {
    let all_refs: Vec<&Vec<String>> = items.iter().flat_map(|it| it.refs.iter()).collect();
    let total_words: usize = all_refs.iter().map(|r| r.len()).sum();
    let ref_count = |g: &[String]| -> usize { all_refs.iter().map(|r| count(&grams(r, g.len()), g)).sum() };
    let info = |g: &[String]| -> f64 {
        let c = ref_count(g);
        if c == 0 {
            return 0.0;
        }
        let ctx = if g.len() == 1 { total_words } else { ref_count(&g[..g.len() - 1]) };
        (ctx as f64 / c as f64).log2()
    };
    let mut score = 0.0;
    for n in 1..=5 {
        let (mut w, mut tot) = (0.0, 0usize);
        for it in items {
            let p = grams(&it.pred, n);
            tot += p.len();
            for g in distinct(&p) {
                let clip = it.refs.iter().map(|rf| count(&grams(rf, n), &g)).max().unwrap();
                w += count(&p, &g).min(clip) as f64 * info(&g);
            }
        }
        if tot > 0 {
            score += w / tot as f64;
        }
    }
    let sys: f64 = items.iter().map(|it| it.pred.len() as f64).sum();
    let rl: f64 = items
        .iter()
        .map(|it| it.refs.iter().map(|r| r.len() as f64).sum::<f64>() / it.refs.len() as f64)
        .sum();
    let ratio = (sys / rl).min(1.0);
    let beta = 0.5f64.ln() / 1.5f64.ln().powi(2);
    score * (beta * ratio.ln().powi(2)).exp()
}

/// Longest common subsequence by trying every subset of the prediction.
fn lcs_brute(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        let mut it = b.iter();
        if sub.iter().all(|w| it.any(|x| x == *w)) {
            best = k;
        }
    }
    best
}

fn oracle_rouge(items: &[Item]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    items
        .iter()
        .map(|it| {
            it.refs
                .iter()
                .map(|rf| {
                    let l = lcs_brute(&it.pred, rf) as f64;
                    if l == 0.0 {
                        return 0.0;
                    }
                    let (p, r) = (l / it.pred.len() as f64, l / rf.len() as f64);
                    (1.0 + beta2) * p * r / (r + beta2 * p)
                })
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / items.len() as f64
}

fn oracle_cider(items: &[Item]) -> f64 {
    let n_items = items.len() as f64;
    let df = |g: &[String]| -> usize {
        items
            .iter()
            .filter(|it| it.refs.iter().any(|r| count(&grams(r, g.len()), g) > 0))
            .count()
    };
    let vec_of = |t: &[String], n: usize| -> Vec<(Vec<String>, f64)> {
        let gs = grams(t, n);
        distinct(&gs)
            .into_iter()
            .map(|g| {
                let w = count(&gs, &g) as f64 * (n_items.ln() - (df(&g).max(1) as f64).ln());
                (g, w)
            })
            .collect()
    };
    let cos = |a: &[(Vec<String>, f64)], b: &[(Vec<String>, f64)]| -> f64 {
        let na = a.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = a
            .iter()
            .map(|(g, x)| b.iter().find(|(h, _)| h == g).map_or(0.0, |(_, y)| x * y))
            .sum();
        dot / (na * nb)
    };
    let mut total = 0.0;
    for it in items {
        let mut s = 0.0;
        for n in 1..=4 {
            let pv = vec_of(&it.pred, n);
            s += it.refs.iter().map(|r| cos(&pv, &vec_of(r, n))).sum::<f64>() / it.refs.len() as f64;
        }
        total += s / 4.0;
    }
    10.0 * total / n_items
}

/// Every maximal exact alignment, enumerated; fewest chunks wins.
fn meteor_align_brute(p: &[String], r: &[String]) -> (usize, usize) {
    fn rec(p: &[String], r: &[String], i: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == p.len() {
            let m = cur.len();
            let chunks = if m == 0 {
                0
            } else {
                1 + cur.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
            };
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        for j in 0..r.len() {
            if !used[j] && r[j] == p[i] {
                used[j] = true;
                cur.push((i, j));
                rec(p, r, i + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
        rec(p, r, i + 1, used, cur, best);
    }
    let mut best = (0, usize::MAX);
    rec(p, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    best
}

fn oracle_meteor(items: &[Item]) -> f64 {
    items
        .iter()
        .map(|it| {
            it.refs
                .iter()
                .map(|rf| {
                    let (m, ch) = meteor_align_brute(&it.pred, rf);
                    if m == 0 {
                        return 0.0;
                    }
                    let m = m as f64;
                    let (p, r) = (m / it.pred.len() as f64, m / rf.len() as f64);
                    let f = p * r / (0.9 * p + 0.1 * r);
                    f * (1.0 - 0.5 * (ch as f64 / m).powi(3))
                })
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / items.len() as f64
}

const METRIC_FIXTURE: [(&str, &[&str]); 20] = [
    ("Ferdinanda je v Karlíně.", &["Ferdinanda je v Karlíně.", "Ferdinanda najdete v Karlíně."]),
    ("Restaurace Švejk podává českou kuchyni .", &["Švejk podává českou kuchyni.", "V restauraci Švejk vaří česky."]),
    ("U Fleků je poblíž Anděla a je levná.", &["U Fleků je levná restaurace poblíž Anděla."]),
    ("Kolkovna má telefon 224 819 701 .", &["Telefon do Kolkovny je 224 819 701.", "Kolkovna má telefon 224 819 701."]),
    ("Lokál je drahý, lokál je drahý.", &["Lokál je drahý.", "Lokál patří k drahým podnikům."]),
    ("Našel jsem 3 restaurace na Smíchově .", &["Na Smíchově jsem našel 3 restaurace.", "Jsou 3 restaurace na Smíchově."]),
    ("Bohužel nemám žádnou restauraci v Libni.", &["Bohužel nemám žádnou restauraci v Libni."]),
    ("Eska nabízí snídaně", &["Eska je vhodná na snídani.", "V Esce podávají snídaně."]),
    ("(Mlejnice) je v Praze!", &["Mlejnice je v Praze.", "Mlejnice se nachází v Praze."]),
    ("Café Savoy je na Malé Straně a je drahé .", &["Café Savoy je drahá kavárna na Malé Straně."]),
    ("Kantýna je vedle Florence, Kantýna je dobrá.", &["Kantýna je dobrá a je vedle Florence."]),
    ("a a a b b", &["a b a b a", "b b a"]),
    ("Zlatá studně", &["Zlatá studně je drahá restaurace.", "Zlatá studně"]),
    ("Sansho podává japonskou kuchyni na Starém Městě.", &["Na Starém Městě je Sansho s japonskou kuchyní."]),
    ("Výtopna je v Holešovicích .", &["Výtopna se nachází v Holešovicích.", "Výtopna je na Václavském náměstí."]),
    ("Mincovna je blízko Obecního domu", &["Mincovna je blízko Obecního domu.", "Mincovna je u Obecního domu."]),
    ("Pastva je vegetariánská , levná , a dobrá .", &["Pastva je levná vegetariánská restaurace."]),
    ("Dish — burgery — Vinohrady", &["Dish na Vinohradech dělá burgery."]),
    ("Čestr je steakhouse.", &["Čestr je steakhouse.", "Čestr je steakhouse."]),
    ("nic", &["Bredovský dvůr je v Karlíně."]),
];

fn crit_metrics() -> Outcome {
    let t0 = Instant::now();
    let items: Vec<Item> = METRIC_FIXTURE
        .iter()
        .map(|(p, refs)| Item {
            pred: tok(p),
            refs: refs.iter().map(|r| tok(r)).collect(),
        })
        .collect();
    let corpus = EvalCorpus::new(METRIC_FIXTURE.iter().map(|(p, r)| (*p, r.to_vec()))).map_err(|e| e.to_string())?;
    for (it, lib) in items.iter().zip(corpus.items()) {
        ensure(it.pred == lib.prediction && it.refs == lib.references, || format!("tokenization differs: {:?}", lib.prediction))?;
    }
    let oracles: [(Metric, f64); 5] = [
        (Metric::Bleu, oracle_bleu(&items)),
        (Metric::Nist, oracle_nist(&items)),
        (Metric::RougeL, oracle_rouge(&items)),
        (Metric::Cider, oracle_cider(&items)),
        (Metric::MeteorLite, oracle_meteor(&items)),
    ];
    let mut detail = Vec::new();
    for (m, want) in oracles {
        let got = m.compute(&corpus).value;
        ensure(rel_close(got, want, 1e-9), || format!("{m:?}: {got} vs oracle {want}"))?;
        detail.push(format!("{}={got:.4}", m.compute(&corpus).name));
    }
    let identity = EvalCorpus::new(METRIC_FIXTURE.iter().map(|(_, r)| (r[0], r.to_vec()))).map_err(|e| e.to_string())?;
    let b = Metric::Bleu.compute(&identity).value;
    ensure(b == 100.0, || format!("identity BLEU {b}"))?;
    let el = t0.elapsed();
    within(el, Duration::from_secs(1))?;
    Ok(format!("{} identity_bleu=100 ({el:.2?})", detail.join(" ")))
}

// ---------------------------------------------------------------------------
// SER against an exhaustive substring scan.

const SER_WORDS: [&str; 16] = [
    "karlín", "karlíně", "smíchov", "smíchově", "u", "fleků", "levná", "levné", "česká", "českou", "kuchyně", "poblíž",
    "anděla", "anděl", "je", "restaurace",
];
const SER_KEYS: [&str; 6] = ["name", "area", "near", "food", "price_range", "address"];

fn oracle_norm(s: &str) -> Vec<char> {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase().chars().collect()
}

fn scan_contains(hay: &[char], needle: &[char]) -> bool {
    if needle.is_empty() {
        return true;
    }
    for start in 0..hay.len() {
        for end in start..=hay.len() {
            if hay[start..end] == *needle {
                return true;
            }
        }
    }
    false
}

fn random_value(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=2);
    (0..n).map(|_| *SER_WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n)
        .map(|_| {
            let w = *SER_WORDS.choose(rng).unwrap();
            if rng.random_bool(0.2) {
                let mut c = w.chars();
                let first = c.next().unwrap().to_uppercase().collect::<String>();
                first + c.as_str()
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(if rng.random_bool(0.1) { "  \t" } else { " " })
}

struct SerOracle {
    examples: usize,
    incorrect: usize,
    per_slot: BTreeMap<String, (BTreeSet<String>, usize, usize)>,
}

fn ser_oracle(cases: &[(Vec<(String, String)>, String)], forms: &BTreeMap<String, Vec<String>>) -> SerOracle {
    let mut o = SerOracle {
        examples: 0,
        incorrect: 0,
        per_slot: BTreeMap::new(),
    };
    for (slots, text) in cases {
        o.examples += 1;
        let hay = oracle_norm(text);
        let mut bad = false;
        for (k, v) in slots {
            if k == "kids_allowed" {
                continue;
            }
            let mut candidates = vec![v.clone()];
            candidates.extend(forms.get(&v.to_lowercase()).cloned().unwrap_or_default());
            let hit = candidates.iter().any(|f| scan_contains(&hay, &oracle_norm(f)));
            let e = o.per_slot.entry(k.clone()).or_default();
            e.0.insert(v.clone());
            e.1 += 1;
            if !hit {
                e.2 += 1;
                bad = true;
            }
        }
        o.incorrect += bad as usize;
    }
    o
}

fn crit_ser() -> Outcome {
    let t0 = Instant::now();
    let schema = SlotSchema::restaurant();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cases_done, mut errors_seen) = (0usize, 0usize);
    for _batch in 0..10 {
        // one surface-form table per batch of 100 cases
        let mut forms: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut table = SurfaceFormTable::new();
        for _ in 0..rng.random_range(0..6) {
            let value = random_value(&mut rng);
            let fs: Vec<String> = (0..rng.random_range(1..3)).map(|_| random_phrase(&mut rng, 2)).collect();
            table.insert(&value, fs.iter().map(String::as_str));
            forms.entry(value.clone()).or_default().extend(fs);
        }
        let mut cases = Vec::new();
        for _ in 0..100 {
            let mut keys = SER_KEYS.to_vec();
            let n = rng.random_range(1..=4);
            let mut slots = Vec::new();
            for _ in 0..n {
                let i = rng.random_range(0..keys.len());
                let key = keys.remove(i);
                let value = match forms.keys().collect::<Vec<_>>().choose(&mut rng) {
                    Some(v) if rng.random_bool(0.3) => (*v).clone(),
                    _ => random_value(&mut rng),
                };
                slots.push((key.to_string(), value));
            }
            // noise with some values, or forms of them, mixed in
            let mut parts = vec![random_phrase(&mut rng, 4)];
            for (_, v) in &slots {
                if rng.random_bool(0.8) {
                    let shown = match forms.get(&v.to_lowercase()) {
                        Some(fs) if rng.random_bool(0.5) => fs.choose(&mut rng).unwrap().clone(),
                        _ => v.to_uppercase(),
                    };
                    parts.push(shown);
                    parts.push(random_phrase(&mut rng, 3));
                }
            }
            let text = parts.join(" ");
            cases.push((slots, text));
        }
        let mrs: Vec<_> = cases
            .iter()
            .map(|(slots, _)| {
                let body: Vec<String> = slots.iter().map(|(k, v)| format!("{k}={v}")).collect();
                parse_mr(&format!("inform({})", body.join(",")), &schema)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let report = compute_ser(mrs.iter().zip(&cases).map(|(m, (_, t))| (m, t.as_str())), &table, &schema);
        let want = ser_oracle(&cases, &forms);
        ensure(report.examples == want.examples, || "example count".into())?;
        ensure(report.incorrect_examples == want.incorrect, || {
            format!("incorrect {} vs oracle {}", report.incorrect_examples, want.incorrect)
        })?;
        ensure(rel_close(report.example_error_rate, want.incorrect as f64 / want.examples as f64, 1e-12), || "rate".into())?;
        ensure(report.per_slot.len() == want.per_slot.len(), || "slot keys".into())?;
        for (k, tally) in &report.per_slot {
            let (vals, total, errs) = &want.per_slot[k.as_str()];
            ensure(tally.unique == vals.len() && tally.total == *total && tally.errors == *errs, || {
                format!("slot {k}: {tally:?} vs oracle ({}, {total}, {errs})", vals.len())
            })?;
        }
        // per case as well
        for (m, (slots, text)) in mrs.iter().zip(&cases) {
            let one = compute_ser([(m, text.as_str())], &table, &schema);
            let o = ser_oracle(&[(slots.clone(), text.clone())], &forms);
            ensure(one.incorrect_examples == o.incorrect, || format!("case {m} / {text:?}"))?;
        }
        // kids_allowed never counts
        let with_kids: Vec<_> = cases
            .iter()
            .map(|(slots, _)| {
                let mut body: Vec<String> = slots.iter().map(|(k, v)| format!("{k}={v}")).collect();
                body.push(format!("kids_allowed={}", if rng.random_bool(0.5) { "yes" } else { "no" }));
                parse_mr(&format!("inform({})", body.join(",")), &schema)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let kids = compute_ser(with_kids.iter().zip(&cases).map(|(m, (_, t))| (m, t.as_str())), &table, &schema);
        ensure(kids == report, || "adding kids_allowed changed the report".into())?;
        cases_done += cases.len();
        errors_seen += report.incorrect_examples;
    }
    let el = t0.elapsed();
    within(el, Duration::from_secs(5))?;
    Ok(format!("{cases_done} cases, {errors_seen} with errors, kids_allowed inert ({el:.2?})"))
}

// ---------------------------------------------------------------------------

fn random_utf8(rng: &mut ChaCha8Rng) -> String {
    const POOL: &str = "aábcčdďeéěfghiíjklmnňoópqrřsštťuúůvwxyýzžAÁČĎÉĚÍŇÓŘŠŤÚŮÝŽ0123456789 .,;:!?()-–\"'\t\n";
    let pool: Vec<char> = POOL.chars().collect();
    let len = rng.random_range(0..80);
    (0..len)
        .map(|_| match rng.random_range(0..10) {
            0 => loop {
                if let Some(c) = char::from_u32(rng.random_range(0..0x11_0000)) {
                    break c;
                }
            },
            1 => ['\u{301}', '\u{30C}', '😀', '€', 'ß', 'ø'][rng.random_range(0..6)],
            _ => *pool.choose(rng).unwrap(),
        })
        .collect()
}

fn crit_tokenizer() -> Outcome {
    let t0 = Instant::now();
    let schema = SlotSchema::restaurant();
    let train = load_nlg(concat!(env!("CARGO_MANIFEST_DIR"), "/data/desk/train.jsonl"), &schema, Split::Train)
        .map_err(|e| e.to_string())?;
    let target = 600;
    let tok = train_subword(train.examples.iter().map(|e| e.reference.as_str()), target).map_err(|e| e.to_string())?;
    ensure(tok.vocab_size() <= target, || format!("vocab {} > {target}", tok.vocab_size()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut total_ids = 0;
    for i in 0..10_000 {
        let s = random_utf8(&mut rng);
        let ids = tok.encode(&s);
        total_ids += ids.len();
        let back = tok.decode(&ids).map_err(|e| e.to_string())?;
        ensure(back == s, || format!("string {i} {s:?} decoded as {back:?}"))?;
    }
    for &id in &CONTROL_IDS {
        let name = RESERVED[id as usize];
        ensure(SubwordModel::reserved_id(name) == Some(id), || format!("{name} id"))?;
        let alone = tok.encode(name);
        ensure(alone.ids() == [id], || format!("{name} -> {:?}", alone.ids()))?;
        let inside = tok.encode(&format!("dobrý {name} den"));
        ensure(inside.ids().iter().filter(|&&x| x == id).count() == 1, || format!("{name} inside text"))?;
    }
    let el = t0.elapsed();
    within(el, Duration::from_secs(10))?;
    Ok(format!(
        "10000 strings round-trip ({total_ids} ids), {} control tokens single, vocab {} <= {target} ({el:.2?})",
        CONTROL_IDS.len(),
        tok.vocab_size()
    ))
}

// ---------------------------------------------------------------------------

fn tiny_cfg(vocab: usize, tie: bool) -> TransformerConfig {
    TransformerConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        dropout: 0.0,
        max_len: 16,
        vocab_size: vocab,
        label_smoothing: 0.1,
        tie_embeddings: tie,
    }
}

fn random_examples(rng: &mut ChaCha8Rng, vocab: u32, n: usize, max: usize) -> Vec<Seq2SeqExample> {
    (0..n)
        .map(|_| {
            let ls = rng.random_range(1..=max);
            let lt = rng.random_range(1..=max);
            Seq2SeqExample::new(
                (0..ls).map(|_| rng.random_range(8..vocab)).collect(),
                (0..lt).map(|_| rng.random_range(8..vocab)).collect(),
            )
        })
        .collect()
}

fn crit_numerics() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for tie in [true, false] {
        let model: Transformer<f64> = Transformer::new(tiny_cfg(20, tie), &mut rng).map_err(|e| e.to_string())?;
        let batch = Batch::new(&random_examples(&mut rng, 20, 3, 5));
        let (_, grad) = model.loss_and_grad(&batch, None).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for _ in 0..25 {
            let i = rng.random_range(0..model.num_params());
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let lp = plus.forward_loss(&batch).map_err(|e| e.to_string())?.loss;
            let lm = minus.forward_loss(&batch).map_err(|e| e.to_string())?.loss;
            let num = (lp - lm) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-7);
            worst = worst.max(rel);
            coords += 1;
        }
    }
    ensure(worst < 1e-3, || format!("finite-difference rel err {worst:e}"))?;

    let mut init_dev: f64 = 0.0;
    for vocab in [300usize, 1000, 4000] {
        let mut cfg = TransformerConfig::desk(vocab);
        cfg.label_smoothing = 0.0;
        let model: Transformer<f32> = Transformer::new(cfg, &mut rng).map_err(|e| e.to_string())?;
        let loss = model
            .forward_loss(&Batch::new(&random_examples(&mut rng, vocab as u32, 8, 12)))
            .map_err(|e| e.to_string())?
            .loss as f64;
        let dev = (loss / (vocab as f64).ln() - 1.0).abs();
        ensure(dev < 0.05, || format!("V={vocab}: init loss {loss:.3} vs ln V {:.3}", (vocab as f64).ln()))?;
        init_dev = init_dev.max(dev);
    }

    // changing target token t leaves decoder positions 0..=t untouched
    let model: Transformer<f64> = Transformer::new(tiny_cfg(30, true), &mut rng).map_err(|e| e.to_string())?;
    let src = vec![9, 10, 11];
    let tgt = vec![12, 13, 14, 15, 16];
    let base = model
        .forward_loss(&Batch::new(&[Seq2SeqExample::new(src.clone(), tgt.clone())]))
        .map_err(|e| e.to_string())?;
    for t in 0..tgt.len() {
        let mut changed = tgt.clone();
        changed[t] = 20;
        let out = model
            .forward_loss(&Batch::new(&[Seq2SeqExample::new(src.clone(), changed)]))
            .map_err(|e| e.to_string())?;
        for pos in 0..=t {
            ensure(out.logits.row(0, pos) == base.logits.row(0, pos), || format!("position {pos} sees token {t}"))?;
        }
        ensure(out.logits.row(0, t + 1) != base.logits.row(0, t + 1), || "change not visible downstream".into())?;
    }

    let model32: Transformer<f32> = Transformer::new(tiny_cfg(30, true), &mut rng).map_err(|e| e.to_string())?;
    let batch = Batch::new(&random_examples(&mut rng, 30, 4, 6));
    for (es, et) in [(1, 0), (0, 1), (3, 2)] {
        let a = model32.forward_loss(&batch).map_err(|e| e.to_string())?.loss;
        let b = model32.forward_loss(&batch.padded(es, et)).map_err(|e| e.to_string())?.loss;
        ensure(a.to_bits() == b.to_bits(), || format!("padding ({es},{et}) changed loss {a} -> {b}"))?;
    }

    let desk: Transformer<f32> = Transformer::new(TransformerConfig::desk(300), &mut rng).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    let ck = TransformerCheckpoint::new(desk, "fp", "init");
    ck.save(&path).map_err(|e| e.to_string())?;
    let back = TransformerCheckpoint::load_matching(&path, ck.config(), "fp").map_err(|e| e.to_string())?;
    let bits = |m: &Transformer<f32>| m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&back.model) == bits(&ck.model), || "parameters changed".into())?;
    ensure(back.to_bytes() == ck.to_bytes(), || "re-serialization differs".into())?;
    let b = Batch::new(&random_examples(&mut rng, 300, 3, 8));
    let (l1, l2) = (
        ck.model.forward_loss(&b).map_err(|e| e.to_string())?.loss,
        back.model.forward_loss(&b).map_err(|e| e.to_string())?.loss,
    );
    ensure(l1.to_bits() == l2.to_bits(), || "loss after reload differs".into())?;

    let el = t0.elapsed();
    within(el, Duration::from_secs(30))?;
    Ok(format!(
        "fd {coords} coords max rel {worst:.1e}, init loss within {:.2}% of ln V, causal+padding ok, checkpoint bit-stable ({el:.2?})",
        100.0 * init_dev
    ))
}

// ---------------------------------------------------------------------------

fn exhaustive_best<S: StepScorer>(scorer: &S, max_len: usize) -> Hypothesis {
    let allowed: Vec<u32> = (0..scorer.vocab_size() as u32).filter(|&t| t != 0 && t != BOS_ID).collect();
    let mut best: Option<Hypothesis> = None;
    let mut frontier: Vec<Vec<u32>> = vec![vec![]];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for &t in &allowed {
                let mut seq = prefix.clone();
                seq.push(t);
                if t == EOS_ID || len == max_len {
                    let h = Hypothesis {
                        log_prob: sequence_log_prob(scorer, &seq),
                        finished: t == EOS_ID,
                        tokens: seq,
                    };
                    if best.as_ref().is_none_or(|b| hypothesis_order(&h, b).is_gt()) {
                        best = Some(h);
                    }
                } else {
                    next.push(seq);
                }
            }
        }
        frontier = next;
    }
    best.expect("at least one sequence")
}

fn crit_decoding() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let model: Transformer<f32> = Transformer::new(TransformerConfig::desk(60), &mut rng).map_err(|e| e.to_string())?;
    for i in 0..50 {
        let src: Vec<u32> = (0..rng.random_range(1..10)).map(|_| rng.random_range(8..60)).collect();
        let dec = IncrementalDecoder::new(&model, &src);
        let g = greedy_decode(&dec, 20);
        let b = beam_decode(&dec, 1, 20);
        ensure(g.tokens == b.tokens && g.finished == b.finished, || format!("input {i}: greedy {:?} beam {:?}", g.tokens, b.tokens))?;
        ensure((g.log_prob - b.log_prob).abs() < 1e-9, || format!("input {i}: log prob"))?;
    }

    let (mut cases, mut small_beam_hits) = (0, 0);
    for seed in 0..5u64 {
        let mut mrng = ChaCha8Rng::seed_from_u64(100 + seed);
        let vocab = 10;
        let mut cfg = tiny_cfg(vocab, true);
        cfg.label_smoothing = 0.0;
        let mut model: Transformer<f64> = Transformer::new(cfg, &mut mrng).map_err(|e| e.to_string())?;
        let emb = model.layout().specs()[0].range.clone();
        for x in &mut model.params_mut()[emb] {
            *x *= 4.0;
        }
        for max_len in [2usize, 3, 4] {
            for _ in 0..4 {
                let src: Vec<u32> = (0..mrng.random_range(1..5)).map(|_| mrng.random_range(3..vocab as u32)).collect();
                let dec = IncrementalDecoder::new(&model, &src);
                let oracle = exhaustive_best(&dec, max_len);
                // wide enough to keep every live prefix
                let width = (vocab - 2).pow(max_len as u32 - 1);
                let got = beam_decode(&dec, width, max_len);
                ensure(got.tokens == oracle.tokens && (got.score() - oracle.score()).abs() < 1e-12, || {
                    format!("max_len {max_len}: beam {:?} vs exhaustive {:?}", got.tokens, oracle.tokens)
                })?;
                small_beam_hits += (beam_decode(&dec, 4, max_len).tokens == oracle.tokens) as usize;
                cases += 1;
            }
        }
    }
    let el = t0.elapsed();
    within(el, Duration::from_secs(30))?;
    Ok(format!(
        "beam1==greedy on 50 inputs, exhaustive optimum matched on {cases}/{cases} (beam 4 alone: {small_beam_hits}) ({el:.2?})"
    ))
}

// ---------------------------------------------------------------------------

fn crit_oov() -> Outcome {
    let t0 = Instant::now();
    let schema = SlotSchema::restaurant();
    let desk = load_nlg(concat!(env!("CARGO_MANIFEST_DIR"), "/data/desk/train.jsonl"), &schema, Split::Train)
        .map_err(|e| e.to_string())?;
    let toy = gen_toy_nlg(&ToyWorldSpec::desk(1), ToyNlgSizes { train: 2000, dev: 0, test: 0 }).map_err(|e| e.to_string())?;
    let mut detail = String::new();
    for (label, train) in [("desk", &desk), ("toy", &toy.train)] {
        let spec = default_oov_spec(7);
        ensure(spec.templates.len() == 10 && spec.per_template == 10, || "fixture is not 10 x 10".into())?;
        let a = synth_oov(&spec, train, &schema).map_err(|e| e.to_string())?;
        let b = synth_oov(&default_oov_spec(7), train, &schema).map_err(|e| e.to_string())?;
        ensure(a.corpus.len() == 100, || format!("{} MRs", a.corpus.len()))?;
        ensure(a.corpus == b.corpus && a.stats == b.stats, || "not deterministic".into())?;
        let seen: BTreeSet<String> = train
            .examples
            .iter()
            .flat_map(|e| e.mr.slots().iter().map(|(_, v)| d2t::mr::normalize(v)))
            .collect();
        let overlap = a
            .corpus
            .examples
            .iter()
            .flat_map(|e| e.mr.slots().iter())
            .filter(|(_, v)| seen.contains(&d2t::mr::normalize(v)))
            .count();
        ensure(overlap == 0, || format!("{overlap} values seen in {label} training"))?;
        detail += &format!("{label}: 100 MRs, {} slots, {} unique, overlap 0; ", a.stats.slots, a.stats.unique_values);
    }
    let mut spec = default_oov_spec(7);
    let leaked = desk.examples[0].mr.slots()[0].1.clone();
    spec.pools.get_mut("name").unwrap().push(leaked);
    ensure(matches!(synth_oov(&spec, &desk, &schema), Err(CorpusError::OovOverlap(_))), || "overlap not rejected".into())?;
    let el = t0.elapsed();
    within(el, Duration::from_secs(1))?;
    Ok(format!("{detail}leak rejected ({el:.2?})"))
}

// ---------------------------------------------------------------------------

fn task(id: usize, payload: TaskPayload, system_first: Option<bool>) -> RatingTask {
    RatingTask {
        id: format!("t{id:05}"),
        payload,
        example: id,
        system: "sys".into(),
        system_first,
    }
}

fn records(t: &RatingTask, values: &[RatingValue]) -> Vec<RatingRecord> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| RatingRecord {
            task_id: t.id.clone(),
            rater: format!("r{i}"),
            value: *v,
        })
        .collect()
}

fn crit_aggregation() -> Outcome {
    use AccuracyVote::{Accurate, Inaccurate};
    // binary: 8 cases
    let mut binary = 0;
    for mask in 0u8..8 {
        let votes: Vec<AccuracyVote> = (0..3).map(|i| if mask >> i & 1 == 1 { Accurate } else { Inaccurate }).collect();
        let want = mask.count_ones() >= 2;
        ensure(accuracy_verdict(&votes) == want, || format!("{votes:?}"))?;
        let t = task(1, TaskPayload::Accuracy { gold: "g".into(), predicted: "p".into() }, None);
        let vals: Vec<RatingValue> = votes.iter().map(|v| RatingValue::Accuracy(*v)).collect();
        let rep = aggregate(std::slice::from_ref(&t), &records(&t, &vals));
        ensure(rep.accuracy == Some(if want { 100.0 } else { 0.0 }), || format!("{votes:?}: {:?}", rep.accuracy))?;
        binary += 1;
    }

    // 7 levels: 343 cases, both presentation orders
    let mut seven = 0;
    let mut tasks = Vec::new();
    let mut recs = Vec::new();
    let mut expected: BTreeMap<&'static str, usize> = BTreeMap::new();
    for a in Preference::ALL {
        for b in Preference::ALL {
            for c in Preference::ALL {
                let votes = [a, b, c];
                let want = if a == b || a == c {
                    PairwiseBucket::Level(a)
                } else if b == c {
                    PairwiseBucket::Level(b)
                } else {
                    PairwiseBucket::NoMajority
                };
                ensure(pairwise_bucket(&votes) == want, || format!("{votes:?}"))?;
                for system_first in [true, false] {
                    let t = task(tasks.len(), TaskPayload::Pairwise { first: "x".into(), second: "y".into() }, Some(system_first));
                    recs.extend(records(&t, &votes.map(RatingValue::Pairwise)));
                    // votes compare first against second; the report is from the system's side
                    let flipped = match want {
                        PairwiseBucket::Level(p) if !system_first => PairwiseBucket::Level(p.flipped()),
                        w => w,
                    };
                    *expected.entry(flipped.label()).or_default() += 1;
                    tasks.push(t);
                }
                seven += 1;
            }
        }
    }
    let rep = aggregate(&tasks, &recs);
    ensure(rep.pairwise_tasks == 686, || format!("{} pairwise tasks", rep.pairwise_tasks))?;
    for bucket in PairwiseBucket::all() {
        let got = rep.pairwise.get(bucket.label()).copied().unwrap_or(0.0);
        let want = 100.0 * *expected.get(bucket.label()).unwrap_or(&0) as f64 / 686.0;
        ensure(rel_close(got, want, 1e-12) || got == want, || format!("{}: {got} vs {want}", bucket.label()))?;
    }

    // fluency: the mean of every rating, incomplete tasks left out
    let mut tasks = Vec::new();
    let mut recs = Vec::new();
    let (mut sum, mut n) = (0u32, 0u32);
    for x in 1..=5u8 {
        for y in 1..=5u8 {
            for z in 1..=5u8 {
                let t = task(tasks.len(), TaskPayload::Fluency { predicted: "p".into() }, None);
                recs.extend(records(&t, &[x, y, z].map(RatingValue::Fluency)));
                sum += (x + y + z) as u32;
                n += 3;
                tasks.push(t);
            }
        }
    }
    let partial = task(tasks.len(), TaskPayload::Fluency { predicted: "p".into() }, None);
    recs.extend(records(&partial, &[RatingValue::Fluency(1), RatingValue::Fluency(1)]));
    tasks.push(partial);
    let rep = aggregate(&tasks, &recs);
    let want = sum as f64 / n as f64;
    ensure(rep.fluency == Some(want) && rep.incomplete_tasks == 1, || format!("fluency {:?} vs {want}", rep.fluency))?;
    Ok(format!("binary {binary}/8, seven-level {seven}/343 (x2 orders), fluency mean over {n} ratings"))
}

// ---------------------------------------------------------------------------
// Desk-scale experiments on the toy world.

fn transfer_and_monotonicity() -> (Outcome, Outcome) {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let seeds = vec![1, 2, 3];
    let t0 = Instant::now();
    let spec = MatrixSpec {
        variants: vec![Variant::Scratch, Variant::Binmt],
        nlg_sizes: vec![SampleSize::Count(500)],
        parallel_fracs: vec![],
        seeds: seeds.clone(),
    };
    let transfer = run_low_resource_matrix(&ExperimentConfig::toy(Variant::Binmt, 1), &spec, dir.path())
        .map_err(|e| e.to_string())
        .and_then(|rep| {
            let el = t0.elapsed();
            let row = |v| rep.row(MatrixTable::Nlg, v, SampleSize::Count(500), 1.0).expect("row").clone();
            let (scratch, binmt) = (row(Variant::Scratch), row(Variant::Binmt));
            let per_seed: Vec<String> = seeds
                .iter()
                .enumerate()
                .map(|(i, s)| format!("s{s}: scratch {:.1} binmt {:.1}", scratch.ser[i], binmt.ser[i]))
                .collect();
            let detail = format!(
                "SER% {}; mean gap {:.1} points ({el:.0?})",
                per_seed.join(", "),
                scratch.mean_ser - binmt.mean_ser
            );
            ensure(scratch.ser.iter().zip(&binmt.ser).all(|(s, b)| b < s), || detail.clone())?;
            ensure(el < Duration::from_secs(30 * 60), || format!("{detail}; over 30 min"))?;
            Ok(detail)
        });

    // pre-trained checkpoints are cached in the same directory
    let t1 = Instant::now();
    let spec = MatrixSpec {
        variants: vec![Variant::Binmt],
        nlg_sizes: vec![SampleSize::Count(100), SampleSize::Count(1000), SampleSize::Fraction(1.0)],
        parallel_fracs: vec![],
        seeds,
    };
    let mono = run_low_resource_matrix(&ExperimentConfig::toy(Variant::Binmt, 1), &spec, dir.path())
        .map_err(|e| e.to_string())
        .and_then(|rep: MatrixReport| {
            let rows: Vec<_> = spec
                .nlg_sizes
                .iter()
                .map(|&n| rep.row(MatrixTable::Nlg, Variant::Binmt, n, 1.0).expect("row").clone())
                .collect();
            let detail = rows
                .iter()
                .map(|r| format!("n={} mean {:.2} {:?}", r.train_examples, r.mean_ser, r.ser.iter().map(|x| (x * 10.0).round() / 10.0).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
                .join("; ");
            let detail = format!("SER% {detail} ({:.0?})", t1.elapsed());
            ensure(rows[0].mean_ser >= rows[1].mean_ser && rows[1].mean_ser >= rows[2].mean_ser, || detail.clone())?;
            Ok(detail)
        });
    (transfer, mono)
}

// ---------------------------------------------------------------------------

fn report(name: &str, outcome: &Outcome) {
    let line = match outcome {
        Ok(d) => format!("ACCEPTANCE {name} PASS {d}\n"),
        Err(d) => format!("ACCEPTANCE {name} FAIL {d}\n"),
    };
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: fn() -> Outcome| {
        let o = f();
        report(name, &o);
        results.push((name, o));
    };
    run("metric_oracles", crit_metrics);
    run("ser_oracle", crit_ser);
    run("tokenizer", crit_tokenizer);
    run("transformer_numerics", crit_numerics);
    run("decoding", crit_decoding);
    run("oov_synthesizer", crit_oov);
    run("aggregation_truth_tables", crit_aggregation);
    let (transfer, mono) = transfer_and_monotonicity();
    report("transfer_experiment", &transfer);
    report("low_data_monotonicity", &mono);
    results.push(("transfer_experiment", transfer));
    results.push(("low_data_monotonicity", mono));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| o.is_err()).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
