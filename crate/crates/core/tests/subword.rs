use d2t::subword::{train_subword, SubwordModel, BYTE_BASE, GENERATE_ID, MIN_TARGET_SIZE, TO_CS_ID};
use proptest::prelude::*;
use std::sync::OnceLock;

const CORPUS: [&str; 6] = [
    "Restaurace Ferdinanda se nachází v Karlíně a podává českou kuchyni .",
    "Švejk je levná hospoda poblíž Anděla .",
    "Příliš žluťoučký kůň úpěl ďábelské ódy .",
    "[GENERATE] <2cs> inform name = Kolkovna area = Žižkov",
    "The restaurant is near the castle .",
    "[TRANSLATE] <2en> Dobrý den , jak se máte ?",
];

fn model() -> &'static SubwordModel {
    static M: OnceLock<SubwordModel> = OnceLock::new();
    M.get_or_init(|| train_subword(CORPUS.iter().cycle().take(60), 400).unwrap())
}

fn czech_text() -> impl Strategy<Value = String> {
    let alphabet: Vec<char> = "abcdeěščřžýáíéúůťďňó ,.?ABČŠŘŽ0123456789\t€😀".chars().collect();
    prop::collection::vec(prop::sample::select(alphabet), 0..60).prop_map(|c| c.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_inverts_encode(text in czech_text()) {
        let m = model();
        prop_assert_eq!(m.decode(&m.encode(&text)).unwrap(), text);
    }

    #[test]
    fn arbitrary_unicode_round_trips(text in "\\PC{0,40}") {
        let m = model();
        let ids = m.encode(&text);
        prop_assert!(ids.ids().iter().all(|&id| (id as usize) < m.vocab_size()));
        prop_assert_eq!(m.decode(&ids).unwrap(), text);
    }

    #[test]
    fn control_tokens_stay_whole(prefix in "[a-zá ]{0,10}", suffix in "[a-zá ]{0,10}") {
        let m = model();
        let text = format!("{prefix} [GENERATE] <2cs> {suffix}");
        let ids = m.encode(&text);
        prop_assert!(ids.ids().windows(2).any(|w| w == [GENERATE_ID, TO_CS_ID]));
        prop_assert_eq!(m.decode(&ids).unwrap(), text);
    }
}

#[test]
fn vocabulary_respects_target_and_merges_help() {
    let m = model();
    assert!(m.vocab_size() <= 400);
    assert!(m.vocab_size() > MIN_TARGET_SIZE);
    let text = CORPUS[0];
    assert!(m.encode(text).len() < text.len() / 2);
    assert!(m.encode("ž").ids().iter().all(|&id| id >= BYTE_BASE));
    assert!(train_subword(CORPUS.iter(), MIN_TARGET_SIZE - 1).is_err());
}

#[test]
fn saved_model_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bpe.txt");
    model().save(&path).unwrap();
    let back = SubwordModel::load(&path).unwrap();
    assert_eq!(back.fingerprint(), model().fingerprint());
    assert_eq!(back.encode(CORPUS[2]), model().encode(CORPUS[2]));
}
