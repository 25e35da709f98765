mod common;

use std::collections::BTreeMap;

use common::brute_force_matches;
use finlm::lexicon::*;
use finlm::rng::rng_from_seed;
use finlm::tokenizer::{TokenId, Tokenizer};
use rand::Rng;

#[test]
fn matcher_equals_brute_force_on_random_sequences() {
    let mut rng = rng_from_seed(2024);
    let alphabet = 6;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut patterns = BTreeMap::new();
        let mut matcher = PhraseMatcher::default();
        for id in 0..rng.random_range(1..12u32) {
            let len = rng.random_range(1..=4);
            let p: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..alphabet)).collect();
            if matcher.insert(&p, id) {
                patterns.insert(p, id);
            }
        }
        let n = rng.random_range(0..=512);
        let seq: Vec<TokenId> = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
        if matcher.find_all(&seq) != brute_force_matches(&seq, &patterns) {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn matcher_prefers_longest_then_leftmost() {
    let mut m = PhraseMatcher::default();
    assert!(m.insert(&[1, 2], 0));
    assert!(m.insert(&[1, 2, 3], 1));
    assert!(m.insert(&[2, 3, 4], 2));
    assert!(!m.insert(&[1, 2], 9));
    assert!(!m.insert(&[], 9));
    let occ = m.find_all(&[1, 2, 3, 4, 1, 2, 5]);
    assert_eq!(
        occ,
        vec![
            PhraseOccurrence { start: 0, end: 3, term_id: 1 },
            PhraseOccurrence { start: 4, end: 6, term_id: 0 },
        ]
    );
}

fn tokenizer() -> Tokenizer {
    Tokenizer::whole_word_vocab(["margin call gross margin interest rate swap revenue the of"])
}

#[test]
fn load_lexicon_reports_unreadable_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let err = load_lexicon(&[&missing], &tokenizer()).unwrap_err();
    assert!(matches!(err, finlm::Error::Io { .. }));
    assert!(err.to_string().contains("nope.txt"), "{err}");
}

#[test]
fn load_lexicon_unions_files_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    std::fs::write(&a, "Margin Call\nrevenue\n# comment\n\n").unwrap();
    std::fs::write(&b, "margin   call\ninterest rate swap\nzzyzx\n").unwrap();
    let lex = load_lexicon(&[&a, &b], &tokenizer()).unwrap();
    let surfaces: Vec<&str> = lex.terms().iter().map(|t| t.surface.as_str()).collect();
    assert_eq!(surfaces, ["interest rate swap", "margin call", "revenue"]);
    assert_eq!(lex.rejected().len(), 1);
    assert_eq!(lex.rejected()[0].surface, "zzyzx");
    assert_eq!(lex.phrase_count(), 2);

    let again = load_lexicon(&[&a, &b], &tokenizer()).unwrap();
    assert_eq!(lex.source_digest(), again.source_digest());
    let vocab = lex.augment();
    assert_eq!(vocab.total_size(), tokenizer().size() + 2);
}

#[test]
fn empty_dictionary_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    std::fs::write(&a, "# nothing\n").unwrap();
    assert!(matches!(load_lexicon(&[&a], &tokenizer()), Err(finlm::Error::Config(_))));
}

#[test]
fn corrupted_lexicon_file_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lexicon.json");
    let lex = Lexicon::from_surfaces(["margin call", "revenue"], &tokenizer(), "x".into()).unwrap();
    lex.save(&path).unwrap();
    assert_eq!(Lexicon::load(&path).unwrap().terms(), lex.terms());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let err = Lexicon::load(&path).unwrap_err();
    assert!(err.to_string().contains("lexicon.json"), "{err}");
}
