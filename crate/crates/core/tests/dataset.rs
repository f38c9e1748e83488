mod common;

use common::*;
use decontext_core::dataset::{added_words, parse_jsonl, stats, word_count, write_jsonl, DatasetStats, FieldMap};
use decontext_core::types::SourceRecord;
use proptest::prelude::*;

/// Word count written from the documented rule, without the tokenizer:
/// a whitespace piece is a word if it has a letter or digit after outer
/// punctuation is stripped, and a trailing clitic counts as a second word.
fn oracle_words(text: &str) -> usize {
    const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];
    let text = text.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase();
    let mut n = 0;
    for piece in text.split_whitespace() {
        let core = piece.trim_start_matches(|c: char| !c.is_alphanumeric()).trim_end_matches(|c: char| !c.is_alphanumeric());
        if core.is_empty() {
            continue;
        }
        n += 1;
        if CLITICS.iter().any(|c| core.len() > c.len() && core.ends_with(c)) {
            n += 1;
        }
    }
    n
}

#[test]
fn fixture_loads_cleanly() {
    let records = fixture_records();
    assert_eq!(records.len(), 10);
    assert!(records.iter().all(|r| r.gold.is_some()));
    assert_eq!(records[9].meta["topic"], "art");
}

#[test]
fn paragraph_context_is_split_like_the_hand_split() {
    let split: serde_json::Value = serde_json::from_str(&read_fixture("paragraph_split.json")).unwrap();
    let want: Vec<&str> = split["sentences"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let r10 = fixture_records().into_iter().find(|r| r.id == "r10").unwrap();
    assert_eq!(r10.context, want);
}

#[test]
fn word_counts_agree_with_oracle() {
    for r in fixture_records() {
        for text in std::iter::once(&r.sentence).chain(&r.context) {
            assert_eq!(word_count(text), oracle_words(text), "{text}");
        }
    }
}

#[test]
fn fixture_stats_match_golden() {
    let records = fixture_records();
    let s = stats(&records).unwrap();
    let n = records.len() as f64;
    let ctx: usize = records.iter().flat_map(|r| &r.context).map(|c| oracle_words(c)).sum();
    let sent: usize = records.iter().map(|r| oracle_words(&r.sentence)).sum();
    assert_eq!(s, DatasetStats { n_samples: 10, avg_context_words: ctx as f64 / n, avg_sentence_words: sent as f64 / n });
    check_golden("stats.json", &(serde_json::to_string_pretty(&s).unwrap() + "\n"));
}

#[test]
fn stats_ignore_record_order() {
    let mut records = fixture_records();
    let a = stats(&records).unwrap();
    records.reverse();
    records.swap(2, 7);
    assert_eq!(stats(&records).unwrap(), a);
}

#[test]
fn added_words_examples() {
    assert_eq!(added_words("she ran", "mary ran home"), 2);
    for r in fixture_records() {
        assert_eq!(added_words(&r.sentence, &r.sentence), 0);
    }
}

/// Optional check against the real benchmark test split. Point
/// `DECONTEXT_BENCHMARK` at the JSONL file to run it.
#[test]
fn benchmark_stats_when_supplied() {
    let Some(path) = std::env::var_os("DECONTEXT_BENCHMARK") else {
        eprintln!("DECONTEXT_BENCHMARK not set; skipping");
        return;
    };
    let report = decontext_core::dataset::load(path.as_ref(), &FieldMap::default()).unwrap();
    let s = stats(&report.records).unwrap();
    assert_eq!(s.n_samples, 1945);
    assert!((s.avg_context_words - 134.0).abs() <= 1.0, "{s:?}");
    assert!((s.avg_sentence_words - 31.5).abs() <= 1.0, "{s:?}");
}

fn record() -> impl Strategy<Value = SourceRecord> {
    let text = "[A-Za-z0-9 ,.'\"é-]{1,30}".prop_filter("non-blank", |s| !s.trim().is_empty());
    (
        "[a-z0-9]{1,8}",
        text.clone(),
        proptest::collection::vec(text.clone(), 0..4),
        proptest::option::of(text),
        proptest::collection::btree_map("[a-z]{1,5}_m", "[a-z ]{0,8}", 0..3),
    )
        .prop_map(|(id, sentence, context, gold, meta)| SourceRecord { id, sentence, context, gold, meta })
}

proptest! {
    #[test]
    fn save_then_load_round_trips(records in proptest::collection::vec(record(), 0..8)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<SourceRecord> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let mut buf = Vec::new();
        write_jsonl(&records, &FieldMap::default(), &mut buf).unwrap();
        let back = parse_jsonl(std::str::from_utf8(&buf).unwrap(), &FieldMap::default());
        prop_assert!(back.errors.is_empty());
        prop_assert_eq!(back.records, records);
    }
}
