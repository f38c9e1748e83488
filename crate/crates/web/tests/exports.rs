use decontext_web::{decontextualise, score, segment};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn segment_reports_spans() {
    let text = "She moved to Paris, which is in France.";
    let v = parse(segment(text));
    let edus = v["edus"].as_array().unwrap();
    assert_eq!(edus.len(), 2);
    let chars: Vec<char> = text.chars().collect();
    for e in edus {
        let (s, t) = (e["start"].as_u64().unwrap() as usize, e["end"].as_u64().unwrap() as usize);
        assert_eq!(chars[s..t].iter().collect::<String>(), e["text"].as_str().unwrap());
    }
    assert!(parse(segment("  ")).get("error").is_some());
}

#[test]
fn score_identity_and_errors() {
    let v = parse(score("she ran home", "mary ran home", "mary ran home"));
    for m in ["ChrF", "RougeL", "BLEU"] {
        assert_eq!(v[m], 1.0, "{m}");
    }
    assert_eq!(v["SARI"], 1.0);
    // no source: SARI omitted
    assert!(parse(score("", "a b", "a b")).get("SARI").is_none());
    assert!(parse(score("x", "a", "")).get("error").is_some());
}

#[test]
fn decontextualise_rewrites_a_pronoun() {
    let v = parse(decontextualise(
        "She won the race in 1999.",
        "Maria Lopez is a Spanish runner. She trained in Madrid.",
    ));
    assert_eq!(v["status"], "DECONTEXTUALISED", "{v}");
    assert!(v["rewritten"].as_str().unwrap().contains("Maria Lopez"), "{v}");
    assert!(parse(decontextualise("", "")).get("error").is_some());
}

// www/index.html reads these fields by name.
#[test]
fn selection_shape_used_by_the_page() {
    let v = parse(decontextualise(
        "She won the race in 1999.",
        "Maria Lopez is a Spanish runner. She trained in Madrid.",
    ));
    let sel = &v["selection"];
    let sentence = sel["edus_sentence"].as_array().unwrap();
    let context = sel["edus_context"].as_array().unwrap();
    assert!(sentence.iter().all(|e| e["text"].is_string()));
    for a in sel["ambiguous"].as_array().unwrap() {
        assert!((a["edu"].as_u64().unwrap() as usize) < sentence.len());
        for g in a["relevant"].as_array().unwrap() {
            assert!((g["edu"].as_u64().unwrap() as usize) < context.len());
            assert!(g["relation"]["coarse"].is_string() || g["relation"].is_null());
        }
    }
}
