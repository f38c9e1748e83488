mod common;

use common::*;
use decontext_core::metrics::*;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn sari_matches_oracle() {
    for (s, c, r) in CURATED {
        let got = sari(s, c, &[r]).unwrap();
        assert!(close(got, oracle_sari(s, c, &[r])), "{s:?} {c:?} {r:?}: {got}");
    }
}

#[test]
fn sari_multi_reference_matches_oracle() {
    for (s, c, r) in CURATED {
        let refs = [r, s];
        assert!(close(sari(s, c, &refs).unwrap(), oracle_sari(s, c, &refs)), "{s:?} {c:?}");
    }
}

#[test]
fn chrf_matches_oracle() {
    for (_, c, r) in CURATED {
        assert!(close(chrf_default(c, r).unwrap(), oracle_chrf(c, r)), "{c:?} {r:?}");
    }
}

#[test]
fn bleu_matches_oracle() {
    for (_, c, r) in CURATED {
        assert!(close(bleu(c, &[r], 4).unwrap(), oracle_bleu(c, &[r], true)), "{c:?} {r:?}");
        assert!(close(bleu_unsmoothed(c, &[r], 4).unwrap(), oracle_bleu(c, &[r], false)), "{c:?} {r:?}");
    }
}

#[test]
fn rouge_matches_oracle() {
    for (_, c, r) in CURATED {
        assert!(close(rouge_l(c, r).unwrap(), oracle_rouge_l(c, r)), "{c:?} {r:?}");
    }
}

#[test]
fn meteor_matches_oracle() {
    for (_, c, r) in CURATED {
        assert!(close(meteor(c, r).unwrap(), oracle_meteor(c, r)), "{c:?} {r:?}");
    }
}

// Values worked out by hand, frozen after the oracles agreed.
#[test]
fn hand_derived_values() {
    assert!(close(rouge_l("the cat sat on mat", "the cat on the mat").unwrap(), 0.8));
    assert!(close(meteor("the cat", "the cat").unwrap(), 0.9375));
    assert!(close(sari("he went home", "john went home", &["john went home"]).unwrap(), 1.0));
    assert!(close(chrf_default("abcd", "abce").unwrap(), 0.4791666666666667));
    // p1 = 1/4, smoothed p2..p4 = 1/4, 1/3, 1/2, no brevity penalty
    assert!(close(bleu("the the the the", &["the cat"], 4).unwrap(), (1.0f64 / 96.0).powf(0.25)));
    assert!(close(sari("a b c d", "w x y z", &["a b c d"]).unwrap(), 0.0));
}

#[test]
fn meteor_stem_case_matches_alignment_oracle() {
    let (c, r) = (tokenize("cats sleep"), tokenize("cat sleeps"));
    let a = meteor_align(&c, &r);
    assert_eq!((a.exact, a.stem, a.chunks), oracle_meteor_alignment(&c, &r));
    // two stem matches in one chunk: Fmean 1, penalty 0.5 / 8
    assert!(close(meteor("cats sleep", "cat sleeps").unwrap(), 0.9375));
}

#[test]
fn embed_score_matches_pairing_oracle() {
    // 3 candidate tokens, 2 reference tokens, 2-d vectors
    let table = r#"{"a":[1,0],"b":[0.6,0.8],"c":[0,1],"x":[0.8,0.6],"y":[0,1]}"#;
    let e = StaticEmbedder::from_json("toy", table).unwrap();
    let vec = |t: &str| -> [f64; 2] {
        let v: serde_json::Value = serde_json::from_str(table).unwrap();
        [v[t][0].as_f64().unwrap(), v[t][1].as_f64().unwrap()]
    };
    let cos = |a: [f64; 2], b: [f64; 2]| {
        let d = a[0] * b[0] + a[1] * b[1];
        (d / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt())).clamp(0.0, 1.0)
    };
    let (cand, refs) = (["a", "b", "c"], ["x", "y"]);
    // best over every function candidate -> reference, and back
    let mut p_best: f64 = 0.0;
    for f in 0..(refs.len().pow(3)) {
        let mut s = 0.0;
        for (i, c) in cand.iter().enumerate() {
            s += cos(vec(c), vec(refs[(f / refs.len().pow(i as u32)) % refs.len()]));
        }
        p_best = p_best.max(s / 3.0);
    }
    let mut r_best: f64 = 0.0;
    for f in 0..(cand.len().pow(2)) {
        let mut s = 0.0;
        for (i, r) in refs.iter().enumerate() {
            s += cos(vec(r), vec(cand[(f / cand.len().pow(i as u32)) % cand.len()]));
        }
        r_best = r_best.max(s / 2.0);
    }
    let got = embed_score("a b c", "x y", &e).unwrap();
    assert!(close(got.precision, p_best));
    assert!(close(got.recall, r_best));
    assert!(close(got.f1, 2.0 * p_best * r_best / (p_best + r_best)));
}

#[test]
fn corpus_bleu_sums_counts() {
    let pairs = vec![("the cat sat", vec!["the cat sat"]), ("a dog", vec!["a dog barked"])];
    // 5/5 unigrams, 3/3 bigrams, 1/1 trigram; no candidate has four
    // tokens, so the 4-gram order is left out. c = 5, r = 6.
    let got = corpus_bleu(&pairs, 4).unwrap();
    assert!(close(got, corpus_bleu(&pairs, 3).unwrap()));
    assert!(close(got, (1.0f64 - 6.0 / 5.0).exp()));
}

// Deleted n-grams are judged against the reference by count, so a source
// token repeated more often than the reference keeps it costs delete
// precision even when candidate = reference.
#[test]
fn sari_repeated_source_tokens() {
    let (s, c) = ("a, a, a, a,", "a");
    let got = sari(s, c, &[c]).unwrap();
    assert!(close(got, oracle_sari(s, c, &[c])));
    assert!(got < 1.0);
}
