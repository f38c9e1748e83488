//! Shared by the integration tests: fixture access and brute-force
//! reference implementations of the metrics.
//!
//! The oracles favour obviousness over speed: counts come from linear
//! scans, LCS from enumerating subsequences, METEOR from enumerating every
//! partial matching.

#![allow(dead_code)]

use std::path::PathBuf;

use decontext_core::metrics::tokenize;
use decontext_core::types::SourceRecord;
use rust_stemmers::{Algorithm, Stemmer};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn jsonl(name: &str) -> Vec<serde_json::Value> {
    read_fixture(name).lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn fixture_records() -> Vec<SourceRecord> {
    let report = decontext_core::dataset::load(&fixture("records.jsonl"), &Default::default()).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    report.records
}

/// Regenerate goldens with `UPDATE_GOLDENS=1 cargo test`.
pub fn check_golden(name: &str, actual: &str) {
    let path = fixture("golden").join(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden {name} differs");
}

// ---------------------------------------------------------------- n-grams

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return vec![];
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
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

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

// ------------------------------------------------------------------- SARI

pub fn oracle_sari(source: &str, candidate: &str, references: &[&str]) -> f64 {
    let s = tokenize(source);
    let c = tokenize(candidate);
    let rs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let k = rs.len();
    let mut total = 0.0;
    for n in 1..=4 {
        let sg = grams(&s, n);
        let cg = grams(&c, n);
        let rg: Vec<Vec<String>> = rs.iter().flat_map(|r| grams(r, n)).collect();
        let mut universe = distinct(&sg);
        universe.extend(distinct(&cg));
        universe.extend(distinct(&rg));
        let universe = distinct(&universe);
        let sc = |g: &[String]| count(&sg, g) * k;
        let cc = |g: &[String]| count(&cg, g) * k;
        let rc = |g: &[String]| count(&rg, g);

        // keep
        let (mut kp_num, mut kp_den, mut kr_num, mut kr_den) = (0.0, 0usize, 0.0, 0usize);
        for g in &universe {
            let sys = sc(g).min(cc(g));
            let all = sc(g).min(rc(g));
            let good = sys.min(rc(g));
            if sys > 0 {
                kp_num += good as f64 / sys as f64;
                kp_den += 1;
            }
            if all > 0 {
                kr_num += good as f64 / all as f64;
                kr_den += 1;
            }
        }
        let keep = if kp_den == 0 && kr_den == 0 {
            1.0
        } else {
            let p = if kp_den == 0 { 0.0 } else { kp_num / kp_den as f64 };
            let r = if kr_den == 0 { 0.0 } else { kr_num / kr_den as f64 };
            f1(p, r)
        };

        // delete
        let (mut d_num, mut d_den, mut d_all) = (0.0, 0usize, 0usize);
        for g in &universe {
            let sys = sc(g).saturating_sub(cc(g));
            let all = sc(g).saturating_sub(rc(g));
            if sys > 0 {
                d_num += sys.saturating_sub(rc(g)) as f64 / sys as f64;
                d_den += 1;
            }
            if all > 0 {
                d_all += 1;
            }
        }
        let delete = match (d_den, d_all) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => d_num / d_den as f64,
        };

        // add
        let (mut a_sys, mut a_all, mut a_good) = (0usize, 0usize, 0usize);
        for g in &universe {
            let in_s = sc(g) > 0;
            let sys = cc(g) > 0 && !in_s;
            let all = rc(g) > 0 && !in_s;
            a_sys += sys as usize;
            a_all += all as usize;
            a_good += (sys && all) as usize;
        }
        let add = if a_sys == 0 && a_all == 0 {
            1.0
        } else {
            let p = if a_sys == 0 { 0.0 } else { a_good as f64 / a_sys as f64 };
            let r = if a_all == 0 { 0.0 } else { a_good as f64 / a_all as f64 };
            f1(p, r)
        };
        total += (keep + delete + add) / 3.0;
    }
    total / 4.0
}

// ------------------------------------------------------------------- chrF

pub fn oracle_chrf(candidate: &str, reference: &str) -> f64 {
    let c: String = candidate.chars().filter(|x| !x.is_whitespace()).collect();
    let r: String = reference.chars().filter(|x| !x.is_whitespace()).collect();
    let c: Vec<char> = c.chars().collect();
    let r: Vec<char> = r.chars().collect();
    let (mut ps, mut rs, mut orders) = (0.0, 0.0, 0);
    for n in 1..=6 {
        if c.len() < n || r.len() < n {
            continue;
        }
        let cg: Vec<String> = (0..=c.len() - n).map(|i| c[i..i + n].iter().collect()).collect();
        let rg: Vec<String> = (0..=r.len() - n).map(|i| r[i..i + n].iter().collect()).collect();
        // greedy one-to-one pairing of equal n-grams = clipped count
        let mut used = vec![false; rg.len()];
        let mut m = 0;
        for g in &cg {
            if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
                used[j] = true;
                m += 1;
            }
        }
        ps += m as f64 / cg.len() as f64;
        rs += m as f64 / rg.len() as f64;
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let (p, r) = (ps / orders as f64, rs / orders as f64);
    if p + r == 0.0 {
        return 0.0;
    }
    5.0 * p * r / (4.0 * p + r)
}

// ------------------------------------------------------------------- BLEU

pub fn oracle_bleu(candidate: &str, references: &[&str], smooth: bool) -> f64 {
    let c = tokenize(candidate);
    let rs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if c.is_empty() {
        return 0.0;
    }
    let max_n = c.len().min(4);
    let mut ms = vec![];
    let mut ts = vec![];
    for n in 1..=max_n {
        let cg = grams(&c, n);
        let mut m = 0;
        for g in distinct(&cg) {
            let best_ref = rs.iter().map(|r| count(&grams(r, n), &g)).max().unwrap_or(0);
            m += count(&cg, &g).min(best_ref);
        }
        ms.push(m as f64);
        ts.push(cg.len() as f64);
    }
    if ms[0] == 0.0 {
        return 0.0;
    }
    let zero = ms.iter().any(|&m| m == 0.0);
    if zero && !smooth {
        return 0.0;
    }
    let mut prod = 1.0;
    for i in 0..max_n {
        let p = if zero && i > 0 { (ms[i] + 1.0) / (ts[i] + 1.0) } else { ms[i] / ts[i] };
        prod *= p;
    }
    let geo = prod.powf(1.0 / max_n as f64);
    let cl = c.len() as f64;
    let mut best: Option<usize> = None;
    for r in &rs {
        let better = match best {
            None => true,
            Some(b) => {
                let (d, db) = ((r.len() as f64 - cl).abs(), (b as f64 - cl).abs());
                d < db || (d == db && r.len() < b)
            }
        };
        if better {
            best = Some(r.len());
        }
    }
    let rl = best.unwrap() as f64;
    let bp = if cl > rl { 1.0 } else { (1.0 - rl / cl).exp() };
    bp * geo
}

// ---------------------------------------------------------------- ROUGE-L

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

pub fn oracle_rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    assert!(c.len() <= 16, "oracle enumerates 2^|c| subsequences");
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len()).filter(|i| mask & (1 << i) != 0).map(|i| &c[i]).collect();
        if sub.len() > best && is_subsequence(&sub, &r) {
            best = sub.len();
        }
    }
    if best == 0 {
        return 0.0;
    }
    f1(best as f64 / c.len() as f64, best as f64 / r.len() as f64)
}

// ----------------------------------------------------------------- METEOR

fn chunks_of(pairs: &[(usize, usize)]) -> usize {
    let mut p = pairs.to_vec();
    p.sort();
    let mut chunks = 0;
    for i in 0..p.len() {
        if i == 0 || p[i].0 != p[i - 1].0 + 1 || p[i].1 != p[i - 1].1 + 1 {
            chunks += 1;
        }
    }
    chunks
}

/// Best (exact, stem, chunks) over every partial matching, ranked by most
/// exact matches, then most stem matches, then fewest chunks.
pub fn oracle_meteor_alignment(c: &[String], r: &[String]) -> (usize, usize, usize) {
    let stemmer = Stemmer::create(Algorithm::English);
    let cs: Vec<String> = c.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    let rs: Vec<String> = r.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    let mut best: Option<(usize, usize, usize)> = None;
    fn rec(
        i: usize,
        c: &[String],
        r: &[String],
        cs: &[String],
        rs: &[String],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize, bool)>,
        best: &mut Option<(usize, usize, usize)>,
    ) {
        if i == c.len() {
            let exact = pairs.iter().filter(|p| p.2).count();
            let stem = pairs.len() - exact;
            let ch = chunks_of(&pairs.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
            let better = match best {
                None => true,
                Some((e, s, k)) => (exact, stem, std::cmp::Reverse(ch)) > (*e, *s, std::cmp::Reverse(*k)),
            };
            if better {
                *best = Some((exact, stem, ch));
            }
            return;
        }
        rec(i + 1, c, r, cs, rs, used, pairs, best);
        for j in 0..r.len() {
            if used[j] {
                continue;
            }
            let exact = c[i] == r[j];
            if exact || cs[i] == rs[j] {
                used[j] = true;
                pairs.push((i, j, exact));
                rec(i + 1, c, r, cs, rs, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    rec(0, c, r, &cs, &rs, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    best.unwrap()
}

pub fn oracle_meteor(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() {
        return 0.0;
    }
    let (e, s, ch) = oracle_meteor_alignment(&c, &r);
    let m = (e + s) as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / c.len() as f64;
    let rc = m / r.len() as f64;
    let fmean = 10.0 * p * rc / (rc + 9.0 * p);
    fmean * (1.0 - 0.5 * (ch as f64 / m).powi(3))
}

// ------------------------------------------------------------------ cases

/// (source, candidate, reference) triples shared by every lexical oracle.
pub const CURATED: [(&str, &str, &str); 25] = [
    ("he went home", "john went home", "john went home"),
    ("the cat sat on mat", "the cat sat on mat", "the cat on the mat"),
    ("she sat", "the cat sat on mat", "the cat on the mat"),
    ("the cat", "the cat", "the cat"),
    ("a b c d", "w x y z", "a b c d"),
    ("he won the race", "the the the the", "the cat"),
    ("she was born in ohio.", "jane doe was born in ohio.", "jane doe, a painter, was born in ohio."),
    ("it opened in 1921.", "the museum opened in 1921.", "the halden museum opened to the public in 1921."),
    ("cats sleep", "cats sleep", "cat sleeps"),
    ("the dogs were running", "the dogs were running", "a dog ran quickly"),
    ("they left", "they left", "the players left the field"),
    ("its design won", "the library's design won", "the oberhaus library's design won the competition"),
    ("during his time there, he wrote poems.", "during his time at leipzig, anton weller wrote poems.", "during his time at the university of leipzig, anton weller wrote most of his early poems."),
    ("the band released an album", "the northern sparks released an album", "the northern sparks released their debut album"),
    ("x", "x", "x"),
    ("x y", "y x", "x y"),
    ("a a a b", "a b", "a a b"),
    ("one two three four five", "one two three four five six", "one two three four five"),
    ("it was great", "it was great", "it was great"),
    ("the statue was dedicated in 1886", "the statue of liberty was dedicated in 1886", "the statue of liberty was dedicated in 1886"),
    ("he said so", "he said so", "the coach said so"),
    ("running quickly helps", "runs quick help", "running quickly helps"),
    ("a b c", "c b a", "a b c"),
    ("she ran home.", "mary ran home!", "mary ran home."),
    ("he plays for them", "greg lemond plays for the team", "greg lemond rides for the french team"),
];

// --------------------------------------------------------------- pipeline

use decontext_core::backend::CompletionBackend;
use decontext_core::pipeline::{run_dataset, Pipeline, PipelineConfig, RunOptions, RunOutcome};

/// Runs the fixture records through `backend`; returns the JSONL bytes.
pub fn run_fixture(backend: &dyn CompletionBackend, config: PipelineConfig) -> (Vec<u8>, RunOutcome) {
    let records = fixture_records();
    let pipeline = Pipeline::new(config, backend);
    let mut out = Vec::new();
    let outcome = run_dataset(&pipeline, &records, RunOptions::default(), &mut out).unwrap();
    (out, outcome)
}

/// Expected live calls for one record: segmentation (1 unified, or 1 for the
/// sentence plus 1 for the context when split), 1 ambiguity call, then
/// selection (1 batched or one per ambiguous EDU) and 1 rewrite, both only
/// when something is ambiguous and there is context.
pub fn expected_calls(config: &PipelineConfig, n_ambiguous: usize, has_context: bool) -> u32 {
    use decontext_core::pipeline::{SegmentationCalls, SelectionMode};
    let seg = match config.segmentation_calls {
        SegmentationCalls::Unified => 1,
        SegmentationCalls::Split => 1 + u32::from(has_context),
    };
    if n_ambiguous == 0 {
        return seg + 1;
    }
    let select = match (has_context, config.selection_mode) {
        (false, _) => 0,
        (true, SelectionMode::Batched) => 1,
        (true, SelectionMode::PerAmbiguous) => n_ambiguous as u32,
    };
    seg + 1 + select + 1
}
