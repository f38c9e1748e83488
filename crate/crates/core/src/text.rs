//! Text canonicalisation shared by alignment, status classification and
//! dataset loading.
//!
//! `normalize_text` applies this character map, then trims and collapses
//! whitespace runs to a single ASCII space:
//!
//! | input                                   | output |
//! |-----------------------------------------|--------|
//! | `“ ” „ ‟ « » ″`                          | `"`    |
//! | `‘ ’ ‚ ‛ ′ ´`                            | `'`    |
//! | `— ―` (em dash, horizontal bar)          | `--`   |
//! | `– ‐ ‑ ‒ −` (en dash, hyphens, minus)    | `-`    |
//! | `…`                                     | `...`  |
//! | any Unicode whitespace (incl. NBSP)     | ` `    |

use once_cell::sync::Lazy;
use regex::Regex;

fn map_char(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{00AB}' | '\u{00BB}' | '\u{2033}' => "\"",
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{00B4}' => "'",
        '\u{2014}' | '\u{2015}' => "--",
        '\u{2013}' | '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2212}' => "-",
        '\u{2026}' => "...",
        _ => return None,
    })
}

/// Canonical form used for every text-equality decision in the crate.
pub fn normalize_text(raw: &str) -> String {
    normalize_with_map(raw).0
}

/// Like [`normalize_text`], also returning for every char of the output the
/// char index in `raw` it came from.
pub fn normalize_with_map(raw: &str) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(raw.len());
    let mut map = Vec::with_capacity(raw.len());
    let mut pending_space: Option<usize> = None;
    for (idx, c) in raw.chars().enumerate() {
        if c.is_whitespace() {
            if !out.is_empty() && pending_space.is_none() {
                pending_space = Some(idx);
            }
            continue;
        }
        if let Some(sp) = pending_space.take() {
            out.push(' ');
            map.push(sp);
        }
        match map_char(c) {
            Some(rep) => {
                for r in rep.chars() {
                    out.push(r);
                    map.push(idx);
                }
            }
            None => {
                out.push(c);
                map.push(idx);
            }
        }
    }
    (out, map)
}

/// True when the two strings are equal after [`normalize_text`].
pub fn same_text(a: &str, b: &str) -> bool {
    normalize_text(a) == normalize_text(b)
}

pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by char offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut iter = s.char_indices().map(|(b, _)| b).chain(std::iter::once(s.len()));
    let b_start = iter.nth(start).unwrap_or(s.len());
    let b_end = if end > start {
        iter.nth(end - start - 1).unwrap_or(s.len())
    } else {
        b_start
    };
    &s[b_start..b_end]
}

/// Longest common substring: (length, end in a, end in b).
pub(crate) fn longest_common_substring(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 0..a.len() {
        for j in 0..b.len() {
            cur[j + 1] = if a[i] == b[j] { prev[j] + 1 } else { 0 };
            if cur[j + 1] > best.0 {
                best = (cur[j + 1], i + 1, j + 1);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "e.g", "i.e", "u.s",
    "u.k", "no", "inc", "ltd", "co", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec", "gen", "col", "lt", "sgt", "gov", "sen", "rep", "rev", "approx", "dept",
];

static SENT_BREAK: Lazy<Regex> =
    Lazy::new(|| Regex::new(r#"[.!?]+["'”’)\]]*\s+["'“‘(\[]?[\p{Lu}\p{N}]"#).unwrap());

/// Splits a paragraph into sentences.
///
/// A boundary is terminal punctuation (`.`, `!`, `?`, optionally followed by
/// closing quotes or brackets), then whitespace, then an uppercase letter,
/// digit or opening quote. Boundaries after a known abbreviation or a single
/// capital initial (`J. Smith`) are ignored. Returned sentences are trimmed
/// and never empty.
pub fn split_sentences(paragraph: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for m in SENT_BREAK.find_iter(paragraph) {
        let piece = &paragraph[start..m.start()];
        let last_word = piece
            .rsplit(|c: char| c.is_whitespace())
            .next()
            .unwrap_or("")
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        let is_initial = last_word.chars().count() == 1
            && last_word.chars().all(|c| c.is_alphabetic())
            && paragraph[m.start()..].starts_with('.');
        if ABBREVIATIONS.contains(&last_word.as_str()) || is_initial {
            continue;
        }
        // Boundary sits just after the whitespace run.
        let matched = m.as_str();
        let ws_pos = matched.find(char::is_whitespace).unwrap_or(matched.len());
        let end = m.start() + ws_pos;
        let sentence = paragraph[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence.to_string());
        }
        start = end;
    }
    let tail = paragraph[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}
