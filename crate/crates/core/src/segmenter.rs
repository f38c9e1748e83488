//! EDU segmentation: the model-driven stage, the rule-based fallback and
//! alignment of EDU text back to its source.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, PromptKind};
use crate::pipeline::Session;
use crate::prompting::parse_edu_list;
use crate::text::{char_len, char_slice, longest_common_substring, normalize_text, normalize_with_map, split_sentences};
use crate::types::{Edu, EduOrigin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationOutput {
    pub edus: Vec<Edu>,
    /// Share of non-whitespace source characters covered by aligned spans.
    pub coverage_ratio: f64,
    /// The rule-based fallback produced these EDUs.
    pub degraded: bool,
}

const SUBJECT_PRONOUNS: &[&str] = &["i", "you", "he", "she", "it", "we", "they"];
const OBJECT_OR_DET: &[&str] = &[
    "him", "her", "them", "me", "us", "it", "the", "a", "an", "this", "that", "these", "those", "his", "its",
    "their", "our", "my", "your",
];
const DETERMINERS: &[&str] = &["the", "a", "an", "this", "that", "these", "those", "his", "her", "its", "their"];
const AUX: &[&str] = &[
    "is", "was", "are", "were", "has", "have", "had", "will", "would", "can", "could", "may", "might", "shall",
    "should", "must", "does", "did", "do", "be", "been",
];
const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "in", "on", "at", "to", "for", "with", "by", "from", "as", "and", "or", "but", "not",
    "so", "then", "also", "is", "was", "are", "were", "be", "been", "that", "which", "who", "this", "these",
];
const SUBORDINATORS: &[&str] = &["before", "after", "when", "because", "although", "while", "until", "since"];
const RELATIVE: &[&str] = &["who", "which", "whom", "whose", "that"];
const DASHES: &[&str] = &["--", "\u{2014}", "\u{2013}"];

struct Token<'a> {
    raw: &'a str,
    /// Lowercased with surrounding punctuation removed.
    word: String,
}

fn tokens(text: &str) -> Vec<Token<'_>> {
    text.split_whitespace()
        .map(|raw| Token {
            raw,
            word: raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase(),
        })
        .collect()
}

fn is_capitalized(raw: &str) -> bool {
    raw.trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase())
}

fn is_gerund(word: &str) -> bool {
    word.len() > 4 && word.ends_with("ing")
}

fn is_participle(word: &str) -> bool {
    word.len() > 4 && word.ends_with("ed")
}

/// Finite clause starting at token `i`.
fn clause_follows(toks: &[Token], i: usize) -> bool {
    let Some(t) = toks.get(i) else { return false };
    if SUBJECT_PRONOUNS.contains(&t.word.as_str()) || is_gerund(&t.word) {
        return true;
    }
    if DETERMINERS.contains(&t.word.as_str()) || is_capitalized(t.raw) {
        return toks[i + 1..].iter().take(4).any(|t| AUX.contains(&t.word.as_str()));
    }
    false
}

fn boundary_before(toks: &[Token], i: usize, edu_start: usize) -> bool {
    let t = &toks[i];
    let prev = &toks[i - 1];
    let next = toks.get(i + 1);
    let prev_comma = prev.raw.ends_with(',');
    match t.word.as_str() {
        _ if DASHES.contains(&t.raw) => true,
        "and" | "but" | "or" if t.raw.chars().all(char::is_alphabetic) => {
            let Some(next) = next else { return false };
            prev_comma
                || SUBJECT_PRONOUNS.contains(&next.word.as_str())
                || (next.raw.chars().all(|c| c.is_lowercase())
                    && !FUNCTION_WORDS.contains(&next.word.as_str())
                    && toks.get(i + 2).is_some_and(|n2| OBJECT_OR_DET.contains(&n2.word.as_str())))
        }
        "who" | "which" => prev_comma,
        "that" => next.is_some_and(|n| AUX.contains(&n.word.as_str()) || is_participle(&n.word)),
        w if SUBORDINATORS.contains(&w) => {
            !RELATIVE.contains(&toks[edu_start].word.as_str()) && clause_follows(toks, i + 1)
        }
        _ => false,
    }
}

/// Segments one sentence; returns token-index start points.
fn sentence_starts(toks: &[Token]) -> Vec<usize> {
    let mut starts = vec![0];
    let mut paren = 0i32;
    let mut in_quote = false;
    for i in 0..toks.len() {
        if i > 0 && paren <= 0 && !in_quote && boundary_before(toks, i, *starts.last().unwrap()) {
            starts.push(i);
        }
        for c in toks[i].raw.chars() {
            match c {
                '(' | '[' => paren += 1,
                ')' | ']' => paren -= 1,
                '"' => in_quote = !in_quote,
                '\u{201C}' => in_quote = true,
                '\u{201D}' => in_quote = false,
                _ => {}
            }
        }
    }
    // Merge pieces shorter than two tokens into their left neighbour (the
    // first piece merges right).
    loop {
        let lens: Vec<usize> = starts
            .iter()
            .enumerate()
            .map(|(k, s)| starts.get(k + 1).copied().unwrap_or(toks.len()) - s)
            .collect();
        let Some(k) = lens.iter().position(|&l| l < 2) else { break };
        if starts.len() == 1 {
            break;
        }
        starts.remove(if k == 0 { 1 } else { k });
    }
    starts
}

/// Deterministic clause-boundary segmenter used offline and as the
/// fallback when the model's segmentation cannot be parsed.
///
/// Multi-sentence input is first split into sentences. Within a sentence it
/// splits before: a coordinating conjunction that follows a comma or
/// introduces a clause; `who`/`which` after a comma; `that` + verb; a
/// subordinator (`before`, `after`, `when`, ...) introducing a clause,
/// unless the current EDU is already a relative clause; a spaced dash.
/// Nothing inside parentheses or quotes is split. The pieces partition the
/// input: joined with single spaces they give back the whitespace-normalized
/// text.
pub fn rule_segment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for sentence in split_sentences(text) {
        let toks = tokens(&sentence);
        let starts = sentence_starts(&toks);
        for (k, &s) in starts.iter().enumerate() {
            let e = starts.get(k + 1).copied().unwrap_or(toks.len());
            out.push(toks[s..e].iter().map(|t| t.raw).collect::<Vec<_>>().join(" "));
        }
    }
    out
}

fn lowered(chars: &[char]) -> Vec<char> {
    chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect()
}

fn find_chars(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || hay.len() < needle.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

/// Aligns a normalized EDU inside normalized `hay` from `from`; returns a
/// char range of `hay`.
fn align_normalized(edu: &[char], hay: &[char], from: usize) -> Option<(usize, usize)> {
    if edu.is_empty() || from >= hay.len() {
        return None;
    }
    if let Some(i) = find_chars(hay, edu, from) {
        return Some((i, i + edu.len()));
    }
    let (le, lh) = (lowered(edu), lowered(hay));
    if let Some(i) = find_chars(&lh, &le, from) {
        return Some((i, i + edu.len()));
    }
    let (len, end_e, end_h) = longest_common_substring(&le, &lh[from..]);
    if (len as f64) < 0.8 * edu.len() as f64 {
        return None;
    }
    let end_h = from + end_h;
    let start = (end_h - len).saturating_sub(end_e - len).max(from);
    let end = (end_h + (edu.len() - end_e)).min(hay.len());
    Some((start, end))
}

fn to_source_span(map: &[usize], source: &str, start: usize, end: usize) -> (usize, usize) {
    let s = map[start];
    let e = map[end - 1] + 1;
    // Shrink over whitespace the normalized range may have mapped onto.
    let chars: Vec<char> = source.chars().collect();
    let (mut s, mut e) = (s, e.min(chars.len()));
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    (s, e)
}

/// Char span `[start, end)` of `edu_text` in `source_text`.
///
/// Both sides are compared after [`normalize_text`]. An exact match is
/// preferred, then a case-insensitive one, then the longest common
/// substring if it covers at least 80% of the EDU.
pub fn align(edu_text: &str, source_text: &str) -> Option<(usize, usize)> {
    align_from(edu_text, source_text, 0)
}

fn align_from(edu_text: &str, source_text: &str, cursor: usize) -> Option<(usize, usize)> {
    let (norm, map) = normalize_with_map(source_text);
    let hay: Vec<char> = norm.chars().collect();
    let edu: Vec<char> = normalize_text(edu_text).chars().collect();
    let (s, e) = align_normalized(&edu, &hay, cursor)?;
    Some(to_source_span(&map, source_text, s, e))
}

/// Share of non-whitespace chars of `source` inside any aligned span.
pub fn coverage_ratio(edus: &[Edu], source: &str) -> f64 {
    let chars: Vec<char> = source.chars().collect();
    let total = chars.iter().filter(|c| !c.is_whitespace()).count();
    if total == 0 {
        return 0.0;
    }
    let mut covered = vec![false; chars.len()];
    for (s, e) in edus.iter().filter_map(|e| e.span) {
        for flag in covered.iter_mut().take(e.min(chars.len())).skip(s) {
            *flag = true;
        }
    }
    let hit = chars.iter().zip(&covered).filter(|(c, &f)| f && !c.is_whitespace()).count();
    hit as f64 / total as f64
}

/// Turns EDU strings into [`Edu`]s over several origin texts that were
/// segmented together (joined by single spaces, in the order given).
///
/// EDUs are aligned in order against the joined text. An aligned EDU that
/// crosses an origin boundary is cut at the boundary. An EDU that cannot be
/// aligned is kept as unaligned text under the origin of the EDU before it.
pub fn assign_to_sources(items: &[String], sources: &[(EduOrigin, &str)]) -> Vec<Vec<Edu>> {
    let joined: String = sources.iter().map(|(_, t)| *t).collect::<Vec<_>>().join(" ");
    let mut bounds = Vec::new();
    let mut offset = 0;
    for (_, t) in sources {
        let len = char_len(t);
        bounds.push((offset, offset + len));
        offset += len + 1;
    }
    let (norm, map) = normalize_with_map(&joined);
    let hay: Vec<char> = norm.chars().collect();

    let mut out: Vec<Vec<Edu>> = vec![Vec::new(); sources.len()];
    let mut cursor = 0usize;
    let mut last_origin = sources.iter().position(|(o, _)| *o == EduOrigin::Sentence).unwrap_or(0);
    for item in items {
        let edu: Vec<char> = normalize_text(item).chars().collect();
        let Some((ns, ne)) = align_normalized(&edu, &hay, cursor) else {
            if let Ok(e) = Edu::unaligned(item.clone(), 0, sources[last_origin].0) {
                out[last_origin].push(e);
            }
            continue;
        };
        cursor = ne;
        let (s, e) = to_source_span(&map, &joined, ns, ne);
        let pieces: Vec<usize> = (0..sources.len()).filter(|&k| bounds[k].0 < e && s < bounds[k].1).collect();
        for &k in &pieces {
            let (bs, be) = bounds[k];
            let origin_text = sources[k].1;
            let (ls, le) = (s.max(bs) - bs, e.min(be) - bs);
            let slice = char_slice(origin_text, ls, le);
            let lead = slice.chars().take_while(|c| c.is_whitespace()).count();
            let trail = slice.chars().rev().take_while(|c| c.is_whitespace()).count();
            if lead + trail >= le - ls {
                continue;
            }
            let span = (ls + lead, le - trail);
            let text = if pieces.len() == 1 { item.clone() } else { slice.trim().to_string() };
            if let Ok(edu) = Edu::aligned(text, 0, sources[k].0, span, origin_text) {
                out[k].push(edu);
                last_origin = k;
            }
        }
    }
    for edus in &mut out {
        for (i, e) in edus.iter_mut().enumerate() {
            e.ordinal = i;
        }
    }
    out
}

fn output_for(edus: Vec<Edu>, sources: &[&str], degraded: bool) -> SegmentationOutput {
    let total: usize = sources.iter().map(|s| s.chars().filter(|c| !c.is_whitespace()).count()).sum();
    let mut covered = 0.0;
    for (k, src) in sources.iter().enumerate() {
        let mine: Vec<Edu> = edus
            .iter()
            .filter(|e| match e.origin {
                EduOrigin::Sentence => sources.len() == 1,
                EduOrigin::Context(i) => i == k || sources.len() == 1,
            })
            .cloned()
            .collect();
        let n = src.chars().filter(|c| !c.is_whitespace()).count();
        covered += coverage_ratio(&mine, src) * n as f64;
    }
    SegmentationOutput {
        edus,
        coverage_ratio: if total == 0 { 0.0 } else { covered / total as f64 },
        degraded,
    }
}

/// Segments several texts with one SEGMENT call and maps the EDUs back to
/// their origins. Returns one output per source, in the order given.
///
/// Falls back to [`rule_segment`] (and flags `degraded`) when the model's
/// answer still cannot be parsed after the repair round.
pub fn segment_sources(
    sources: &[(EduOrigin, &str)],
    session: &mut Session<'_>,
) -> Result<Vec<SegmentationOutput>, BackendError> {
    let joined: String = sources.iter().map(|(_, t)| *t).collect::<Vec<_>>().join(" ");
    let prompt = session.prompts().segment(&joined).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    let (items, degraded) = match session.call_parsed(PromptKind::Segment, prompt, parse_edu_list)? {
        Ok(list) => (list.items, false),
        Err(e) => {
            log::warn!("segmentation output unparseable ({e}); using rule-based fallback");
            (rule_segment(&joined), true)
        }
    };
    let assigned = assign_to_sources(&items, sources);
    Ok(assigned
        .into_iter()
        .zip(sources)
        .map(|(edus, (_, text))| output_for(edus, &[text], degraded))
        .collect())
}

/// Segments a single text.
pub fn segment(text: &str, origin: EduOrigin, session: &mut Session<'_>) -> Result<SegmentationOutput, BackendError> {
    Ok(segment_sources(&[(origin, text)], session)?.remove(0))
}

/// Merges per-sentence context outputs into one, renumbering ordinals.
pub fn merge_context(outputs: Vec<SegmentationOutput>, sources: &[&str]) -> SegmentationOutput {
    let degraded = outputs.iter().any(|o| o.degraded);
    let mut edus: Vec<Edu> = outputs.into_iter().flat_map(|o| o.edus).collect();
    for (i, e) in edus.iter_mut().enumerate() {
        e.ordinal = i;
    }
    output_for(edus, sources, degraded)
}
