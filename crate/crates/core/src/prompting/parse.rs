//! Tolerant parsing of model outputs.

use once_cell::sync::Lazy;
use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::backend::{CompletionRequest, PromptKind};
use crate::relation::{parse_relation_label, RelationLabel};
use crate::text::{longest_common_substring, normalize_text};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no list structure found in response: {0:?}")]
    NoList(String),
    #[error("no relevant-EDU structure found in response: {0:?}")]
    NoRelevantMap(String),
    #[error("model declined to rewrite: {0:?}")]
    Declined(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EduListForm {
    JsonArray,
    JsonObject,
    BraceList,
    BracketSequence,
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedEduList {
    pub items: Vec<String>,
    pub raw: String,
    /// True when the list had to be recovered from a loose enumeration or
    /// from surrounding prose.
    pub repair_applied: bool,
    pub form: EduListForm,
}

static FENCE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)^```[A-Za-z]*\s*\n?(.*?)\n?```$").unwrap());
static OUTPUT_PREFIX: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^(?:output|answer|response|rewritten sentence|rewrite)\s*:\s*").unwrap());
static LIST_MARKER: Lazy<Regex> = Lazy::new(|| Regex::new(r"^(?:\d+[.)]|\(\d+\)|[-*•])\s+").unwrap());

fn preprocess(raw: &str) -> String {
    let mut text = raw.trim().to_string();
    if let Some(c) = FENCE.captures(&text) {
        text = c[1].trim().to_string();
    }
    loop {
        let stripped = OUTPUT_PREFIX.replace(&text, "").trim().to_string();
        if stripped == text {
            break;
        }
        text = stripped;
    }
    text
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’')] {
        if s.len() >= 2 * open.len_utf8() && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

fn clean_items<I: IntoIterator<Item = String>>(items: I) -> Vec<String> {
    items
        .into_iter()
        .map(|s| unquote(&s).to_string())
        // a bare "-" or "..." is list debris, not a unit
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .collect()
}

/// First balanced `open..close` span (ignoring delimiters inside JSON strings).
fn balanced_span(text: &str, open: char, close: char) -> Option<(usize, usize)> {
    let start = text.find(open)?;
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        } else if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some((start, start + i + c.len_utf8()));
            }
        }
    }
    None
}

fn json_strings(values: &[Value]) -> Vec<String> {
    values.iter().filter_map(|v| v.as_str().map(str::to_string)).collect()
}

/// JSON array of strings, either the whole text or embedded in prose.
fn try_json_array(text: &str) -> Option<(Vec<String>, bool)> {
    if let Ok(Value::Array(values)) = serde_json::from_str::<Value>(text) {
        let items = clean_items(json_strings(&values));
        return (!items.is_empty()).then_some((items, false));
    }
    let (s, e) = balanced_span(text, '[', ']')?;
    if let Ok(Value::Array(values)) = serde_json::from_str::<Value>(&text[s..e]) {
        let items = clean_items(json_strings(&values));
        if !items.is_empty() {
            return Some((items, true));
        }
    }
    None
}

fn try_json_object_values(text: &str) -> Option<Vec<String>> {
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(text) else { return None };
    let mut out = Vec::new();
    for (_, v) in map {
        match v {
            Value::String(s) => out.push(s),
            Value::Array(a) => out.extend(json_strings(&a)),
            _ => {}
        }
    }
    let out = clean_items(out);
    (!out.is_empty()).then_some(out)
}

/// Top-level `[..]` groups, each with the text that follows it up to the
/// next group. An unclosed final group runs to the end of the text.
fn bracket_groups(text: &str) -> (Vec<(String, String)>, String, bool) {
    let mut groups: Vec<(String, String)> = Vec::new();
    let mut residue = String::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '[' => {
                if depth > 0 {
                    current.push(c);
                }
                depth += 1;
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push((std::mem::take(&mut current), String::new()));
                } else {
                    current.push(c);
                }
            }
            _ if depth > 0 => current.push(c),
            _ => {
                residue.push(c);
                if let Some(last) = groups.last_mut() {
                    last.1.push(c);
                }
            }
        }
    }
    let unclosed = depth > 0 && !current.trim().is_empty();
    if unclosed {
        groups.push((current, String::new()));
    }
    (groups, residue, unclosed)
}

fn alnum_count(s: &str) -> usize {
    s.chars().filter(|c| c.is_alphanumeric()).count()
}

fn try_bracket_sequence(text: &str) -> Option<(Vec<String>, bool)> {
    let (groups, residue, unclosed) = bracket_groups(text);
    if groups.is_empty() {
        return None;
    }
    let items = clean_items(groups.into_iter().map(|(g, _)| g));
    if items.is_empty() {
        return None;
    }
    let residue_alnum = alnum_count(&residue);
    let item_alnum: usize = items.iter().map(|s| alnum_count(s)).sum();
    if residue_alnum > item_alnum {
        return None;
    }
    Some((items, unclosed || residue_alnum > 0))
}

fn try_brace_list(text: &str) -> Option<(Vec<String>, bool)> {
    let trimmed = text.trim_end_matches(['.', ';']).trim();
    let inner = trimmed.strip_prefix('{')?.strip_suffix('}')?;
    if inner.contains('[') {
        return try_bracket_sequence(inner);
    }
    let mut pieces = split_top_level(inner, ',');
    if pieces.len() == 1 {
        pieces = split_top_level(inner, ';');
    }
    let balanced = pieces.iter().all(|p| p.matches('"').count() % 2 == 0);
    let items = if balanced { clean_items(pieces) } else { clean_items(vec![inner.to_string()]) };
    (!items.is_empty()).then_some((items, false))
}

fn split_top_level(text: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            _ => {}
        }
        if c == sep && depth <= 0 {
            out.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    out.push(current);
    out
}

fn strip_marker(line: &str) -> String {
    LIST_MARKER.replace(line.trim(), "").trim().to_string()
}

fn try_enumeration(text: &str) -> Option<Vec<String>> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let marked = lines.iter().filter(|l| LIST_MARKER.is_match(l)).count();
    if lines.len() >= 2 || (lines.len() == 1 && marked == 1) {
        let items = clean_items(lines.iter().map(|l| strip_marker(l)));
        return (!items.is_empty()).then_some(items);
    }
    let line = lines.first()?;
    let pieces = clean_items(line.split(';').map(str::to_string));
    (pieces.len() >= 2).then_some(pieces)
}

/// Parses a list of EDUs from a model response.
///
/// Accepted forms, tried in order: JSON array of strings, JSON object whose
/// values are strings, brace list `{a, b}`, bracket sequence `[a] [b]`,
/// enumeration (one item per line, or `;`-separated on one line). Code
/// fences and a leading `Output:` are ignored. Items are never empty.
pub fn parse_edu_list(response: &str) -> Result<ParsedEduList, ParseError> {
    let text = preprocess(response);
    if text.is_empty() {
        return Err(ParseError::Empty);
    }
    let done = |items, repair_applied, form| {
        Ok(ParsedEduList { items, raw: response.to_string(), repair_applied, form })
    };
    if let Some((items, repaired)) = try_json_array(&text) {
        return done(items, repaired, EduListForm::JsonArray);
    }
    if let Some(items) = try_json_object_values(&text) {
        return done(items, true, EduListForm::JsonObject);
    }
    if let Some((items, repaired)) = try_brace_list(&text) {
        return done(items, repaired, EduListForm::BraceList);
    }
    if let Some((items, repaired)) = try_bracket_sequence(&text) {
        return done(items, repaired, EduListForm::BracketSequence);
    }
    if let Some(items) = try_enumeration(&text) {
        return done(items, true, EduListForm::Enumeration);
    }
    Err(ParseError::NoList(text))
}

fn is_empty_marker(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
    let squashed: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    matches!(squashed.as_str(), "{}" | "[]" | "none" | "n/a" | "null" | "{[]}")
        || t == "no ambiguous edus"
        || t == "no relevant edus"
}

/// Like [`parse_edu_list`] but an explicit empty answer (`{}`, `[]`, `none`)
/// is a valid empty list.
pub fn parse_ambiguous_list(response: &str) -> Result<ParsedEduList, ParseError> {
    let text = preprocess(response);
    if !text.is_empty() && is_empty_marker(&text) {
        return Ok(ParsedEduList {
            items: Vec::new(),
            raw: response.to_string(),
            repair_applied: false,
            form: EduListForm::BraceList,
        });
    }
    parse_edu_list(response)
}

/// One selected EDU as the model wrote it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantItem {
    pub text: String,
    pub relation: Option<RelationLabel>,
}

/// Relevant EDUs grouped under each ambiguous EDU, in the order the
/// ambiguous EDUs were given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevantMap {
    pub groups: Vec<(String, Vec<RelevantItem>)>,
    /// The response was an ungrouped list and was assigned to every
    /// ambiguous EDU.
    pub flat_assignment: bool,
}

static LABEL_LIKE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[A-Z][A-Za-z-]*(?: [A-Za-z-]+){0,2}$").unwrap());

/// Splits a trailing `(Label)` off an item.
///
/// A known relation becomes the label. An unknown label-like annotation
/// (one to three capitalised words) is dropped. Anything else in
/// parentheses stays part of the text.
pub fn split_label(item: &str) -> (String, Option<RelationLabel>) {
    let item = unquote(item);
    let Some(body) = item.strip_suffix(')') else { return (item.to_string(), None) };
    let mut depth = 0i32;
    let mut open = None;
    for (i, c) in body.char_indices().rev() {
        match c {
            ')' => depth += 1,
            '(' if depth == 0 => {
                open = Some(i);
                break;
            }
            '(' => depth -= 1,
            _ => {}
        }
    }
    let Some(open) = open else { return (item.to_string(), None) };
    let label = body[open + 1..].trim();
    let text = unquote(body[..open].trim()).to_string();
    if text.is_empty() {
        return (item.to_string(), None);
    }
    match parse_relation_label(label) {
        Ok(l) => (text, Some(l)),
        Err(_) if LABEL_LIKE.is_match(label) => (text, None),
        Err(_) => (item.to_string(), None),
    }
}

fn to_item(raw: &str) -> Option<RelevantItem> {
    let (text, relation) = split_label(raw);
    (!text.trim().is_empty()).then(|| RelevantItem { text, relation })
}

/// Items from a group value: JSON array, bracket sequence with optional
/// trailing labels, `;`-separated, or a single item.
fn group_items(value: &str) -> Vec<RelevantItem> {
    let value = value.trim().trim_end_matches(';').trim();
    if value.is_empty() || is_empty_marker(value) {
        return Vec::new();
    }
    if let Ok(Value::Array(a)) = serde_json::from_str::<Value>(value) {
        return a.iter().filter_map(json_item).collect();
    }
    let inner = value.strip_prefix('{').and_then(|v| v.strip_suffix('}')).unwrap_or(value);
    let (groups, residue, _) = bracket_groups(inner);
    if !groups.is_empty() {
        let item_alnum: usize = groups.iter().map(|(g, _)| alnum_count(g)).sum();
        // relation labels in parentheses are expected between items
        let residue = PARENTHESIZED.replace_all(&residue, "");
        if alnum_count(&residue) <= item_alnum {
            return groups
                .iter()
                .filter_map(|(g, trailing)| {
                    let trailing = trailing.trim().trim_matches([',', ';']).trim();
                    if trailing.starts_with('(') && trailing.ends_with(')') {
                        to_item(&format!("{} {trailing}", g.trim()))
                    } else {
                        to_item(g)
                    }
                })
                .collect();
        }
    }
    let pieces = split_top_level(inner, ';');
    pieces.iter().filter_map(|p| to_item(&strip_marker(p))).collect()
}

fn json_item(v: &Value) -> Option<RelevantItem> {
    match v {
        Value::String(s) => to_item(s),
        Value::Object(o) => {
            let text = ["edu", "text", "EDU"].iter().find_map(|k| o.get(*k)?.as_str())?;
            let relation = ["relation", "label"]
                .iter()
                .find_map(|k| o.get(*k)?.as_str())
                .and_then(|l| parse_relation_label(l).ok());
            let text = unquote(text).to_string();
            (!text.is_empty()).then_some(RelevantItem { text, relation })
        }
        _ => None,
    }
}

static INDEX_KEY: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^\s*(?:a|ambiguous(?:\s*edu)?|edu)?\s*[#_ ]?\(?(\d+)\)?\s*$").unwrap());

/// Maps a key written by the model to an ambiguous EDU index.
fn resolve_key(key: &str, ambiguous: &[String]) -> Option<usize> {
    let key = unquote(key.trim().trim_start_matches('[').trim_end_matches(']'));
    let norm = normalize_text(key).to_lowercase();
    if let Some(i) = ambiguous.iter().position(|a| normalize_text(a).to_lowercase() == norm) {
        return Some(i);
    }
    if let Some(c) = INDEX_KEY.captures(key) {
        let n: usize = c[1].parse().ok()?;
        if (1..=ambiguous.len()).contains(&n) {
            return Some(n - 1);
        }
    }
    let k: Vec<char> = norm.chars().collect();
    if k.len() < 4 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in ambiguous.iter().enumerate() {
        let a: Vec<char> = normalize_text(a).to_lowercase().chars().collect();
        let score = longest_common_substring(&k, &a).0 as f64 / k.len().max(a.len()) as f64;
        if score >= 0.8 && best.map_or(true, |(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

fn empty_groups(ambiguous: &[String]) -> Vec<(String, Vec<RelevantItem>)> {
    ambiguous.iter().map(|a| (a.clone(), Vec::new())).collect()
}

fn try_object(text: &str, ambiguous: &[String]) -> Option<RelevantMap> {
    let candidate = match serde_json::from_str::<Value>(text) {
        Ok(v) => v,
        Err(_) => {
            let (s, e) = balanced_span(text, '{', '}')?;
            serde_json::from_str::<Value>(&text[s..e]).ok()?
        }
    };
    let Value::Object(map) = candidate else { return None };
    let mut groups = empty_groups(ambiguous);
    let mut any = false;
    for (key, value) in map {
        let Some(i) = resolve_key(&key, ambiguous) else {
            log::warn!("selection output key {key:?} matches no ambiguous EDU; ignored");
            continue;
        };
        any = true;
        let items: Vec<RelevantItem> = match &value {
            Value::Array(a) => a.iter().filter_map(json_item).collect(),
            Value::String(s) => group_items(s),
            other => json_item(other).into_iter().collect(),
        };
        groups[i].1.extend(items);
    }
    (any || ambiguous.is_empty()).then_some(RelevantMap { groups, flat_assignment: false })
}

fn try_headed_lines(text: &str, ambiguous: &[String]) -> Option<RelevantMap> {
    let mut groups = empty_groups(ambiguous);
    let mut current: Option<usize> = None;
    let mut headers = 0;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let bare = LIST_MARKER.replace(line, "");
        let mut header = None;
        for (pos, _) in bare.match_indices(':') {
            if let Some(i) = resolve_key(&bare[..pos], ambiguous) {
                header = Some((i, bare[pos + 1..].to_string()));
            }
        }
        if let Some((i, rest)) = header {
            headers += 1;
            current = Some(i);
            groups[i].1.extend(group_items(&rest));
        } else if let Some(i) = current {
            groups[i].1.extend(group_items(&bare));
        } else {
            return None;
        }
    }
    (headers > 0).then_some(RelevantMap { groups, flat_assignment: false })
}

/// Parses the selection stage output into relevant EDUs per ambiguous EDU.
///
/// Accepted forms: a JSON object keyed by ambiguous EDU text (fuzzy) or
/// index (`"A1"`, `"1"`); lines headed `<ambiguous EDU>: ...`; or a flat
/// list, which is assigned to every ambiguous EDU with
/// `flat_assignment = true`. `{}`, `[]` and `none` mean nothing was selected.
pub fn parse_relevant_map(response: &str, ambiguous: &[String]) -> Result<RelevantMap, ParseError> {
    let text = preprocess(response);
    if text.is_empty() {
        return Err(ParseError::Empty);
    }
    if is_empty_marker(&text) {
        return Ok(RelevantMap { groups: empty_groups(ambiguous), flat_assignment: false });
    }
    if let Some(map) = try_object(&text, ambiguous) {
        return Ok(map);
    }
    if let Some(map) = try_headed_lines(&text, ambiguous) {
        return Ok(map);
    }
    let flat = group_items_flat(&text).ok_or_else(|| ParseError::NoRelevantMap(text.clone()))?;
    Ok(RelevantMap {
        groups: ambiguous.iter().map(|a| (a.clone(), flat.clone())).collect(),
        flat_assignment: true,
    })
}

fn group_items_flat(text: &str) -> Option<Vec<RelevantItem>> {
    let items = group_items(text);
    if !items.is_empty() && (text.contains('[') || text.contains(';')) {
        return Some(items);
    }
    let list = parse_edu_list(text).ok()?;
    Some(list.items.iter().filter_map(|s| to_item(s)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewriteOutcome {
    Text(String),
    Empty,
    /// The model said it could not produce a rewrite.
    Declined(String),
}

static PARENTHESIZED: Lazy<Regex> = Lazy::new(|| Regex::new(r"\([^()]*\)").unwrap());

static DECLINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)(\b(cannot|can't|can not|unable to|not possible to|impossible to|not able to)\b.*\b(rewrite|rewritten|decontextuali[sz]e|decontextuali[sz]ed|understood|determine|resolve)|^(n/?a|none|no rewrite( needed| possible)?)\.?$)",
    )
    .unwrap()
});

/// Extracts the rewritten sentence from a rewrite response: the first
/// non-empty line, without code fences, an `Output:` prefix or quotes.
pub fn parse_rewrite(response: &str) -> RewriteOutcome {
    let text = preprocess(response);
    let Some(line) = text.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return RewriteOutcome::Empty;
    };
    let line = unquote(line);
    let line = line.strip_prefix('{').and_then(|l| l.strip_suffix('}')).unwrap_or(line).trim();
    if line.is_empty() {
        return RewriteOutcome::Empty;
    }
    if DECLINE.is_match(line) {
        return RewriteOutcome::Declined(line.to_string());
    }
    RewriteOutcome::Text(line.to_string())
}

pub fn repair_suffix(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Segment | PromptKind::Ambiguity => "Return only a JSON array of strings.",
        PromptKind::Select => {
            "Return only a JSON object that maps each ambiguous EDU to a JSON array of its relevant EDUs."
        }
        PromptKind::Decontext | PromptKind::Vanilla => "Return only the rewritten sentence.",
    }
}

/// Builds the single follow-up request sent after an unparseable answer:
/// the same prompt with a format reminder placed before the final
/// `Output:` cue.
pub fn repair_reask(request: &CompletionRequest, error: &ParseError) -> CompletionRequest {
    log::debug!("re-asking {} after parse failure: {error}", request.kind);
    let suffix = repair_suffix(request.kind);
    let prompt = match request.prompt.strip_suffix(super::OUTPUT_CUE) {
        Some(head) => format!("{head}{suffix}\n{}", super::OUTPUT_CUE),
        None => format!("{}\n{suffix}", request.prompt),
    };
    CompletionRequest { prompt, ..request.clone() }
}
