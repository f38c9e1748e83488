//! Deterministic offline backend.
//!
//! Reads the input fields back out of the prompt and answers with simple
//! heuristics, in the same output formats the demonstrations teach:
//!
//! * SEGMENT: [`rule_segment`](crate::segmenter::rule_segment).
//! * AMBIGUITY: EDUs holding a pronoun or demonstrative, starting with
//!   `who`/`which`, or containing `the <noun>` not mentioned earlier in the
//!   sentence and not followed by `of`.
//! * SELECT: per ambiguous EDU, the context EDUs sharing a content word stem
//!   with it; an EDU with a pronoun also gets the first context EDU (the
//!   paragraph's topic) as Background.
//! * DECONTEXT: replaces the first pronoun of each ambiguous EDU with the
//!   head noun phrase of its first relevant EDU.
//! * VANILLA: echoes the sentence.
//!
//! A prompt carrying the format reminder added by a repair round is
//! answered in JSON.

use rust_stemmers::{Algorithm, Stemmer};

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, PromptKind};
use crate::clock::Instant;
use crate::prompting::{
    extract_input_fields, parse_edu_list, parse_numbered_groups, repair_suffix, F_AMBIGUOUS, F_EDUS,
    F_PARAGRAPH_EDUS, F_RELEVANT, F_SENTENCE,
};
use crate::segmenter::rule_segment;

#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let started = Instant::now();
        let text = mock_complete(request);
        Ok(CompletionResponse::live(text, started.elapsed().as_millis() as u64))
    }
}

const PRONOUNS: &[&str] = &[
    "he", "she", "it", "they", "him", "her", "them", "his", "hers", "its", "their", "theirs", "this", "these",
    "those",
];
const SUBSTITUTABLE: &[&str] = &["he", "she", "it", "they", "him", "her", "them", "his", "its", "their", "hers", "theirs"];
const POSSESSIVE: &[&str] = &["his", "its", "their", "hers", "theirs"];
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "by", "from", "as", "and", "or", "but", "not",
    "is", "was", "are", "were", "be", "been", "being", "has", "have", "had", "do", "does", "did", "will", "would",
    "can", "could", "may", "might", "shall", "should", "must", "that", "which", "who", "whom", "whose", "this",
    "these", "those", "it", "its", "he", "she", "they", "him", "her", "them", "his", "their", "hers", "theirs",
    "i", "you", "we", "us", "me", "my", "our", "your", "there", "then", "than", "so", "also", "into", "out",
    "up", "about", "after", "before", "when", "while", "until", "since", "because", "although", "more", "most",
    "such", "other", "some", "any", "all", "both", "each", "one", "two", "over", "under", "between", "during",
];
const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "by", "from", "as", "and", "or", "but", "is",
    "was", "are", "were", "be", "been", "has", "have", "had", "will", "would", "can", "could", "that", "which",
    "who", "after", "before", "when", "until", "since",
];
const DETERMINERS: &[&str] = &["the", "a", "an", "this", "that", "these", "those"];
const NAME_CONNECTORS: &[&str] = &["of", "the", "de", "and", "&"];
const TEMPORAL_WORDS: &[&str] = &[
    "before", "after", "when", "until", "since", "during", "later", "earlier", "then", "january", "february",
    "march", "april", "may", "june", "july", "august", "september", "october", "november", "december",
];

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_capitalized(token: &str) -> bool {
    token
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .next()
        .is_some_and(char::is_uppercase)
}

fn has_pronoun(text: &str) -> bool {
    words(text).iter().any(|w| PRONOUNS.contains(&w.as_str()))
}

fn bare_definite(edu: &str, before: &str) -> bool {
    let earlier: Vec<String> = words(before);
    let toks: Vec<&str> = edu.split_whitespace().collect();
    for (i, t) in toks.iter().enumerate() {
        if !t.eq_ignore_ascii_case("the") || i + 1 >= toks.len() {
            continue;
        }
        let noun_raw = toks[i + 1];
        if is_capitalized(noun_raw) {
            continue;
        }
        let noun = noun_raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if noun.is_empty() {
            continue;
        }
        let next_is_of = toks.get(i + 2).is_some_and(|n| n.eq_ignore_ascii_case("of"));
        let seen = earlier.contains(&noun) || words(&toks[..i].join(" ")).contains(&noun);
        if !next_is_of && !seen {
            return true;
        }
    }
    false
}

fn ambiguous_edus(sentence: &str, edus: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut consumed = String::new();
    for edu in edus {
        let first = words(edu).into_iter().next().unwrap_or_default();
        // Text of the sentence before this EDU.
        let before = sentence.find(edu.as_str()).map(|p| &sentence[..p]).unwrap_or(consumed.as_str());
        if has_pronoun(edu) || first == "who" || first == "which" || bare_definite(edu, before) {
            out.push(edu.clone());
        }
        consumed.push_str(edu);
        consumed.push(' ');
    }
    out
}

fn content_stems(stemmer: &Stemmer, text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()) && w.chars().any(char::is_alphabetic))
        .map(|w| stemmer.stem(&w).into_owned())
        .collect()
}

fn relation_for(edu: &str) -> &'static str {
    let ws = words(edu);
    if ws.iter().any(|w| ["said", "stated", "says", "according"].contains(&w.as_str())) {
        "Attribution"
    } else if ws
        .iter()
        .any(|w| TEMPORAL_WORDS.contains(&w.as_str()) || (w.len() == 4 && w.chars().all(|c| c.is_ascii_digit())))
    {
        "Temporal"
    } else {
        "Elaboration"
    }
}

fn select(ambiguous: &[String], context: &[String]) -> String {
    let stemmer = Stemmer::create(Algorithm::English);
    let ctx_stems: Vec<Vec<String>> = context.iter().map(|c| content_stems(&stemmer, c)).collect();
    let mut map = serde_json::Map::new();
    let mut any = false;
    for a in ambiguous {
        let stems = content_stems(&stemmer, a);
        let mut chosen: Vec<String> = Vec::new();
        if has_pronoun(a) {
            if let Some(topic) = context.first() {
                chosen.push(format!("{topic} (Background)"));
            }
        }
        for (i, c) in context.iter().enumerate() {
            if i == 0 && has_pronoun(a) {
                continue;
            }
            if ctx_stems[i].iter().any(|s| stems.contains(s)) {
                chosen.push(format!("{c} ({})", relation_for(c)));
            }
        }
        any |= !chosen.is_empty();
        map.insert(a.clone(), serde_json::Value::from(chosen));
    }
    if !any {
        return "{}".into();
    }
    serde_json::Value::Object(map).to_string()
}

fn strip_punct(t: &str) -> &str {
    t.trim_matches(|c: char| !c.is_alphanumeric() && c != '&')
}

/// Head noun phrase of an EDU: its first run of capitalized words (with
/// `of`/`the`/`and` inside), or a determiner plus the words up to the
/// next verb or function word.
fn head_np(edu: &str) -> Option<String> {
    let toks: Vec<&str> = edu.split_whitespace().collect();
    let first = toks.first()?;
    let det = DETERMINERS.contains(&strip_punct(first).to_lowercase().as_str());
    if det {
        let mut np = vec![strip_punct(first).to_string()];
        for (k, t) in toks.iter().enumerate().skip(1) {
            let w = strip_punct(t);
            // "The Statue of Liberty": a connector between capitalized words
            let joins_name = NAME_CONNECTORS.contains(&w.to_lowercase().as_str())
                && is_capitalized(toks[k - 1])
                && toks.get(k + 1).is_some_and(|n| is_capitalized(n));
            if !joins_name && (w.is_empty() || FUNCTION_WORDS.contains(&w.to_lowercase().as_str()) || np.len() >= 5) {
                break;
            }
            np.push(w.to_string());
            if t.ends_with([',', '.', ';', ':']) {
                break;
            }
        }
        return (np.len() > 1).then(|| np.join(" "));
    }
    let start = toks.iter().position(|t| is_capitalized(t) && !strip_punct(t).is_empty())?;
    let mut end = start + 1;
    while end < toks.len() {
        let w = strip_punct(toks[end]);
        let prev_breaks = toks[end - 1].ends_with([',', '.', ';', ':', ')']);
        if prev_breaks || w.is_empty() {
            break;
        }
        if is_capitalized(toks[end]) || NAME_CONNECTORS.contains(&w.to_lowercase().as_str()) {
            end += 1;
        } else {
            break;
        }
    }
    while end > start + 1 && NAME_CONNECTORS.contains(&strip_punct(toks[end - 1]).to_lowercase().as_str()) {
        end -= 1;
    }
    let np: Vec<&str> = toks[start..end].iter().map(|t| strip_punct(t)).collect();
    Some(np.join(" ").trim_end_matches("'s").to_string())
}

fn possessive(np: &str) -> String {
    if np.ends_with('s') {
        format!("{np}'")
    } else {
        format!("{np}'s")
    }
}

/// Replaces the first substitutable pronoun in `edu` with `np`.
fn substitute(edu: &str, np: &str, sentence_initial: bool) -> String {
    let toks: Vec<&str> = edu.split_whitespace().collect();
    let Some(i) = toks.iter().position(|t| SUBSTITUTABLE.contains(&strip_punct(t).to_lowercase().as_str())) else {
        return edu.to_string();
    };
    let raw = toks[i];
    let word = strip_punct(raw).to_lowercase();
    let next_is_content = toks.get(i + 1).is_some_and(|n| {
        let w = strip_punct(n).to_lowercase();
        !w.is_empty() && !FUNCTION_WORDS.contains(&w.as_str()) && !raw.ends_with([',', '.', ';'])
    });
    let is_possessive = POSSESSIVE.contains(&word.as_str()) || (word == "her" && next_is_content);
    let mut replacement = if is_possessive { possessive(np) } else { np.to_string() };
    let at_start = i == 0 && sentence_initial;
    let lower_det = DETERMINERS.iter().any(|d| {
        replacement.len() > d.len() && replacement[..d.len()].eq_ignore_ascii_case(d) && replacement.as_bytes()[d.len()] == b' '
    });
    if lower_det {
        let mut chars = replacement.chars();
        let first = chars.next().unwrap();
        replacement = if at_start {
            first.to_uppercase().chain(chars).collect()
        } else {
            first.to_lowercase().chain(chars).collect()
        };
    }
    let core_start = raw.find(|c: char| c.is_alphanumeric()).unwrap_or(0);
    let core_end = raw.rfind(|c: char| c.is_alphanumeric()).map_or(raw.len(), |e| e + 1);
    let token = format!("{}{}{}", &raw[..core_start], replacement, &raw[core_end..]);
    let mut out: Vec<String> = toks.iter().map(|t| t.to_string()).collect();
    out[i] = token;
    out.join(" ")
}

fn decontext(sentence: &str, ambiguous: &[String], relevant: &[Vec<(String, Option<String>)>]) -> String {
    let mut out = sentence.to_string();
    let mut cursor = 0;
    for (i, a) in ambiguous.iter().enumerate() {
        let Some(np) = relevant.get(i).and_then(|g| g.first()).and_then(|(r, _)| head_np(r)) else { continue };
        let Some(pos) = out[cursor..].find(a.as_str()).map(|p| p + cursor) else { continue };
        let replaced = substitute(a, &np, pos == 0);
        out.replace_range(pos..pos + a.len(), &replaced);
        cursor = pos + replaced.len();
    }
    out
}

fn list_output(items: &[String], json: bool) -> String {
    if json {
        serde_json::to_string(items).expect("strings serialize")
    } else if items.is_empty() {
        "{}".into()
    } else {
        items.iter().map(|s| format!("[{s}]")).collect::<Vec<_>>().join(" ")
    }
}

fn items(field: Option<&String>) -> Vec<String> {
    field.and_then(|f| parse_edu_list(f).ok()).map(|l| l.items).unwrap_or_default()
}

/// The mock's answer to a request.
pub fn mock_complete(request: &CompletionRequest) -> String {
    let kind = request.kind;
    let json = request.prompt.contains(repair_suffix(kind));
    let Some(fields) = extract_input_fields(&request.prompt, kind) else {
        return "I could not find the input.".into();
    };
    let field = |name: &str| fields.get(name);
    let sentence = field(F_SENTENCE).cloned().unwrap_or_default();
    match kind {
        PromptKind::Segment => list_output(&rule_segment(&sentence), json),
        PromptKind::Ambiguity => {
            let amb = ambiguous_edus(&sentence, &items(field(F_EDUS)));
            if json && amb.is_empty() {
                "[]".into()
            } else {
                list_output(&amb, json)
            }
        }
        PromptKind::Select => select(&items(field(F_AMBIGUOUS)), &items(field(F_PARAGRAPH_EDUS))),
        PromptKind::Decontext => {
            let amb: Vec<String> = parse_numbered_groups(field(F_AMBIGUOUS).map_or("", String::as_str))
                .into_iter()
                .filter_map(|g| g.into_iter().next().map(|(t, _)| t))
                .collect();
            let rel = parse_numbered_groups(field(F_RELEVANT).map_or("", String::as_str));
            decontext(&sentence, &amb, &rel)
        }
        PromptKind::Vanilla => sentence,
    }
}
