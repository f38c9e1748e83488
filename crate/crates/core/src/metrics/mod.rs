//! Evaluation metrics and corpus reports.
//!
//! Every metric works on the shared [`tokenize`] output (or on characters,
//! for chrF) and returns a value in [0, 1].

mod embed;
mod lexical;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::normalize_text;
use crate::types::{DecontextResult, SourceRecord};

pub use embed::{embed_score, EmbedScore, EmbeddingProvider, HashEmbedder, StaticEmbedder};
pub use lexical::{
    bleu, bleu_stats, bleu_unsmoothed, chrf, chrf_default, corpus_bleu, count_chunks, meteor, meteor_align,
    meteor_from, rouge_l, sari, BleuStats, MeteorAlignment,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("embedding has {found} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no scorable samples (no result has a record with a reference)")]
    NoReferences,
    #[error("{0} needs an embedding provider")]
    MissingProvider(Metric),
}

const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];

fn push_word(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let is_punct = |c: char| !c.is_alphanumeric();
    let is_clitic = |s: &[char]| CLITICS.iter().any(|c| c.chars().eq(s.iter().copied()));
    let (mut start, mut end) = (0, chars.len());
    while start < end && is_punct(chars[start]) && !is_clitic(&chars[start..end]) {
        out.push(chars[start].to_string());
        start += 1;
    }
    let mut trailing = Vec::new();
    while end > start && is_punct(chars[end - 1]) {
        trailing.push(chars[end - 1].to_string());
        end -= 1;
    }
    let core = &chars[start..end];
    if !core.is_empty() {
        let split = CLITICS.iter().find_map(|c| {
            let n = c.chars().count();
            (core.len() > n && is_clitic(&core[core.len() - n..])).then(|| core.len() - n)
        });
        match split {
            Some(at) => {
                push_word(&core[..at].iter().collect::<String>(), out);
                out.push(core[at..].iter().collect());
            }
            None => out.push(core.iter().collect()),
        }
    }
    out.extend(trailing.into_iter().rev());
}

/// Lowercases, splits on whitespace, and separates leading and trailing
/// punctuation into one token per character. Clitics (`'s`, `n't`, `'re`,
/// `'ve`, `'ll`, `'d`, `'m`) are split off the word they attach to, so
/// "Gaudí's" gives `gaudí`, `'s`. Curly quotes and dashes are normalized
/// first. Joining the tokens with spaces and tokenizing again gives the
/// same tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = normalize_text(text).to_lowercase();
    let mut out = Vec::new();
    for word in lower.split_whitespace() {
        push_word(word, &mut out);
    }
    out
}

/// True when a token has no letters or digits.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// The report columns, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "SARI")]
    Sari,
    #[serde(rename = "BERTScore")]
    BertScore,
    #[serde(rename = "ChrF")]
    Chrf,
    #[serde(rename = "RougeL")]
    RougeL,
    #[serde(rename = "BLEU")]
    Bleu,
    #[serde(rename = "METEOR")]
    Meteor,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Sari, Metric::BertScore, Metric::Chrf, Metric::RougeL, Metric::Bleu, Metric::Meteor];
    pub const LEXICAL: [Metric; 5] = [Metric::Sari, Metric::Chrf, Metric::RougeL, Metric::Bleu, Metric::Meteor];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Sari => "SARI",
            Metric::BertScore => "BERTScore",
            Metric::Chrf => "ChrF",
            Metric::RougeL => "RougeL",
            Metric::Bleu => "BLEU",
            Metric::Meteor => "METEOR",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match key.as_str() {
            "sari" => Metric::Sari,
            "bertscore" | "bert" | "embed" | "embedding" => Metric::BertScore,
            "chrf" => Metric::Chrf,
            "rougel" | "rouge" => Metric::RougeL,
            "bleu" => Metric::Bleu,
            "meteor" => Metric::Meteor,
            _ => return Err(format!("unknown metric {s:?}")),
        })
    }
}

/// Which metrics to compute. The embedding score needs a provider.
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub embedder: Option<Box<dyn EmbeddingProvider>>,
}

impl Default for EvalConfig {
    /// The five lexical metrics.
    fn default() -> Self {
        EvalConfig { metrics: Metric::LEXICAL.to_vec(), embedder: None }
    }
}

impl EvalConfig {
    pub fn with_embedder(mut self, provider: Box<dyn EmbeddingProvider>) -> Self {
        if !self.metrics.contains(&Metric::BertScore) {
            self.metrics.push(Metric::BertScore);
        }
        self.embedder = Some(provider);
        self
    }

    /// Enabled metrics in column order, without duplicates.
    pub fn columns(&self) -> Vec<Metric> {
        Metric::ALL.into_iter().filter(|m| self.metrics.contains(m)).collect()
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for m in self.columns() {
            h.update(m.name().as_bytes());
            h.update([0]);
        }
        if let Some(e) = &self.embedder {
            h.update(e.id().as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Per-sample and mean scores of one system output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    pub per_sample: BTreeMap<String, BTreeMap<Metric, f64>>,
    /// Mean of the sentence-level scores.
    pub aggregate: BTreeMap<Metric, f64>,
    /// BLEU over the whole corpus (counts summed before combining).
    pub corpus_bleu: Option<f64>,
    pub n_samples: usize,
    /// Results without a matching record or reference.
    pub n_skipped: usize,
    pub config_digest: String,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per sample, then a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["record_id".to_string()];
        header.extend(self.metrics.iter().map(|m| m.name().to_string()));
        w.write_record(&header).expect("in-memory write");
        let fmt_row = |id: &str, scores: &BTreeMap<Metric, f64>| {
            let mut row = vec![id.to_string()];
            row.extend(self.metrics.iter().map(|m| scores.get(m).map_or(String::new(), |v| format!("{v:.4}"))));
            row
        };
        for (id, scores) in &self.per_sample {
            w.write_record(fmt_row(id, scores)).expect("in-memory write");
        }
        w.write_record(fmt_row("mean", &self.aggregate)).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// A table in the usual column order; metrics not computed show "-".
    pub fn to_markdown(&self, system: &str) -> String {
        let mut out = String::from("| System |");
        for m in Metric::ALL {
            out.push_str(&format!(" {} |", m.name()));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(Metric::ALL.len()));
        out.push_str(&format!("\n| {system} |"));
        for m in Metric::ALL {
            match self.aggregate.get(&m) {
                Some(v) => out.push_str(&format!(" {v:.4} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
        out
    }
}

fn score_sample(source: &str, candidate: &str, gold: &str, config: &EvalConfig) -> Result<BTreeMap<Metric, f64>, MetricError> {
    let mut scores = BTreeMap::new();
    for m in config.columns() {
        let v = match m {
            Metric::Sari => sari(source, candidate, &[gold])?,
            Metric::Chrf => chrf_default(candidate, gold)?,
            Metric::RougeL => rouge_l(candidate, gold)?,
            Metric::Bleu => bleu(candidate, &[gold], 4)?,
            Metric::Meteor => meteor(candidate, gold)?,
            Metric::BertScore => {
                let provider = config.embedder.as_deref().ok_or(MetricError::MissingProvider(m))?;
                if tokenize(candidate).is_empty() {
                    0.0
                } else {
                    embed_score(candidate, gold, provider)?.f1
                }
            }
        };
        scores.insert(m, v);
    }
    Ok(scores)
}

/// Scores every result against the reference of its record.
///
/// Results whose record is missing or has no reference are skipped and
/// counted. Samples are scored in parallel when the `parallel` feature is
/// on; the means are always summed in result order.
pub fn evaluate_corpus(
    results: &[DecontextResult],
    records: &[SourceRecord],
    config: &EvalConfig,
) -> Result<MetricReport, MetricError> {
    let by_id: HashMap<&str, &SourceRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let scorable: Vec<(&DecontextResult, &SourceRecord, &str)> = results
        .iter()
        .filter_map(|res| {
            let rec = by_id.get(res.record_id.as_str())?;
            let gold = rec.gold.as_deref().filter(|g| !tokenize(g).is_empty())?;
            Some((res, *rec, gold))
        })
        .collect();
    let n_skipped = results.len() - scorable.len();
    if scorable.is_empty() {
        return Err(MetricError::NoReferences);
    }
    if config.metrics.contains(&Metric::BertScore) && config.embedder.is_none() {
        return Err(MetricError::MissingProvider(Metric::BertScore));
    }

    let score = |(res, rec, gold): &(&DecontextResult, &SourceRecord, &str)| {
        score_sample(&rec.sentence, &res.rewritten, gold, config)
    };
    #[cfg(feature = "parallel")]
    let scored: Vec<Result<BTreeMap<Metric, f64>, MetricError>> = {
        use rayon::prelude::*;
        scorable.par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Vec<Result<BTreeMap<Metric, f64>, MetricError>> = scorable.iter().map(score).collect();

    let columns = config.columns();
    let mut per_sample = BTreeMap::new();
    let mut sums: BTreeMap<Metric, f64> = columns.iter().map(|&m| (m, 0.0)).collect();
    for ((res, _, _), scores) in scorable.iter().zip(scored) {
        let scores = scores?;
        for (m, v) in &scores {
            *sums.get_mut(m).expect("enabled metric") += v;
        }
        per_sample.insert(res.record_id.clone(), scores);
    }
    let n = per_sample.len();
    let aggregate = sums.into_iter().map(|(m, s)| (m, s / n as f64)).collect();
    let corpus_bleu = if columns.contains(&Metric::Bleu) {
        let pairs: Vec<(&str, Vec<&str>)> = scorable.iter().map(|(res, _, gold)| (res.rewritten.as_str(), vec![*gold])).collect();
        Some(corpus_bleu(&pairs, 4)?)
    } else {
        None
    };
    Ok(MetricReport {
        metrics: columns,
        per_sample,
        aggregate,
        corpus_bleu,
        n_samples: n,
        n_skipped,
        config_digest: config.digest(),
    })
}
