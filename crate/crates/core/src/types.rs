//! Value types passed between pipeline stages.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relation::RelationLabel;
use crate::text::{char_len, normalize_text};

/// One benchmark triplet: the sentence to rewrite, the sentences around it
/// and an optional reference rewrite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub sentence: String,
    #[serde(default)]
    pub context: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("record id is empty")]
    EmptyId,
    #[error("record {0}: sentence is empty")]
    EmptySentence(String),
    #[error("record {id}: context entry {index} is empty")]
    EmptyContextEntry { id: String, index: usize },
}

impl SourceRecord {
    pub fn new(id: impl Into<String>, sentence: impl Into<String>, context: Vec<String>) -> Self {
        SourceRecord {
            id: id.into(),
            sentence: sentence.into(),
            context,
            gold: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold = Some(gold.into());
        self
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyId);
        }
        if self.sentence.trim().is_empty() {
            return Err(RecordError::EmptySentence(self.id.clone()));
        }
        if let Some(index) = self.context.iter().position(|c| c.trim().is_empty()) {
            return Err(RecordError::EmptyContextEntry { id: self.id.clone(), index });
        }
        Ok(())
    }
}

/// Where an EDU was segmented from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EduOrigin {
    Sentence,
    /// Index into `SourceRecord::context`.
    Context(usize),
}

impl fmt::Display for EduOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EduOrigin::Sentence => f.write_str("sentence"),
            EduOrigin::Context(i) => write!(f, "context[{i}]"),
        }
    }
}

/// Elementary discourse unit.
///
/// `span` holds char offsets `[start, end)` into the origin text and is
/// present exactly when `aligned` is true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edu {
    pub text: String,
    pub ordinal: usize,
    pub origin: EduOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EduError {
    #[error("EDU text is empty")]
    EmptyText,
    #[error("span {start}..{end} is invalid for an origin of {len} chars")]
    BadSpan { start: usize, end: usize, len: usize },
}

impl Edu {
    pub fn unaligned(text: impl Into<String>, ordinal: usize, origin: EduOrigin) -> Result<Self, EduError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EduError::EmptyText);
        }
        Ok(Edu { text, ordinal, origin, span: None, aligned: false })
    }

    pub fn aligned(
        text: impl Into<String>,
        ordinal: usize,
        origin: EduOrigin,
        span: (usize, usize),
        origin_text: &str,
    ) -> Result<Self, EduError> {
        let mut edu = Edu::unaligned(text, ordinal, origin)?;
        let len = char_len(origin_text);
        if span.0 >= span.1 || span.1 > len {
            return Err(EduError::BadSpan { start: span.0, end: span.1, len });
        }
        edu.span = Some(span);
        edu.aligned = true;
        Ok(edu)
    }
}

/// A relevant context EDU attached to an ambiguous sentence EDU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevantEdu {
    /// Index into `ContentSelection::edus_context`.
    pub edu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguousEdu {
    /// Index into `ContentSelection::edus_sentence`.
    pub edu: usize,
    pub relevant: Vec<RelevantEdu>,
}

/// A binary discourse pair read off a selection: the context EDU dominates
/// the ambiguous sentence EDU it clarifies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoursePair<'a> {
    pub dominant: &'a Edu,
    pub relation: &'a RelationLabel,
    pub subordinate: &'a Edu,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("ambiguous entry refers to sentence EDU {0}, which does not exist")]
    UnknownSentenceEdu(usize),
    #[error("relevant entry refers to context EDU {0}, which does not exist")]
    UnknownContextEdu(usize),
    #[error("ambiguous entries are not in sentence order")]
    OutOfOrder,
    #[error("relevant EDU {0} carries relation {1}, which has no decontextualisation gain")]
    NoGain(usize, String),
}

/// Output of content selection: both EDU inventories, the ambiguous set and
/// the relevant context for each ambiguous EDU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentSelection {
    pub edus_sentence: Vec<Edu>,
    pub edus_context: Vec<Edu>,
    pub ambiguous: Vec<AmbiguousEdu>,
    pub calls_used: u32,
}

impl ContentSelection {
    /// Validating constructor.
    ///
    /// Ambiguous entries must reference existing sentence EDUs in strictly
    /// ascending order; relevant entries must reference existing context
    /// EDUs. With `require_gain`, every labelled relevant entry must pass
    /// [`crate::relation::gain_flag`].
    pub fn new(
        edus_sentence: Vec<Edu>,
        edus_context: Vec<Edu>,
        ambiguous: Vec<AmbiguousEdu>,
        calls_used: u32,
        require_gain: bool,
    ) -> Result<Self, SelectionError> {
        let mut last: Option<usize> = None;
        for amb in &ambiguous {
            if amb.edu >= edus_sentence.len() {
                return Err(SelectionError::UnknownSentenceEdu(amb.edu));
            }
            if last.is_some_and(|l| l >= amb.edu) {
                return Err(SelectionError::OutOfOrder);
            }
            last = Some(amb.edu);
            for rel in &amb.relevant {
                if rel.edu >= edus_context.len() {
                    return Err(SelectionError::UnknownContextEdu(rel.edu));
                }
                if require_gain {
                    if let Some(label) = &rel.relation {
                        if !label.gain() {
                            return Err(SelectionError::NoGain(rel.edu, label.to_string()));
                        }
                    }
                }
            }
        }
        Ok(ContentSelection { edus_sentence, edus_context, ambiguous, calls_used })
    }

    pub fn ambiguous_edus(&self) -> impl Iterator<Item = &Edu> {
        self.ambiguous.iter().map(|a| &self.edus_sentence[a.edu])
    }

    pub fn relevant_edus<'a>(&'a self, amb: &'a AmbiguousEdu) -> impl Iterator<Item = (&'a Edu, Option<&'a RelationLabel>)> {
        amb.relevant
            .iter()
            .map(|r| (&self.edus_context[r.edu], r.relation.as_ref()))
    }

    /// Labelled (dominant, relation, subordinate) pairs.
    pub fn pairs(&self) -> Vec<DiscoursePair<'_>> {
        let mut out = Vec::new();
        for amb in &self.ambiguous {
            for rel in &amb.relevant {
                if let Some(label) = &rel.relation {
                    out.push(DiscoursePair {
                        dominant: &self.edus_context[rel.edu],
                        relation: label,
                        subordinate: &self.edus_sentence[amb.edu],
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Decontextualised,
    UnchangedNoAmbiguity,
    Infeasible,
    Error,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Status::Decontextualised,
        Status::UnchangedNoAmbiguity,
        Status::Infeasible,
        Status::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Decontextualised => "DECONTEXTUALISED",
            Status::UnchangedNoAmbiguity => "UNCHANGED_NO_AMBIGUITY",
            Status::Infeasible => "INFEASIBLE",
            Status::Error => "ERROR",
        }
    }

    /// Feasible in the can/cannot-be-decontextualised accounting.
    pub fn is_feasible(self) -> bool {
        self == Status::Decontextualised
    }

    pub fn is_unfeasible(self) -> bool {
        matches!(self, Status::Infeasible | Status::Error)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_id: String,
    /// Short SHA-256 digests of every prompt sent, in call order.
    pub prompt_digests: Vec<String>,
    pub cache_hits: u32,
    /// Absent when timing is disabled so that result files stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    pub calls: u32,
    #[serde(default)]
    pub repairs: u32,
    /// Segmentation fell back to the rule segmenter.
    #[serde(default)]
    pub degraded: bool,
    /// The selection response was a flat list assigned to every ambiguous EDU.
    #[serde(default)]
    pub flat_assignment: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecontextResult {
    pub record_id: String,
    pub rewritten: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<ContentSelection>,
    pub provenance: Provenance,
}

impl DecontextResult {
    pub fn error(record: &SourceRecord, provenance: Provenance) -> Self {
        DecontextResult {
            record_id: record.id.clone(),
            rewritten: record.sentence.clone(),
            status: Status::Error,
            selection: None,
            provenance,
        }
    }

    /// Checks the status invariants against the original sentence.
    pub fn is_consistent(&self, original: &str) -> bool {
        match self.status {
            Status::Decontextualised => normalize_text(&self.rewritten) != normalize_text(original),
            Status::UnchangedNoAmbiguity => {
                self.selection.as_ref().is_some_and(|s| s.ambiguous.is_empty())
                    && normalize_text(&self.rewritten) == normalize_text(original)
            }
            Status::Infeasible | Status::Error => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{CoarseRelation, RelationLabel};

    fn edu(text: &str, ordinal: usize, origin: EduOrigin) -> Edu {
        Edu::unaligned(text, ordinal, origin).unwrap()
    }

    #[test]
    fn record_validation() {
        let ok = SourceRecord::new("a", "She left.", vec!["Mary arrived.".into()]);
        assert!(ok.validate().is_ok());
        assert_eq!(
            SourceRecord::new("a", "  ", vec![]).validate(),
            Err(RecordError::EmptySentence("a".into()))
        );
        assert!(matches!(
            SourceRecord::new("a", "x", vec!["ok".into(), " ".into()]).validate(),
            Err(RecordError::EmptyContextEntry { index: 1, .. })
        ));
        assert_eq!(SourceRecord::new("", "x", vec![]).validate(), Err(RecordError::EmptyId));
    }

    #[test]
    fn edu_span_checks() {
        let src = "She left early.";
        assert!(Edu::aligned("She left", 0, EduOrigin::Sentence, (0, 8), src).is_ok());
        assert!(Edu::aligned("x", 0, EduOrigin::Sentence, (3, 3), src).is_err());
        assert!(Edu::aligned("x", 0, EduOrigin::Sentence, (3, 99), src).is_err());
        assert_eq!(Edu::unaligned("  ", 0, EduOrigin::Sentence), Err(EduError::EmptyText));
    }

    #[test]
    fn selection_membership_and_gain() {
        let s = vec![edu("She has been portrayed by Eileen Davidson,", 0, EduOrigin::Sentence)];
        let c = vec![edu("Ashley Abbott is a fictional character", 0, EduOrigin::Context(0))];
        let good = vec![AmbiguousEdu {
            edu: 0,
            relevant: vec![RelevantEdu { edu: 0, relation: Some(RelationLabel::coarse(CoarseRelation::Background)) }],
        }];
        let sel = ContentSelection::new(s.clone(), c.clone(), good, 3, true).unwrap();
        assert_eq!(sel.pairs().len(), 1);
        assert_eq!(sel.pairs()[0].dominant.text, "Ashley Abbott is a fictional character");

        let bad_gain = vec![AmbiguousEdu {
            edu: 0,
            relevant: vec![RelevantEdu { edu: 0, relation: Some(RelationLabel::coarse(CoarseRelation::Attribution)) }],
        }];
        assert!(matches!(
            ContentSelection::new(s.clone(), c.clone(), bad_gain.clone(), 3, true),
            Err(SelectionError::NoGain(0, _))
        ));
        assert!(ContentSelection::new(s.clone(), c.clone(), bad_gain, 3, false).is_ok());

        let missing = vec![AmbiguousEdu { edu: 0, relevant: vec![RelevantEdu { edu: 4, relation: None }] }];
        assert_eq!(
            ContentSelection::new(s.clone(), c.clone(), missing, 3, true),
            Err(SelectionError::UnknownContextEdu(4))
        );
        let dup = vec![
            AmbiguousEdu { edu: 0, relevant: vec![] },
            AmbiguousEdu { edu: 0, relevant: vec![] },
        ];
        assert_eq!(ContentSelection::new(s, c, dup, 3, true), Err(SelectionError::OutOfOrder));
    }

    #[test]
    fn status_serialization() {
        assert_eq!(serde_json::to_string(&Status::UnchangedNoAmbiguity).unwrap(), "\"UNCHANGED_NO_AMBIGUITY\"");
        assert_eq!(serde_json::to_string(&EduOrigin::Context(2)).unwrap(), "{\"CONTEXT\":2}");
        assert!(Status::Decontextualised.is_feasible());
        assert!(Status::Error.is_unfeasible() && Status::Infeasible.is_unfeasible());
        assert!(!Status::UnchangedNoAmbiguity.is_unfeasible());
    }

    #[test]
    fn consistency_uses_normalized_text() {
        let r = DecontextResult {
            record_id: "x".into(),
            rewritten: "She left. ".into(),
            status: Status::Decontextualised,
            selection: None,
            provenance: Provenance::default(),
        };
        assert!(!r.is_consistent("She  left."));
        assert!(r.is_consistent("He left."));
    }
}
