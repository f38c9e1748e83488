//! Discourse relation taxonomy and the decontextualisation-gain gate.
//!
//! The coarse categories and their fine-grained members follow the
//! SciDTB-style inventory; seven coarse categories carry contextual content
//! that helps a reader understand a sentence in isolation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseRelation {
    Root,
    Attribution,
    Background,
    #[serde(rename = "Cause-effect")]
    CauseEffect,
    Comparison,
    Condition,
    Contrast,
    Elaboration,
    Enablement,
    Evaluation,
    Explain,
    Joint,
    #[serde(rename = "Manner-means")]
    MannerMeans,
    Progression,
    #[serde(rename = "Same-unit")]
    SameUnit,
    Summary,
    Temporal,
}

impl CoarseRelation {
    pub const ALL: [CoarseRelation; 17] = [
        CoarseRelation::Root,
        CoarseRelation::Attribution,
        CoarseRelation::Background,
        CoarseRelation::CauseEffect,
        CoarseRelation::Comparison,
        CoarseRelation::Condition,
        CoarseRelation::Contrast,
        CoarseRelation::Elaboration,
        CoarseRelation::Enablement,
        CoarseRelation::Evaluation,
        CoarseRelation::Explain,
        CoarseRelation::Joint,
        CoarseRelation::MannerMeans,
        CoarseRelation::Progression,
        CoarseRelation::SameUnit,
        CoarseRelation::Summary,
        CoarseRelation::Temporal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoarseRelation::Root => "Root",
            CoarseRelation::Attribution => "Attribution",
            CoarseRelation::Background => "Background",
            CoarseRelation::CauseEffect => "Cause-effect",
            CoarseRelation::Comparison => "Comparison",
            CoarseRelation::Condition => "Condition",
            CoarseRelation::Contrast => "Contrast",
            CoarseRelation::Elaboration => "Elaboration",
            CoarseRelation::Enablement => "Enablement",
            CoarseRelation::Evaluation => "Evaluation",
            CoarseRelation::Explain => "Explain",
            CoarseRelation::Joint => "Joint",
            CoarseRelation::MannerMeans => "Manner-means",
            CoarseRelation::Progression => "Progression",
            CoarseRelation::SameUnit => "Same-unit",
            CoarseRelation::Summary => "Summary",
            CoarseRelation::Temporal => "Temporal",
        }
    }

    /// Fine-grained labels grouped under this category.
    pub fn fine_names(self) -> &'static [&'static str] {
        match self {
            CoarseRelation::Background => &["General", "Related"],
            CoarseRelation::CauseEffect => &["Cause", "Result"],
            CoarseRelation::Elaboration => &["Addition", "Definition"],
            CoarseRelation::Explain => &["Evidence", "Reason"],
            CoarseRelation::Joint => &["Joint", "Coordination"],
            CoarseRelation::Root => &["Root"],
            CoarseRelation::Attribution => &["Attribution"],
            CoarseRelation::Comparison => &["Comparison"],
            CoarseRelation::Condition => &["Condition"],
            CoarseRelation::Contrast => &["Contrast"],
            CoarseRelation::Enablement => &["Enablement"],
            CoarseRelation::Evaluation => &["Evaluation"],
            CoarseRelation::MannerMeans => &["Manner-means"],
            CoarseRelation::Progression => &["Progression"],
            CoarseRelation::SameUnit => &["Same-unit"],
            CoarseRelation::Summary => &["Summary"],
            CoarseRelation::Temporal => &["Temporal"],
        }
    }
}

impl fmt::Display for CoarseRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationLabel {
    pub coarse: CoarseRelation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<String>,
}

impl RelationLabel {
    pub fn coarse(coarse: CoarseRelation) -> Self {
        RelationLabel { coarse, fine: None }
    }

    pub fn gain(&self) -> bool {
        gain_flag(self)
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.fine {
            Some(fine) => write!(f, "{} ({})", self.coarse, fine),
            None => write!(f, "{}", self.coarse),
        }
    }
}

/// Whether pairs carrying this relation contribute content that helps
/// decontextualise the subordinate unit.
pub fn gain_flag(label: &RelationLabel) -> bool {
    matches!(
        label.coarse,
        CoarseRelation::Background
            | CoarseRelation::CauseEffect
            | CoarseRelation::Condition
            | CoarseRelation::Contrast
            | CoarseRelation::Elaboration
            | CoarseRelation::Explain
            | CoarseRelation::Temporal
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown discourse relation: {0:?}")]
pub struct UnknownRelation(pub String);

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps a model-emitted label onto the taxonomy.
///
/// Matching ignores case, hyphens, underscores and spaces. Coarse names win
/// over fine names; a fine name (or the "Cause Result" row spelling) keeps
/// the fine string on the returned label.
pub fn parse_relation_label(raw: &str) -> Result<RelationLabel, UnknownRelation> {
    let key = squash(raw);
    if key.is_empty() {
        return Err(UnknownRelation(raw.to_string()));
    }
    for coarse in CoarseRelation::ALL {
        if squash(coarse.name()) == key {
            return Ok(RelationLabel::coarse(coarse));
        }
    }
    if key == "causeresult" {
        return Ok(RelationLabel {
            coarse: CoarseRelation::CauseEffect,
            fine: Some("Cause Result".to_string()),
        });
    }
    for coarse in CoarseRelation::ALL {
        for fine in coarse.fine_names() {
            if squash(fine) == key {
                return Ok(RelationLabel {
                    coarse,
                    fine: Some((*fine).to_string()),
                });
            }
        }
    }
    Err(UnknownRelation(raw.to_string()))
}
