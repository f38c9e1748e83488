//! Prompt construction for the five stage kinds, demonstration handling,
//! and parsing of model outputs.
//!
//! Every prompt has the same skeleton:
//!
//! ```text
//! <instruction>
//!
//! Generate the output as shown in the examples below.   } only when
//! ------------------------------                         } demos are
//! <demo 1> ... <demo n>                                  } rendered
//! ------------------------------
//! Input:
//! <Label>: {<value>}; <Label>: {<value>};
//! Output:
//! ```
//!
//! Values are substituted literally between the braces. List values use
//! the bracket form `[edu one] [edu two]`; the decontextualisation input
//! numbers ambiguous EDUs and their relevant EDUs as `(1) [..] (2) [..]` so
//! the content plan order is explicit. `docs/prompts.md` reproduces the
//! exact text.

mod parse;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::PromptKind;
use crate::relation::RelationLabel;

pub use parse::{
    parse_ambiguous_list, parse_edu_list, parse_relevant_map, parse_rewrite, repair_reask, repair_suffix,
    split_label, EduListForm, ParseError, ParsedEduList, RelevantItem, RelevantMap, RewriteOutcome,
};

pub const SEPARATOR: &str = "------------------------------";
pub const DEMO_GUIDE: &str = "Generate the output as shown in the examples below.";
pub const OUTPUT_CUE: &str = "Output:";

pub const SEGMENT_INSTRUCTION: &str =
    "You will be given a sentence. Your task is to segment this sentence into Elementary Discourse Units (EDUs).";
pub const AMBIGUITY_INSTRUCTION: &str = "You will be given a sentence and its EDUs. Your task is to extract ambiguous EDUs that rely heavily on context or have implicit references from the given EDUs.";
pub const SELECT_INSTRUCTION: &str = "You will be given a paragraph consisting of multiple sentences and their corresponding EDUs; an ambiguous sentence and its EDUs. Your task is to select EDUs from the paragraph that have discourse relations with the EDUs in the ambiguous sentence.";
/// Added to the selection instruction so the answer can be grouped per
/// ambiguous EDU and gated on its relation.
pub const SELECT_GROUPING: &str = "Group the selected EDUs under each ambiguous EDU and name the discourse relation in parentheses after each selected EDU.";
pub const DECONTEXT_INSTRUCTION: &str = "You will be given a sentence and its ambiguous EDUs, and EDUs relevant to these ambiguous EDUs. Your task is to rewrite the ambiguous sentence to be understandable by enriching each ambiguous EDU with its relevant EDUs, which involves resolving ambiguities, determining references, and filling in implicit information. We prefer the rewritten sentence to be as close as possible to its original form.";
pub const VANILLA_INSTRUCTION: &str = "To rewrite the Sentence to be understandable out of Context, while retaining its original meaning. We prefer the rewritten sentence to be as close as possible to its original form.";

pub const F_SENTENCE: &str = "Sentence";
pub const F_EDUS: &str = "EDUs";
pub const F_PARAGRAPH: &str = "Paragraph";
pub const F_PARAGRAPH_EDUS: &str = "EDUs in Paragraph";
pub const F_AMBIGUOUS: &str = "Ambiguous EDUs in Sentence";
pub const F_RELEVANT: &str = "EDUs relevant to the sentence";
pub const F_CONTEXT: &str = "Context";

/// Placeholders a kind's input block requires, in rendering order, and the
/// line each one starts (fields on the same line are joined by `; `).
fn layout(kind: PromptKind) -> &'static [(&'static str, usize)] {
    match kind {
        PromptKind::Segment => &[(F_SENTENCE, 0)],
        PromptKind::Ambiguity => &[(F_SENTENCE, 0), (F_EDUS, 0)],
        PromptKind::Select => &[(F_PARAGRAPH, 0), (F_PARAGRAPH_EDUS, 0), (F_SENTENCE, 1), (F_AMBIGUOUS, 1)],
        PromptKind::Decontext => &[(F_SENTENCE, 0), (F_AMBIGUOUS, 0), (F_RELEVANT, 0)],
        PromptKind::Vanilla => &[(F_SENTENCE, 0), (F_CONTEXT, 0)],
    }
}

pub fn required_fields(kind: PromptKind) -> Vec<&'static str> {
    layout(kind).iter().map(|(f, _)| *f).collect()
}

pub fn instruction(kind: PromptKind) -> String {
    match kind {
        PromptKind::Segment => SEGMENT_INSTRUCTION.to_string(),
        PromptKind::Ambiguity => AMBIGUITY_INSTRUCTION.to_string(),
        PromptKind::Select => format!("{SELECT_INSTRUCTION}\n{SELECT_GROUPING}"),
        PromptKind::Decontext => DECONTEXT_INSTRUCTION.to_string(),
        PromptKind::Vanilla => VANILLA_INSTRUCTION.to_string(),
    }
}

pub fn takes_demos(kind: PromptKind) -> bool {
    matches!(kind, PromptKind::Segment | PromptKind::Ambiguity | PromptKind::Select)
}

pub type PromptFields = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("missing prompt field {0:?}")]
    MissingField(String),
    #[error("{0} prompts take no demonstrations")]
    DemosNotAllowed(PromptKind),
    #[error("demonstration for {demo} used in a {prompt} prompt")]
    DemoKindMismatch { demo: PromptKind, prompt: PromptKind },
    #[error("demo store line {line}: {reason}")]
    DemoStore { line: usize, reason: String },
}

/// A worked example shown to the model before the real input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoInstance {
    pub kind: PromptKind,
    pub input_fields: PromptFields,
    pub expected_output: String,
    /// Item list `expected_output` encodes, for list-shaped kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_items: Option<Vec<String>>,
}

impl DemoInstance {
    pub fn validate(&self) -> Result<(), PromptError> {
        if !takes_demos(self.kind) {
            return Err(PromptError::DemosNotAllowed(self.kind));
        }
        for field in required_fields(self.kind) {
            if !self.input_fields.contains_key(field) {
                return Err(PromptError::MissingField(field.to_string()));
            }
        }
        Ok(())
    }

    fn render(&self) -> Result<String, PromptError> {
        let mut text = render_fields(self.kind, &self.input_fields)?;
        if self.kind == PromptKind::Select {
            text.push('\n');
        } else {
            text.push(' ');
        }
        text.push_str(OUTPUT_CUE);
        text.push(' ');
        text.push_str(&self.expected_output);
        Ok(text)
    }
}

/// Demonstrations keyed by kind, kept in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemoStore {
    demos: Vec<DemoInstance>,
}

const BUNDLED_DEMOS: &str = include_str!("../../fixtures/demos.jsonl");

impl DemoStore {
    pub fn from_jsonl(text: &str) -> Result<Self, PromptError> {
        let mut demos = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let demo: DemoInstance = serde_json::from_str(line)
                .map_err(|e| PromptError::DemoStore { line: i + 1, reason: e.to_string() })?;
            demo.validate()
                .map_err(|e| PromptError::DemoStore { line: i + 1, reason: e.to_string() })?;
            demos.push(demo);
        }
        Ok(DemoStore { demos })
    }

    /// The demonstrations shipped with the crate: ten per selection stage.
    pub fn bundled() -> &'static DemoStore {
        static STORE: OnceLock<DemoStore> = OnceLock::new();
        STORE.get_or_init(|| DemoStore::from_jsonl(BUNDLED_DEMOS).expect("bundled demo store is valid"))
    }

    pub fn all(&self) -> &[DemoInstance] {
        &self.demos
    }

    /// First `n` demos of `kind` (fewer if the store has fewer).
    pub fn take(&self, kind: PromptKind, n: usize) -> Vec<&DemoInstance> {
        self.demos.iter().filter(|d| d.kind == kind).take(n).collect()
    }

    pub fn count(&self, kind: PromptKind) -> usize {
        self.demos.iter().filter(|d| d.kind == kind).count()
    }
}

/// A rendered prompt split into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub header: String,
    /// Guide line, separators and demos; empty without demos.
    pub demo_block: String,
    pub input_block: String,
    pub output_cue: &'static str,
}

impl PromptTemplate {
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push_str("\n\n");
        out.push_str(&self.demo_block);
        out.push_str(SEPARATOR);
        out.push_str("\nInput:\n");
        out.push_str(&self.input_block);
        out.push('\n');
        out.push_str(self.output_cue);
        out
    }
}

fn render_fields(kind: PromptKind, fields: &PromptFields) -> Result<String, PromptError> {
    let mut lines: Vec<Vec<String>> = Vec::new();
    for (name, line) in layout(kind) {
        let value = fields.get(*name).ok_or_else(|| PromptError::MissingField((*name).to_string()))?;
        if lines.len() <= *line {
            lines.push(Vec::new());
        }
        lines[*line].push(format!("{name}: {{{value}}}"));
    }
    let closing = matches!(kind, PromptKind::Select | PromptKind::Decontext | PromptKind::Vanilla);
    Ok(lines
        .into_iter()
        .map(|parts| {
            let mut line = parts.join("; ");
            if closing {
                line.push(';');
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn build(kind: PromptKind, inputs: &PromptFields, demos: &[&DemoInstance]) -> Result<PromptTemplate, PromptError> {
    if !takes_demos(kind) && !demos.is_empty() {
        return Err(PromptError::DemosNotAllowed(kind));
    }
    let mut demo_block = String::new();
    if !demos.is_empty() {
        demo_block.push_str(DEMO_GUIDE);
        demo_block.push('\n');
        demo_block.push_str(SEPARATOR);
        demo_block.push('\n');
        for demo in demos {
            if demo.kind != kind {
                return Err(PromptError::DemoKindMismatch { demo: demo.kind, prompt: kind });
            }
            demo_block.push_str(&demo.render()?);
            demo_block.push('\n');
        }
    }
    Ok(PromptTemplate {
        kind,
        header: instruction(kind),
        demo_block,
        input_block: render_fields(kind, inputs)?,
        output_cue: OUTPUT_CUE,
    })
}

/// Renders a prompt. Demos appear in the order given.
pub fn render(kind: PromptKind, inputs: &PromptFields, demos: &[&DemoInstance]) -> Result<String, PromptError> {
    build(kind, inputs, demos).map(|t| t.text())
}

/// `[a] [b] [c]`
pub fn bracket_list<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().map(|s| format!("[{}]", s.as_ref())).collect::<Vec<_>>().join(" ")
}

/// `(1) [a] (2) [b]`
pub fn numbered_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("({}) [{}]", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `(1) [r1] (Background) [r2] (2) [r3]`: relevant EDUs grouped under the
/// number of the ambiguous EDU they clarify.
pub fn numbered_groups(groups: &[Vec<(String, Option<RelationLabel>)>]) -> String {
    let mut parts = Vec::new();
    for (i, group) in groups.iter().enumerate() {
        parts.push(format!("({})", i + 1));
        for (text, label) in group {
            parts.push(format!("[{text}]"));
            if let Some(label) = label {
                parts.push(format!("({})", label.coarse));
            }
        }
    }
    parts.join(" ")
}

/// Inverse of [`numbered_groups`] (and of [`numbered_list`], whose groups
/// each hold one item): `(n)` starts group n, `[..]` is an item and any
/// other `(..)` labels the item before it.
pub fn parse_numbered_groups(text: &str) -> Vec<Vec<(String, Option<String>)>> {
    let mut groups: Vec<Vec<(String, Option<String>)>> = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let (open, close) = match chars[i] {
            '[' => ('[', ']'),
            '(' => ('(', ')'),
            _ => {
                i += 1;
                continue;
            }
        };
        let mut depth = 0;
        let mut j = i;
        while j < chars.len() {
            if chars[j] == open {
                depth += 1;
            } else if chars[j] == close {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            j += 1;
        }
        let inner: String = chars[i + 1..j.min(chars.len())].iter().collect();
        if open == '[' {
            if groups.is_empty() {
                groups.push(Vec::new());
            }
            groups.last_mut().unwrap().push((inner, None));
        } else if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_digit()) {
            groups.push(Vec::new());
        } else if let Some(last) = groups.last_mut().and_then(|g| g.last_mut()) {
            last.1 = Some(inner);
        }
        i = j + 1;
    }
    groups
}

/// Typed front end over [`render`] for the pipeline.
#[derive(Debug, Clone)]
pub struct PromptBuilder<'a> {
    pub demos: &'a DemoStore,
    pub demos_per_stage: usize,
}

fn fields(pairs: &[(&str, String)]) -> PromptFields {
    pairs.iter().map(|(k, v)| ((*k).to_string(), v.clone())).collect()
}

impl<'a> PromptBuilder<'a> {
    pub fn new(demos: &'a DemoStore, demos_per_stage: usize) -> Self {
        PromptBuilder { demos, demos_per_stage }
    }

    fn demos_for(&self, kind: PromptKind) -> Vec<&'a DemoInstance> {
        self.demos.take(kind, self.demos_per_stage)
    }

    pub fn segment(&self, text: &str) -> Result<String, PromptError> {
        render(
            PromptKind::Segment,
            &fields(&[(F_SENTENCE, text.to_string())]),
            &self.demos_for(PromptKind::Segment),
        )
    }

    pub fn ambiguity<S: AsRef<str>>(&self, sentence: &str, edus: &[S]) -> Result<String, PromptError> {
        render(
            PromptKind::Ambiguity,
            &fields(&[(F_SENTENCE, sentence.to_string()), (F_EDUS, bracket_list(edus))]),
            &self.demos_for(PromptKind::Ambiguity),
        )
    }

    pub fn select<S: AsRef<str>, T: AsRef<str>>(
        &self,
        paragraph: &[S],
        paragraph_edus: &[T],
        sentence: &str,
        ambiguous: &[T],
    ) -> Result<String, PromptError> {
        let paragraph = paragraph.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(" ");
        render(
            PromptKind::Select,
            &fields(&[
                (F_PARAGRAPH, paragraph),
                (F_PARAGRAPH_EDUS, bracket_list(paragraph_edus)),
                (F_SENTENCE, sentence.to_string()),
                (F_AMBIGUOUS, bracket_list(ambiguous)),
            ]),
            &self.demos_for(PromptKind::Select),
        )
    }

    /// `plan` lists ambiguous EDUs in sentence order, each with its relevant EDUs.
    pub fn decontext(
        &self,
        sentence: &str,
        plan: &[(String, Vec<(String, Option<RelationLabel>)>)],
    ) -> Result<String, PromptError> {
        let ambiguous: Vec<&str> = plan.iter().map(|(a, _)| a.as_str()).collect();
        let groups: Vec<_> = plan.iter().map(|(_, g)| g.clone()).collect();
        render(
            PromptKind::Decontext,
            &fields(&[
                (F_SENTENCE, sentence.to_string()),
                (F_AMBIGUOUS, numbered_list(&ambiguous)),
                (F_RELEVANT, numbered_groups(&groups)),
            ]),
            &[],
        )
    }

    pub fn vanilla<S: AsRef<str>>(&self, sentence: &str, context: &[S]) -> Result<String, PromptError> {
        let context = context.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(" ");
        render(
            PromptKind::Vanilla,
            &fields(&[(F_SENTENCE, sentence.to_string()), (F_CONTEXT, context)]),
            &[],
        )
    }
}

/// Recovers the input fields of a prompt rendered by this module.
///
/// Looks at the last `Input:` block and splits it on the known labels of
/// `kind`. Returns `None` when the prompt does not have that shape.
pub fn extract_input_fields(prompt: &str, kind: PromptKind) -> Option<PromptFields> {
    let start = prompt.rfind("\nInput:\n")? + "\nInput:\n".len();
    let block = &prompt[start..];
    let end = block.rfind(&format!("\n{OUTPUT_CUE}")).unwrap_or(block.len());
    let block = &block[..end];
    let labels = required_fields(kind);
    let mut out = PromptFields::new();
    let first = format!("{}: {{", labels[0]);
    let mut cursor = block.find(&first)? + first.len();
    for (i, label) in labels.iter().enumerate() {
        let value_end = if let Some(next) = labels.get(i + 1) {
            let marker = format!("{next}: {{");
            let mut search = cursor;
            loop {
                let pos = search + block[search..].find(&marker)?;
                let before = &block[..pos];
                if let Some(stripped) = before.strip_suffix("}; ").or_else(|| before.strip_suffix("};\n")) {
                    let value_end = stripped.len();
                    let next_cursor = pos + marker.len();
                    out.insert((*label).to_string(), block[cursor..value_end].to_string());
                    cursor = next_cursor;
                    break None;
                }
                search = pos + marker.len();
            }
        } else {
            Some(block.rfind('}')?)
        };
        if let Some(end) = value_end {
            if end < cursor {
                return None;
            }
            out.insert((*label).to_string(), block[cursor..end].to_string());
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::CoarseRelation;

    fn demo_fixture(kind: PromptKind, i: usize) -> DemoInstance {
        let mut input_fields = PromptFields::new();
        for f in required_fields(kind) {
            input_fields.insert(f.to_string(), format!("{f} value {i}"));
        }
        DemoInstance { kind, input_fields, expected_output: format!("[out {i}]"), expected_items: None }
    }

    fn one(name: &str, v: &str) -> PromptFields {
        fields(&[(name, v.to_string())])
    }

    #[test]
    fn decontext_prompt_carries_instruction_verbatim() {
        let b = PromptBuilder::new(DemoStore::bundled(), 10);
        let p = b
            .decontext(
                "She has been most notably portrayed by Eileen Davidson,",
                &[("She has been most notably portrayed by Eileen Davidson,".into(), vec![])],
            )
            .unwrap();
        assert!(p.contains(
            "rewrite the ambiguous sentence to be understandable by enriching each ambiguous EDU with its relevant EDUs"
        ));
        assert!(p.starts_with(DECONTEXT_INSTRUCTION));
        assert!(!p.contains(DEMO_GUIDE));
        assert!(p.ends_with("\nOutput:"));
    }

    #[test]
    fn segment_without_demos_has_single_separator() {
        let p = render(PromptKind::Segment, &one(F_SENTENCE, "Paris is the capital of France."), &[]).unwrap();
        assert_eq!(p.matches(SEPARATOR).count(), 1);
        assert!(!p.contains(DEMO_GUIDE));
        assert_eq!(
            p,
            format!("{SEGMENT_INSTRUCTION}\n\n{SEPARATOR}\nInput:\nSentence: {{Paris is the capital of France.}}\nOutput:")
        );
    }

    #[test]
    fn select_with_ten_demos_has_ten_output_lines() {
        let demos: Vec<DemoInstance> = (0..10).map(|i| demo_fixture(PromptKind::Select, i)).collect();
        let refs: Vec<&DemoInstance> = demos.iter().collect();
        let mut inputs = PromptFields::new();
        for f in required_fields(PromptKind::Select) {
            inputs.insert(f.into(), "x".into());
        }
        let t = build(PromptKind::Select, &inputs, &refs).unwrap();
        assert_eq!(t.demo_block.lines().filter(|l| l.contains(OUTPUT_CUE)).count(), 10);
        assert_eq!(t.demo_block.matches(SEPARATOR).count(), 1);
        assert_eq!(t.text().matches(SEPARATOR).count(), 2);
        // demo order preserved
        let first = t.demo_block.find("value 0").unwrap();
        let last = t.demo_block.find("value 9").unwrap();
        assert!(first < last);
        assert!(t.header.contains(SELECT_GROUPING));
    }

    #[test]
    fn errors() {
        assert_eq!(
            render(PromptKind::Ambiguity, &one(F_SENTENCE, "x"), &[]),
            Err(PromptError::MissingField("EDUs".into()))
        );
        let d = demo_fixture(PromptKind::Segment, 0);
        assert_eq!(
            render(PromptKind::Vanilla, &fields(&[(F_SENTENCE, "a".into()), (F_CONTEXT, "b".into())]), &[&d]),
            Err(PromptError::DemosNotAllowed(PromptKind::Vanilla))
        );
        assert!(matches!(
            render(PromptKind::Ambiguity, &fields(&[(F_SENTENCE, "a".into()), (F_EDUS, "[a]".into())]), &[&d]),
            Err(PromptError::DemoKindMismatch { .. })
        ));
    }

    #[test]
    fn vanilla_with_empty_context() {
        let b = PromptBuilder::new(DemoStore::bundled(), 10);
        let p = b.vanilla::<String>("It launched on March 24, 2017.", &[]).unwrap();
        assert!(p.contains("Context: {};"));
        assert!(p.contains(VANILLA_INSTRUCTION));
    }

    #[test]
    fn substitution_is_literal() {
        let tricky = "a {b} $1 \\n ${x} }; EDUs: {";
        let p = render(PromptKind::Segment, &one(F_SENTENCE, tricky), &[]).unwrap();
        assert!(p.contains(&format!("Sentence: {{{tricky}}}")));
    }

    #[test]
    fn numbered_groups_format() {
        let groups = vec![
            vec![("Ashley Abbott is a fictional character".to_string(), Some(RelationLabel::coarse(CoarseRelation::Background)))],
            vec![("until Davidson's return in 1999".to_string(), None), ("x".to_string(), None)],
        ];
        assert_eq!(
            numbered_groups(&groups),
            "(1) [Ashley Abbott is a fictional character] (Background) (2) [until Davidson's return in 1999] [x]"
        );
    }

    #[test]
    fn numbered_groups_round_trip() {
        let groups = vec![
            vec![("a [x] b".to_string(), Some(RelationLabel::coarse(CoarseRelation::Temporal))), ("c".to_string(), None)],
            vec![],
            vec![("d (2) e".to_string(), None)],
        ];
        let parsed = parse_numbered_groups(&numbered_groups(&groups));
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0], vec![("a [x] b".to_string(), Some("Temporal".to_string())), ("c".to_string(), None)]);
        assert!(parsed[1].is_empty());
        assert_eq!(parsed[2][0].0, "d (2) e");
        let flat = parse_numbered_groups(&numbered_list(&["p", "q"]));
        assert_eq!(flat, vec![vec![("p".to_string(), None)], vec![("q".to_string(), None)]]);
    }

    #[test]
    fn extract_fields_round_trip() {
        let b = PromptBuilder::new(DemoStore::bundled(), 3);
        let p = b
            .select(
                &["Ashley Abbott is a character.", "She was created in 1982."],
                &["Ashley Abbott is a character.", "She was created in 1982."],
                "She has been portrayed by Eileen Davidson; who knew?",
                &["She has been portrayed by Eileen Davidson;"],
            )
            .unwrap();
        let f = extract_input_fields(&p, PromptKind::Select).unwrap();
        assert_eq!(f[F_SENTENCE], "She has been portrayed by Eileen Davidson; who knew?");
        assert_eq!(f[F_AMBIGUOUS], "[She has been portrayed by Eileen Davidson;]");
        assert_eq!(f[F_PARAGRAPH], "Ashley Abbott is a character. She was created in 1982.");

        let p = b.vanilla("S.", &["C1.", "C2."]).unwrap();
        let f = extract_input_fields(&p, PromptKind::Vanilla).unwrap();
        assert_eq!(f[F_SENTENCE], "S.");
        assert_eq!(f[F_CONTEXT], "C1. C2.");
        assert!(extract_input_fields("no input here", PromptKind::Segment).is_none());
    }

    #[test]
    fn bundled_store_has_ten_demos_per_selection_kind() {
        let store = DemoStore::bundled();
        assert_eq!(store.count(PromptKind::Segment), 10);
        assert_eq!(store.count(PromptKind::Ambiguity), 10);
        assert_eq!(store.count(PromptKind::Select), 10);
        assert_eq!(store.count(PromptKind::Decontext), 0);
        assert_eq!(store.count(PromptKind::Vanilla), 0);
        assert_eq!(store.take(PromptKind::Segment, 3).len(), 3);
    }

    #[test]
    fn bundled_demos_round_trip_through_parsers() {
        for demo in DemoStore::bundled().all() {
            match demo.kind {
                PromptKind::Select => {
                    let amb = parse_edu_list(&demo.input_fields[F_AMBIGUOUS]).unwrap().items;
                    let map = parse_relevant_map(&demo.expected_output, &amb).unwrap();
                    assert!(!map.flat_assignment, "{}", demo.expected_output);
                    let expected: serde_json::Map<String, serde_json::Value> =
                        serde_json::from_str(&demo.expected_output).unwrap();
                    assert_eq!(map.groups.len(), amb.len());
                    for (a, items) in &map.groups {
                        let want = expected[a].as_array().unwrap();
                        assert_eq!(items.len(), want.len());
                        for (item, raw) in items.iter().zip(want) {
                            let (text, _) = split_label(raw.as_str().unwrap());
                            assert_eq!(item.text, text);
                            assert!(item.relation.is_some(), "demo label must parse: {raw}");
                        }
                    }
                }
                _ => {
                    let parsed = parse_edu_list(&demo.expected_output).unwrap();
                    assert_eq!(Some(&parsed.items), demo.expected_items.as_ref(), "{}", demo.expected_output);
                }
            }
        }
    }

    #[test]
    fn segment_demos_partition_their_sentence() {
        for demo in DemoStore::bundled().take(PromptKind::Segment, 10) {
            let items = demo.expected_items.as_ref().unwrap();
            assert_eq!(items.join(" "), demo.input_fields[F_SENTENCE]);
        }
    }
}
