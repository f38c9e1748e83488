//! Per-record orchestration: segmentation, ambiguity detection, relevant
//! EDU selection and the planned rewrite, plus the single-call baseline.
//!
//! Stage order is fixed by the types: [`Pipeline::select_content`] yields a
//! [`ContentSelection`], which is the only input [`Pipeline::plan_and_rewrite`]
//! accepts besides the record.

mod run;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{prompt_digest, BackendError, CompletionBackend, CompletionRequest, PromptKind};
use crate::clock::Instant;
use crate::prompting::{
    parse_ambiguous_list, parse_relevant_map, parse_rewrite, repair_reask, DemoStore, ParseError, PromptBuilder,
    PromptError, RewriteOutcome,
};
use crate::segmenter::{segment, segment_sources, SegmentationOutput};
use crate::text::{longest_common_substring, normalize_text, same_text};
use crate::types::{
    AmbiguousEdu, ContentSelection, DecontextResult, Edu, EduOrigin, Provenance, RelevantEdu, SelectionError,
    SourceRecord, Status,
};

pub use run::{read_results, run_dataset, RunManifest, RunOptions, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionMode {
    /// One SELECT call covering every ambiguous EDU.
    Batched,
    /// One SELECT call per ambiguous EDU.
    PerAmbiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SegmentationCalls {
    /// Sentence and context segmented in separate calls.
    Split,
    /// Sentence and context segmented in one call.
    Unified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewriteMode {
    /// One rewrite call presenting the whole plan.
    Single,
    /// One rewrite call per ambiguous EDU, feeding each output forward.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunMode {
    Ecsp,
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: RunMode,
    pub selection_mode: SelectionMode,
    pub segmentation_calls: SegmentationCalls,
    pub rewrite_mode: RewriteMode,
    pub demos_per_stage: usize,
    pub apply_gain_filter: bool,
    pub max_repairs: u32,
    pub parallel_records: usize,
    pub model_id: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Record wall time per result. Off by default so result files are
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: RunMode::Ecsp,
            selection_mode: SelectionMode::Batched,
            segmentation_calls: SegmentationCalls::Unified,
            rewrite_mode: RewriteMode::Single,
            demos_per_stage: 10,
            apply_gain_filter: true,
            max_repairs: 1,
            parallel_records: 1,
            model_id: "mock".into(),
            max_output_tokens: crate::backend::DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("parallel_records must be at least 1")]
    NoWorkers,
    #[error("max_output_tokens must be positive")]
    NoOutputTokens,
    #[error("temperature must be a non-negative number")]
    BadTemperature,
    #[error("model id is empty")]
    EmptyModel,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallel_records == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if self.max_output_tokens == 0 {
            return Err(ConfigError::NoOutputTokens);
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(ConfigError::BadTemperature);
        }
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::EmptyModel);
        }
        Ok(())
    }

    /// Digest of everything that can change results: the config minus
    /// worker count and timing, plus the demonstrations in use.
    pub fn digest(&self, demos: &DemoStore) -> String {
        let mut view = self.clone();
        view.parallel_records = 1;
        view.record_timing = false;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&view).expect("config serializes"));
        for kind in PromptKind::ALL {
            for d in demos.take(kind, self.demos_per_stage) {
                h.update(serde_json::to_vec(d).expect("demo serializes"));
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageCause {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("invalid record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} stage failed: {cause}")]
pub struct StageError {
    pub stage: PromptKind,
    pub cause: StageCause,
}

impl StageError {
    fn new(stage: PromptKind, cause: impl Into<StageCause>) -> Self {
        StageError { stage, cause: cause.into() }
    }

    pub fn is_fatal(&self) -> bool {
        matches!(&self.cause, StageCause::Backend(e) if e.is_fatal())
    }
}

/// Backend access for one record: builds requests from the config, runs
/// the repair round and accumulates provenance.
pub struct Session<'a> {
    backend: &'a dyn CompletionBackend,
    config: &'a PipelineConfig,
    prompts: PromptBuilder<'a>,
    pub provenance: Provenance,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn CompletionBackend, config: &'a PipelineConfig, demos: &'a DemoStore) -> Self {
        Session {
            backend,
            config,
            prompts: PromptBuilder::new(demos, config.demos_per_stage),
            provenance: Provenance { backend_id: backend.id(), ..Provenance::default() },
        }
    }

    pub fn prompts(&self) -> &PromptBuilder<'a> {
        &self.prompts
    }

    fn request(&self, kind: PromptKind, prompt: String) -> CompletionRequest {
        let mut req = CompletionRequest::new(kind, prompt, self.config.model_id.clone());
        req.max_output_tokens = self.config.max_output_tokens;
        req.temperature = self.config.temperature;
        req
    }

    fn send(&mut self, req: &CompletionRequest) -> Result<String, BackendError> {
        self.provenance.calls += 1;
        self.provenance.prompt_digests.push(prompt_digest(&req.prompt));
        let resp = self.backend.complete(req)?;
        if resp.from_cache {
            self.provenance.cache_hits += 1;
        }
        Ok(resp.text)
    }

    /// One backend call, returning the raw text.
    pub fn call(&mut self, kind: PromptKind, prompt: String) -> Result<String, BackendError> {
        let req = self.request(kind, prompt);
        self.send(&req)
    }

    /// Calls and parses; on a parse failure re-asks with a format reminder
    /// up to `max_repairs` times. The outer error is a backend failure, the
    /// inner one the last parse failure.
    pub fn call_parsed<T>(
        &mut self,
        kind: PromptKind,
        prompt: String,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<Result<T, ParseError>, BackendError> {
        let mut req = self.request(kind, prompt);
        let mut repairs = 0;
        loop {
            let text = self.send(&req)?;
            match parse(&text) {
                Ok(v) => return Ok(Ok(v)),
                Err(e) if repairs < self.config.max_repairs => {
                    repairs += 1;
                    self.provenance.repairs += 1;
                    req = repair_reask(&req, &e);
                }
                Err(e) => return Ok(Err(e)),
            }
        }
    }
}

/// Index of the EDU `item` refers to: normalized equality, then
/// containment, then the longest common substring covering at least 80%
/// of the item.
pub fn match_edu(item: &str, edus: &[Edu]) -> Option<usize> {
    let key = |s: &str| {
        normalize_text(s)
            .to_lowercase()
            .trim_end_matches(|c: char| c.is_ascii_punctuation())
            .trim_start_matches(|c: char| c.is_ascii_punctuation())
            .trim()
            .to_string()
    };
    let item_key = key(item);
    if item_key.is_empty() {
        return None;
    }
    let keys: Vec<String> = edus.iter().map(|e| key(&e.text)).collect();
    if let Some(i) = keys.iter().position(|k| *k == item_key) {
        return Some(i);
    }
    if item_key.chars().count() >= 4 {
        if let Some(i) = keys.iter().position(|k| k.contains(&item_key) || (k.chars().count() >= 4 && item_key.contains(k.as_str()))) {
            return Some(i);
        }
    }
    let a: Vec<char> = item_key.chars().collect();
    let mut best: Option<(usize, usize)> = None;
    for (i, k) in keys.iter().enumerate() {
        let b: Vec<char> = k.chars().collect();
        let (len, _, _) = longest_common_substring(&a, &b);
        if len as f64 >= 0.8 * a.len() as f64 && best.map_or(true, |(_, l)| len > l) {
            best = Some((i, len));
        }
    }
    best.map(|(i, _)| i)
}

fn rewrite_parser(text: &str) -> Result<String, ParseError> {
    match parse_rewrite(text) {
        RewriteOutcome::Text(t) => Ok(t),
        RewriteOutcome::Empty => Err(ParseError::Empty),
        RewriteOutcome::Declined(t) => Err(ParseError::Declined(t)),
    }
}

/// The configured pipeline bound to a backend.
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub demos: &'a DemoStore,
    backend: &'a dyn CompletionBackend,
}

impl<'a> Pipeline<'a> {
    /// Uses the bundled demonstrations.
    pub fn new(config: PipelineConfig, backend: &'a dyn CompletionBackend) -> Self {
        Pipeline { config, demos: DemoStore::bundled(), backend }
    }

    pub fn with_demos(config: PipelineConfig, backend: &'a dyn CompletionBackend, demos: &'a DemoStore) -> Self {
        Pipeline { config, demos, backend }
    }

    pub fn backend(&self) -> &'a dyn CompletionBackend {
        self.backend
    }

    pub fn session(&self) -> Session<'_> {
        Session::new(self.backend, &self.config, self.demos)
    }

    fn segment_record(
        &self,
        record: &SourceRecord,
        session: &mut Session<'_>,
    ) -> Result<(SegmentationOutput, Vec<Edu>), BackendError> {
        if record.context.is_empty() {
            return Ok((segment(&record.sentence, EduOrigin::Sentence, session)?, Vec::new()));
        }
        let context_sources: Vec<(EduOrigin, &str)> = record
            .context
            .iter()
            .enumerate()
            .map(|(i, c)| (EduOrigin::Context(i), c.as_str()))
            .collect();
        let (sentence, context) = match self.config.segmentation_calls {
            SegmentationCalls::Unified => {
                let mut sources = context_sources;
                sources.push((EduOrigin::Sentence, record.sentence.as_str()));
                let mut outs = segment_sources(&sources, session)?;
                let sentence = outs.pop().expect("one output per source");
                (sentence, outs)
            }
            SegmentationCalls::Split => {
                let sentence = segment(&record.sentence, EduOrigin::Sentence, session)?;
                (sentence, segment_sources(&context_sources, session)?)
            }
        };
        if sentence.degraded || context.iter().any(|c| c.degraded) {
            session.provenance.degraded = true;
        }
        let mut context_edus: Vec<Edu> = context.into_iter().flat_map(|o| o.edus).collect();
        for (i, e) in context_edus.iter_mut().enumerate() {
            e.ordinal = i;
        }
        Ok((sentence, context_edus))
    }

    /// Content selection with a fresh session; see [`Pipeline::select_content_in`].
    pub fn select_content(&self, record: &SourceRecord) -> Result<ContentSelection, StageError> {
        self.select_content_in(record, &mut self.session())
    }

    /// Segments sentence and context, identifies ambiguous sentence EDUs and
    /// selects relevant context EDUs for each.
    ///
    /// Returned strings are matched back to EDUs with [`match_edu`];
    /// unmatched ones are dropped with a warning. With `apply_gain_filter`,
    /// relevant EDUs whose relation carries no gain are removed. SELECT is
    /// skipped when nothing is ambiguous or the context is empty.
    pub fn select_content_in(
        &self,
        record: &SourceRecord,
        session: &mut Session<'_>,
    ) -> Result<ContentSelection, StageError> {
        record
            .validate()
            .map_err(|e| StageError::new(PromptKind::Segment, StageCause::Record(e.to_string())))?;
        let (sentence_seg, edus_context) =
            self.segment_record(record, session).map_err(|e| StageError::new(PromptKind::Segment, e))?;
        if sentence_seg.degraded {
            session.provenance.degraded = true;
        }
        let edus_sentence = sentence_seg.edus;

        let texts: Vec<&str> = edus_sentence.iter().map(|e| e.text.as_str()).collect();
        let prompt = session
            .prompts()
            .ambiguity(&record.sentence, &texts)
            .map_err(|e| StageError::new(PromptKind::Ambiguity, e))?;
        let listed = session
            .call_parsed(PromptKind::Ambiguity, prompt, parse_ambiguous_list)
            .map_err(|e| StageError::new(PromptKind::Ambiguity, e))?
            .map_err(|e| StageError::new(PromptKind::Ambiguity, e))?;
        let mut ambiguous_idx: Vec<usize> = Vec::new();
        for item in &listed.items {
            match match_edu(item, &edus_sentence) {
                Some(i) => ambiguous_idx.push(i),
                None => log::warn!("record {}: ambiguous EDU {item:?} not found in sentence; dropped", record.id),
            }
        }
        ambiguous_idx.sort_unstable();
        ambiguous_idx.dedup();

        let mut ambiguous: Vec<AmbiguousEdu> =
            ambiguous_idx.iter().map(|&edu| AmbiguousEdu { edu, relevant: Vec::new() }).collect();
        if !ambiguous.is_empty() && !edus_context.is_empty() {
            self.select_relevant(record, session, &edus_sentence, &edus_context, &mut ambiguous)?;
        }
        let calls = session.provenance.calls;
        ContentSelection::new(edus_sentence, edus_context, ambiguous, calls, self.config.apply_gain_filter)
            .map_err(|e| StageError::new(PromptKind::Select, e))
    }

    fn select_relevant(
        &self,
        record: &SourceRecord,
        session: &mut Session<'_>,
        edus_sentence: &[Edu],
        edus_context: &[Edu],
        ambiguous: &mut [AmbiguousEdu],
    ) -> Result<(), StageError> {
        let context_texts: Vec<&str> = edus_context.iter().map(|e| e.text.as_str()).collect();
        let amb_texts: Vec<String> = ambiguous.iter().map(|a| edus_sentence[a.edu].text.clone()).collect();
        let batches: Vec<Vec<usize>> = match self.config.selection_mode {
            SelectionMode::Batched => vec![(0..ambiguous.len()).collect()],
            SelectionMode::PerAmbiguous => (0..ambiguous.len()).map(|i| vec![i]).collect(),
        };
        let stage_err = |e: StageCause| StageError { stage: PromptKind::Select, cause: e };
        for batch in batches {
            let batch_texts: Vec<String> = batch.iter().map(|&i| amb_texts[i].clone()).collect();
            let prompt = session
                .prompts()
                .select(&record.context, &context_texts, &record.sentence, &batch_texts.iter().map(String::as_str).collect::<Vec<_>>())
                .map_err(|e| stage_err(e.into()))?;
            let map = session
                .call_parsed(PromptKind::Select, prompt, |t| parse_relevant_map(t, &batch_texts))
                .map_err(|e| stage_err(e.into()))?
                .map_err(|e| stage_err(e.into()))?;
            if map.flat_assignment && batch.len() > 1 {
                session.provenance.flat_assignment = true;
            }
            for (&slot, (_, items)) in batch.iter().zip(map.groups) {
                let mut relevant: Vec<RelevantEdu> = Vec::new();
                for item in items {
                    let Some(edu) = match_edu(&item.text, edus_context) else {
                        log::warn!("record {}: relevant EDU {:?} not found in context; dropped", record.id, item.text);
                        continue;
                    };
                    if self.config.apply_gain_filter && item.relation.as_ref().is_some_and(|l| !l.gain()) {
                        continue;
                    }
                    if !relevant.iter().any(|r| r.edu == edu) {
                        relevant.push(RelevantEdu { edu, relation: item.relation });
                    }
                }
                relevant.sort_by_key(|r| r.edu);
                ambiguous[slot].relevant = relevant;
            }
        }
        Ok(())
    }

    fn rewrite_call(&self, session: &mut Session<'_>, kind: PromptKind, prompt: String) -> Result<Option<String>, StageError> {
        Ok(session
            .call_parsed(kind, prompt, rewrite_parser)
            .map_err(|e| StageError::new(kind, e))?
            .ok())
    }

    /// Rewrite with a fresh session; see [`Pipeline::plan_and_rewrite_in`].
    pub fn plan_and_rewrite(&self, record: &SourceRecord, selection: ContentSelection) -> Result<DecontextResult, StageError> {
        let mut session = self.session();
        self.plan_and_rewrite_in(record, selection, &mut session)
    }

    /// Orders ambiguous EDUs by sentence position and rewrites the sentence
    /// with every ambiguous EDU and its relevant EDUs presented in that
    /// order. No call is made when nothing is ambiguous.
    pub fn plan_and_rewrite_in(
        &self,
        record: &SourceRecord,
        selection: ContentSelection,
        session: &mut Session<'_>,
    ) -> Result<DecontextResult, StageError> {
        let finish = |rewritten: String, status: Status, selection: ContentSelection, session: &mut Session<'_>| DecontextResult {
            record_id: record.id.clone(),
            rewritten,
            status,
            selection: Some(selection),
            provenance: std::mem::take(&mut session.provenance),
        };
        if selection.ambiguous.is_empty() {
            return Ok(finish(record.sentence.clone(), Status::UnchangedNoAmbiguity, selection, session));
        }
        let plan: Vec<(String, Vec<(String, Option<crate::relation::RelationLabel>)>)> = selection
            .ambiguous
            .iter()
            .map(|a| {
                let rel = selection.relevant_edus(a).map(|(e, l)| (e.text.clone(), l.cloned())).collect();
                (selection.edus_sentence[a.edu].text.clone(), rel)
            })
            .collect();
        let output = match self.config.rewrite_mode {
            RewriteMode::Single => {
                let prompt = session
                    .prompts()
                    .decontext(&record.sentence, &plan)
                    .map_err(|e| StageError::new(PromptKind::Decontext, e))?;
                self.rewrite_call(session, PromptKind::Decontext, prompt)?
            }
            RewriteMode::Iterative => {
                let mut current = Some(record.sentence.clone());
                for step in &plan {
                    let Some(text) = current.clone() else { break };
                    let prompt = session
                        .prompts()
                        .decontext(&text, std::slice::from_ref(step))
                        .map_err(|e| StageError::new(PromptKind::Decontext, e))?;
                    current = self.rewrite_call(session, PromptKind::Decontext, prompt)?;
                }
                current
            }
        };
        let (rewritten, status) = classify(&record.sentence, output);
        Ok(finish(rewritten, status, selection, session))
    }

    /// The single-call baseline: sentence plus full context in one prompt.
    pub fn run_vanilla(&self, record: &SourceRecord) -> Result<DecontextResult, StageError> {
        let mut session = self.session();
        self.run_vanilla_in(record, &mut session)
    }

    fn run_vanilla_in(&self, record: &SourceRecord, session: &mut Session<'_>) -> Result<DecontextResult, StageError> {
        record
            .validate()
            .map_err(|e| StageError::new(PromptKind::Vanilla, StageCause::Record(e.to_string())))?;
        let prompt = session
            .prompts()
            .vanilla(&record.sentence, &record.context)
            .map_err(|e| StageError::new(PromptKind::Vanilla, e))?;
        let output = self.rewrite_call(session, PromptKind::Vanilla, prompt)?;
        let (rewritten, status) = classify(&record.sentence, output);
        Ok(DecontextResult {
            record_id: record.id.clone(),
            rewritten,
            status,
            selection: None,
            provenance: std::mem::take(&mut session.provenance),
        })
    }

    /// Runs one record in the configured mode. Stage failures become an
    /// `ERROR` result carrying the provenance gathered so far.
    pub fn process(&self, record: &SourceRecord) -> (DecontextResult, Option<StageError>) {
        let started = Instant::now();
        let mut session = self.session();
        let outcome = match self.config.mode {
            RunMode::Vanilla => self.run_vanilla_in(record, &mut session),
            RunMode::Ecsp => self
                .select_content_in(record, &mut session)
                .and_then(|sel| self.plan_and_rewrite_in(record, sel, &mut session)),
        };
        let (mut result, err) = match outcome {
            Ok(r) => (r, None),
            Err(e) => {
                let mut prov = std::mem::take(&mut session.provenance);
                prov.error = Some(e.to_string());
                (DecontextResult::error(record, prov), Some(e))
            }
        };
        if self.config.record_timing {
            result.provenance.wall_time_ms = Some(started.elapsed().as_millis() as u64);
        }
        (result, err)
    }
}

/// Status for a rewrite attempt. An output identical to the input (after
/// normalization) counts as infeasible: the model could not improve it.
fn classify(original: &str, output: Option<String>) -> (String, Status) {
    match output {
        Some(text) if !same_text(&text, original) => (text, Status::Decontextualised),
        Some(text) => (text, Status::Infeasible),
        None => (original.to_string(), Status::Infeasible),
    }
}

/// Content selection for one record with a fresh session.
pub fn select_content(
    record: &SourceRecord,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<ContentSelection, StageError> {
    Pipeline::new(config.clone(), backend).select_content(record)
}

pub fn plan_and_rewrite(
    record: &SourceRecord,
    selection: ContentSelection,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<DecontextResult, StageError> {
    Pipeline::new(config.clone(), backend).plan_and_rewrite(record, selection)
}

pub fn run_vanilla(
    record: &SourceRecord,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<DecontextResult, StageError> {
    Pipeline::new(config.clone(), backend).run_vanilla(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CountingBackend, MockBackend, ScriptedBackend};
    use crate::relation::CoarseRelation;

    fn eileen() -> SourceRecord {
        SourceRecord::new(
            "eileen",
            "She has been most notably portrayed by Eileen Davidson, who originated the role in June 1982 before departing in 1988.",
            vec![
                "Ashley Abbott is a fictional character from The Young and the Restless and The Bold and the Beautiful, two American soap operas on the CBS network.".into(),
                "The role was recast with Brenda Epperson until Davidson's return in 1999.".into(),
            ],
        )
    }

    #[test]
    fn default_config_is_unified_batched() {
        let c = PipelineConfig::default();
        assert_eq!(c.selection_mode, SelectionMode::Batched);
        assert_eq!(c.segmentation_calls, SegmentationCalls::Unified);
        assert_eq!(c.demos_per_stage, 10);
        assert!(c.apply_gain_filter);
        assert_eq!(c.max_repairs, 1);
        assert_eq!(c.max_output_tokens, 512);
        assert_eq!(c.temperature, 0.0);
        assert!(c.validate().is_ok());
        assert_eq!(PipelineConfig { parallel_records: 0, ..c.clone() }.validate(), Err(ConfigError::NoWorkers));
    }

    #[test]
    fn digest_ignores_worker_count() {
        let demos = DemoStore::bundled();
        let a = PipelineConfig::default();
        let b = PipelineConfig { parallel_records: 8, ..a.clone() };
        let c = PipelineConfig { apply_gain_filter: false, ..a.clone() };
        assert_eq!(a.digest(demos), b.digest(demos));
        assert_ne!(a.digest(demos), c.digest(demos));
    }

    #[test]
    fn match_edu_variants() {
        let edus: Vec<Edu> = ["She has been most notably portrayed by Eileen Davidson,", "who originated the role in June 1982"]
            .iter()
            .enumerate()
            .map(|(i, t)| Edu::unaligned(*t, i, EduOrigin::Sentence).unwrap())
            .collect();
        assert_eq!(match_edu("she has been most notably portrayed by Eileen Davidson", &edus), Some(0));
        assert_eq!(match_edu("originated the role", &edus), Some(1));
        assert_eq!(match_edu("who originated the role in june, 1982", &edus), Some(1));
        assert_eq!(match_edu("something else entirely", &edus), None);
        assert_eq!(match_edu("  ", &edus), None);
    }

    #[test]
    fn mock_end_to_end_uses_four_calls() {
        let backend = CountingBackend::new(MockBackend::new());
        let p = Pipeline::new(PipelineConfig::default(), &backend);
        let (r, err) = p.process(&eileen());
        assert!(err.is_none(), "{err:?}");
        assert_eq!(r.status, Status::Decontextualised, "{}", r.rewritten);
        assert_eq!(backend.calls(), 4);
        assert_eq!(r.provenance.calls, 4);
        assert_eq!(r.provenance.prompt_digests.len(), 4);
        assert!(r.rewritten.contains("Ashley Abbott"), "{}", r.rewritten);
    }

    #[test]
    fn split_mode_uses_five_calls() {
        let backend = CountingBackend::new(MockBackend::new());
        let config = PipelineConfig { segmentation_calls: SegmentationCalls::Split, ..PipelineConfig::default() };
        let (r, _) = Pipeline::new(config, &backend).process(&eileen());
        assert_eq!(backend.calls(), 5);
        assert_eq!(r.provenance.calls, 5);
    }

    #[test]
    fn per_ambiguous_call_bound() {
        let backend = CountingBackend::new(MockBackend::new());
        let config = PipelineConfig {
            segmentation_calls: SegmentationCalls::Split,
            selection_mode: SelectionMode::PerAmbiguous,
            ..PipelineConfig::default()
        };
        let p = Pipeline::new(config, &backend);
        let (r, _) = p.process(&eileen());
        let a = r.selection.as_ref().unwrap().ambiguous.len() as u64;
        assert!(a >= 1);
        assert_eq!(backend.calls(), 2 + 1 + a + 1);
    }

    #[test]
    fn no_ambiguity_means_no_rewrite_call() {
        let backend = CountingBackend::new(MockBackend::new());
        let record = SourceRecord::new("paris", "Paris is the capital of France.", vec!["France is in Europe.".into()]);
        let (r, _) = Pipeline::new(PipelineConfig::default(), &backend).process(&record);
        assert_eq!(r.status, Status::UnchangedNoAmbiguity);
        assert_eq!(r.rewritten, record.sentence);
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn vanilla_is_one_call_and_echo_is_infeasible() {
        let backend = CountingBackend::new(MockBackend::new());
        let config = PipelineConfig { mode: RunMode::Vanilla, ..PipelineConfig::default() };
        let (r, _) = Pipeline::new(config, &backend).process(&eileen());
        assert_eq!(backend.calls(), 1);
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.selection.is_none());
    }

    fn scripted_select(select: &'static str) -> ScriptedBackend {
        ScriptedBackend::new("scripted")
            .push(PromptKind::Segment, r#"["Context one says Kim wrote it.", "He won."]"#)
            .push(PromptKind::Ambiguity, r#"["He won."]"#)
            .push(PromptKind::Select, select)
            .push(PromptKind::Decontext, "Kim won.")
    }

    fn kim() -> SourceRecord {
        SourceRecord::new("kim", "He won.", vec!["Context one says Kim wrote it.".into()])
    }

    #[test]
    fn gain_filter_removes_non_gain_relations() {
        let select = r#"{"He won.": ["Context one says Kim wrote it. (Attribution)"]}"#;
        let on = scripted_select(select);
        let sel = Pipeline::new(PipelineConfig::default(), &on).select_content(&kim()).unwrap();
        assert!(sel.ambiguous[0].relevant.is_empty());

        let off = scripted_select(select);
        let config = PipelineConfig { apply_gain_filter: false, ..PipelineConfig::default() };
        let sel = Pipeline::new(config, &off).select_content(&kim()).unwrap();
        assert_eq!(sel.ambiguous[0].relevant.len(), 1);
        assert_eq!(sel.ambiguous[0].relevant[0].relation.as_ref().unwrap().coarse, CoarseRelation::Attribution);
    }

    #[test]
    fn declined_rewrite_is_infeasible_after_one_repair() {
        let b = ScriptedBackend::new("s")
            .push(PromptKind::Segment, r#"["Kim wrote it.", "He won."]"#)
            .push(PromptKind::Ambiguity, r#"["He won."]"#)
            .push(PromptKind::Select, r#"{"He won.": ["Kim wrote it. (Elaboration)"]}"#)
            .push(PromptKind::Decontext, "I cannot rewrite this sentence.")
            .push(PromptKind::Decontext, "");
        let record = SourceRecord::new("kim", "He won.", vec!["Kim wrote it.".into()]);
        let (r, err) = Pipeline::new(PipelineConfig::default(), &b).process(&record);
        assert!(err.is_none());
        assert_eq!(r.status, Status::Infeasible);
        assert_eq!(r.provenance.repairs, 1);
        assert_eq!(r.provenance.calls, 5);
        assert_eq!(r.rewritten, record.sentence);
    }

    #[test]
    fn unparseable_segmentation_degrades_and_continues() {
        let b = ScriptedBackend::new("s")
            .push(PromptKind::Segment, "I would rather not.")
            .push(PromptKind::Segment, "Still no.")
            .push(PromptKind::Ambiguity, "{}");
        let record = SourceRecord::new("x", "Paris is the capital of France.", vec![]);
        let (r, err) = Pipeline::new(PipelineConfig::default(), &b).process(&record);
        assert!(err.is_none());
        assert!(r.provenance.degraded);
        assert_eq!(r.status, Status::UnchangedNoAmbiguity);
        assert_eq!(r.selection.unwrap().edus_sentence.len(), 1);
    }

    #[test]
    fn backend_failure_becomes_error_result() {
        let b = ScriptedBackend::new("s");
        let (r, err) = Pipeline::new(PipelineConfig::default(), &b).process(&kim());
        assert_eq!(r.status, Status::Error);
        assert_eq!(err.unwrap().stage, PromptKind::Segment);
        assert!(r.provenance.error.is_some());
    }
}
