//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain strings and returns a JSON string; failures come
//! back as `{"error": "..."}` so the page has one code path.

use decontext_core::backend::MockBackend;
use decontext_core::metrics::{bleu, chrf_default, meteor, rouge_l, sari, Metric, MetricError};
use decontext_core::pipeline::{Pipeline, PipelineConfig};
use decontext_core::segmenter::{align, rule_segment};
use decontext_core::text::split_sentences;
use decontext_core::types::SourceRecord;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn reply(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Splits `text` into EDUs with character offsets into the input.
#[wasm_bindgen]
pub fn segment(text: &str) -> String {
    if text.trim().is_empty() {
        return reply(Err("enter some text".into()));
    }
    let edus: Vec<Value> = rule_segment(text)
        .into_iter()
        .map(|e| {
            let span = align(&e, text);
            json!({ "text": e, "start": span.map(|s| s.0), "end": span.map(|s| s.1) })
        })
        .collect();
    reply(Ok(json!({ "edus": edus })))
}

/// Lexical metrics of `candidate` against one `reference`. SARI also needs
/// the `source` sentence.
#[wasm_bindgen]
pub fn score(source: &str, candidate: &str, reference: &str) -> String {
    let run = || -> Result<Value, MetricError> {
        let mut scores = serde_json::Map::new();
        let mut put = |m: Metric, v: f64| scores.insert(m.name().to_string(), json!(v));
        if !source.trim().is_empty() {
            put(Metric::Sari, sari(source, candidate, &[reference])?);
        }
        put(Metric::Chrf, chrf_default(candidate, reference)?);
        put(Metric::RougeL, rouge_l(candidate, reference)?);
        put(Metric::Bleu, bleu(candidate, &[reference], 4)?);
        put(Metric::Meteor, meteor(candidate, reference)?);
        Ok(Value::Object(scores))
    };
    reply(run().map_err(|e| e.to_string()))
}

/// Runs the full pipeline on one sentence with the offline mock model.
/// `context` is a paragraph; it is split into sentences.
#[wasm_bindgen]
pub fn decontextualise(sentence: &str, context: &str) -> String {
    if sentence.trim().is_empty() {
        return reply(Err("enter a sentence".into()));
    }
    let record = SourceRecord::new("demo", sentence, split_sentences(context));
    let backend = MockBackend::new();
    let pipeline = Pipeline::new(PipelineConfig::default(), &backend);
    let (result, err) = pipeline.process(&record);
    if let Some(e) = err {
        return reply(Err(e.to_string()));
    }
    reply(serde_json::to_value(&result).map_err(|e| e.to_string()))
}
