use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Pipeline, PipelineConfig, RunMode, StageError};
use crate::dataset::added_words;
use crate::types::{DecontextResult, SourceRecord, Status};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Results already on disk; their record ids are skipped.
    pub previous: Vec<DecontextResult>,
    /// Process at most this many of the remaining records.
    pub limit: Option<usize>,
    /// Set to stop taking new records; in-flight records still finish.
    pub cancel: Option<Arc<AtomicBool>>,
}

/// Summary written next to a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub backend_id: String,
    pub mode: RunMode,
    pub config: PipelineConfig,
    pub started_at: String,
    pub finished_at: String,
    pub records_total: usize,
    pub records_processed: usize,
    pub records_resumed: usize,
    pub status_counts: BTreeMap<String, u64>,
    /// Records rewritten.
    pub feasible: u64,
    /// Records that could not be rewritten (infeasible or error).
    pub unfeasible: u64,
    pub unchanged_no_ambiguity: u64,
    pub total_calls: u64,
    pub calls_this_run: u64,
    pub cache_hits: u64,
    pub repairs: u64,
    pub degraded: u64,
    pub flat_assignments: u64,
    /// Mean number of words added by rewritten records.
    pub mean_added_words: Option<f64>,
    pub interrupted: bool,
    pub fatal_error: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    /// Every result, previous and new, in input order.
    pub results: Vec<DecontextResult>,
    pub manifest: RunManifest,
    pub fatal: Option<StageError>,
}

/// Reads a results JSONL file. A torn final line (from an interrupted
/// write) is skipped with a warning.
pub fn read_results(path: &Path) -> io::Result<Vec<DecontextResult>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            Err(e) => log::warn!("{}:{}: skipping unreadable result ({e})", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Runs every record not already in `options.previous`, writing each result
/// to `sink` as one JSON line, in input order.
///
/// Up to `config.parallel_records` records run at once. A record failure
/// is stored as an `ERROR` result and the run continues, except for fatal
/// backend errors (bad credentials, bad configuration), which stop the run
/// and are not written so a resumed run retries those records.
pub fn run_dataset(
    pipeline: &Pipeline<'_>,
    records: &[SourceRecord],
    options: RunOptions,
    sink: &mut dyn Write,
) -> io::Result<RunOutcome> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let done: HashSet<&str> = options.previous.iter().map(|r| r.record_id.as_str()).collect();
    let mut pending: Vec<&SourceRecord> = records.iter().filter(|r| !done.contains(r.id.as_str())).collect();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }
    let workers = pipeline.config.parallel_records.max(1).min(pending.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<StageError>> = Mutex::new(None);
    let cancelled = || options.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));

    let mut fresh: Vec<DecontextResult> = Vec::new();
    let mut write_error: Option<io::Error> = None;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Option<DecontextResult>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, abort, fatal) = (&pending, &next, &abort, &fatal);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) || cancelled() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = pending.get(i) else { break };
                let (result, err) = pipeline.process(record);
                let keep = match err {
                    Some(e) if e.is_fatal() => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().unwrap().get_or_insert(e);
                        None
                    }
                    _ => Some(result),
                };
                if tx.send((i, keep)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Reorder buffer: results are written strictly in input order.
        let mut buffer: BTreeMap<usize, Option<DecontextResult>> = BTreeMap::new();
        let mut expected = 0usize;
        for (i, result) in rx {
            buffer.insert(i, result);
            while let Some(result) = buffer.remove(&expected) {
                expected += 1;
                let Some(result) = result else { continue };
                if write_error.is_none() {
                    let line = serde_json::to_string(&result).expect("result serializes");
                    if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                        abort.store(true, Ordering::SeqCst);
                        write_error = Some(e);
                    }
                }
                fresh.push(result);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let calls_this_run: u64 = fresh.iter().map(|r| u64::from(r.provenance.calls)).sum();
    let records_processed = fresh.len();
    let interrupted = cancelled() && records_processed < pending.len();
    let fatal = fatal.into_inner().unwrap();

    // Previous results first, then new ones, both restricted to and ordered
    // by the input.
    let position: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let records_resumed = options.previous.iter().filter(|r| position.contains_key(r.record_id.as_str())).count();
    let mut results: Vec<DecontextResult> = options.previous.into_iter().chain(fresh).collect();
    results.sort_by_key(|r| position.get(r.record_id.as_str()).copied().unwrap_or(usize::MAX));

    let mut manifest = summarize(pipeline, records, &results);
    manifest.started_at = started_at;
    manifest.records_processed = records_processed;
    manifest.records_resumed = records_resumed;
    manifest.calls_this_run = calls_this_run;
    manifest.interrupted = interrupted;
    manifest.fatal_error = fatal.as_ref().map(|e| e.to_string());
    Ok(RunOutcome { results, manifest, fatal })
}

fn summarize(pipeline: &Pipeline<'_>, records: &[SourceRecord], results: &[DecontextResult]) -> RunManifest {
    let sentences: HashMap<&str, &str> = records.iter().map(|r| (r.id.as_str(), r.sentence.as_str())).collect();
    let mut status_counts: BTreeMap<String, u64> = Status::ALL.iter().map(|s| (s.as_str().to_string(), 0)).collect();
    let mut added = Vec::new();
    for r in results {
        *status_counts.entry(r.status.as_str().to_string()).or_default() += 1;
        if r.status == Status::Decontextualised {
            if let Some(original) = sentences.get(r.record_id.as_str()) {
                added.push(added_words(original, &r.rewritten) as f64);
            }
        }
    }
    let count = |f: fn(&DecontextResult) -> bool| results.iter().filter(|r| f(r)).count() as u64;
    RunManifest {
        config_digest: pipeline.config.digest(pipeline.demos),
        backend_id: pipeline.backend().id(),
        mode: pipeline.config.mode,
        config: pipeline.config.clone(),
        started_at: String::new(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        records_total: records.len(),
        records_processed: 0,
        records_resumed: 0,
        status_counts,
        feasible: count(|r| r.status.is_feasible()),
        unfeasible: count(|r| r.status.is_unfeasible()),
        unchanged_no_ambiguity: count(|r| r.status == Status::UnchangedNoAmbiguity),
        total_calls: results.iter().map(|r| u64::from(r.provenance.calls)).sum(),
        calls_this_run: 0,
        cache_hits: results.iter().map(|r| u64::from(r.provenance.cache_hits)).sum(),
        repairs: results.iter().map(|r| u64::from(r.provenance.repairs)).sum(),
        degraded: count(|r| r.provenance.degraded),
        flat_assignments: count(|r| r.provenance.flat_assignment),
        mean_added_words: (!added.is_empty()).then(|| added.iter().sum::<f64>() / added.len() as f64),
        interrupted: false,
        fatal_error: None,
    }
}
