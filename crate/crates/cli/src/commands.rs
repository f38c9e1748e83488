use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use decontext_core::backend::{
    CachedBackend, CompletionBackend, HttpBackend, HttpConfig, MockBackend, ResponseCache,
};
use decontext_core::dataset::{self, FieldMap};
use decontext_core::metrics::{evaluate_corpus, EvalConfig, HashEmbedder, MetricError, StaticEmbedder};
use decontext_core::pipeline::{read_results, run_dataset, Pipeline, PipelineConfig, RunOptions};
use decontext_core::prompting::DemoStore;
use decontext_core::segmenter::rule_segment;
use decontext_core::types::SourceRecord;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::json;

use crate::args::{BackendKind, CacheAction, EvalArgs, ExportArgs, RunArgs, StatsArgs};
use crate::Failure;

type Outcome = Result<u8, Failure>;

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

/// Writes `contents` through a temporary file in the same directory so a
/// reader never sees a half-written report.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let fail = |e: &dyn std::fmt::Display| Failure::config(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}

fn load_records(path: &Path, fields: &FieldMap) -> Result<Vec<SourceRecord>, Failure> {
    let report = dataset::load(path, fields).map_err(|e| Failure::config(e.to_string()))?;
    for e in &report.errors {
        log::warn!("{}: {e}", path.display());
    }
    if report.records.is_empty() {
        return Err(Failure::config(format!("{}: no usable records", path.display())));
    }
    Ok(report.records)
}

fn build_backend(a: &RunArgs) -> Result<Box<dyn CompletionBackend>, Failure> {
    let live: Box<dyn CompletionBackend> = match a.backend {
        BackendKind::Mock => Box::new(MockBackend::new()),
        BackendKind::Http => {
            let key_env = a
                .api_key_env
                .as_deref()
                .ok_or_else(|| Failure::config("--backend http needs --api-key-env NAME"))?;
            let model = a.model.as_deref().ok_or_else(|| Failure::config("--backend http needs --model"))?;
            let mut config = HttpConfig::new(&a.api_base, model, key_env);
            config.requests_per_minute = a.requests_per_minute;
            Box::new(HttpBackend::new(config).map_err(|e| Failure::config(e.to_string()))?)
        }
    };
    Ok(match &a.cache_dir {
        Some(dir) => {
            let cache = ResponseCache::open(dir).map_err(|e| Failure::config(e.to_string()))?;
            Box::new(CachedBackend::new(live, cache))
        }
        None => live,
    })
}

fn manifest_path(a: &RunArgs) -> PathBuf {
    a.manifest.clone().unwrap_or_else(|| {
        let mut name = a.out.clone().into_os_string();
        name.push(".manifest.json");
        PathBuf::from(name)
    })
}

pub fn run(a: RunArgs) -> Outcome {
    let manifest_path = manifest_path(&a);
    if !a.resume {
        refuse_overwrite(&a.out, a.force)?;
        refuse_overwrite(&manifest_path, a.force)?;
    }
    let records = load_records(&a.dataset, &a.fields.field_map())?;
    let demos = match &a.demos_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            DemoStore::from_jsonl(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => DemoStore::bundled().clone(),
    };
    let config = PipelineConfig {
        mode: a.mode.into(),
        selection_mode: a.selection.into(),
        segmentation_calls: a.seg_calls.into(),
        rewrite_mode: a.rewrite.into(),
        demos_per_stage: a.demos_per_stage,
        apply_gain_filter: !a.no_gain_filter,
        parallel_records: a.parallel,
        model_id: a.model.clone().unwrap_or_else(|| "mock".into()),
        max_output_tokens: a.max_tokens,
        temperature: a.temperature,
        record_timing: a.timing,
        ..PipelineConfig::default()
    };
    config.validate().map_err(|e| Failure::config(e.to_string()))?;
    let backend = build_backend(&a)?;

    let previous = if a.resume && a.out.exists() {
        let previous = read_results(&a.out).map_err(|e| Failure::config(format!("{}: {e}", a.out.display())))?;
        // Rewrite without any torn trailing line before appending.
        let mut clean = Vec::new();
        for r in &previous {
            clean.extend(serde_json::to_vec(r).expect("result serializes"));
            clean.push(b'\n');
        }
        write_atomic(&a.out, &clean)?;
        log::info!("resuming with {} results already in {}", previous.len(), a.out.display());
        previous
    } else {
        Vec::new()
    };
    let file = OpenOptions::new()
        .create(true)
        .append(a.resume)
        .write(true)
        .truncate(!a.resume)
        .open(&a.out)
        .map_err(|e| Failure::config(format!("{}: {e}", a.out.display())))?;
    let mut sink = BufWriter::new(file);

    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = cancel.clone();
        // Second Ctrl-C exits at once.
        let _ = ctrlc::set_handler(move || {
            if cancel.swap(true, Ordering::SeqCst) {
                std::process::exit(130);
            }
            eprintln!("interrupted; finishing records in flight");
        });
    }

    let pipeline = Pipeline::with_demos(config, backend.as_ref(), &demos);
    let options = RunOptions { previous, limit: a.limit, cancel: Some(cancel) };
    let outcome = run_dataset(&pipeline, &records, options, &mut sink)
        .map_err(|e| Failure::config(format!("{}: {e}", a.out.display())))?;
    sink.flush().map_err(|e| Failure::config(format!("{}: {e}", a.out.display())))?;

    let manifest = serde_json::to_string_pretty(&outcome.manifest).expect("manifest serializes") + "\n";
    write_atomic(&manifest_path, manifest.as_bytes())?;

    let m = &outcome.manifest;
    eprintln!(
        "{} records ({} new, {} resumed); {} rewritten, {} unfeasible, {} unchanged; {} calls, {} cache hits",
        outcome.results.len(),
        m.records_processed,
        m.records_resumed,
        m.feasible,
        m.unfeasible,
        m.unchanged_no_ambiguity,
        m.total_calls,
        m.cache_hits,
    );
    if let Some(e) = outcome.fatal {
        return Err(Failure::backend(format!("{e}; completed records were kept, rerun with --resume")));
    }
    if m.interrupted {
        eprintln!("run interrupted; rerun with --resume to finish");
        return Ok(130);
    }
    Ok(0)
}

pub fn eval(a: EvalArgs) -> Outcome {
    let records = load_records(&a.dataset, &a.fields.field_map())?;
    let results = read_results(&a.results).map_err(|e| Failure::config(format!("{}: {e}", a.results.display())))?;
    let mut config = EvalConfig::default();
    if !a.metrics.is_empty() {
        config.metrics = a.metrics.clone();
    }
    if let Some(path) = &a.embeddings {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map_or("table".into(), |s| s.to_string_lossy().into_owned());
        let table = StaticEmbedder::from_json(name, &text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        config = config.with_embedder(Box::new(table));
    } else if a.hash_embeddings {
        config = config.with_embedder(Box::new(HashEmbedder::default()));
    }
    let outputs = a.report.as_ref().map(|prefix| {
        ["json", "csv", "md"].map(|ext| {
            let mut p = prefix.clone().into_os_string();
            p.push(".");
            p.push(ext);
            PathBuf::from(p)
        })
    });
    if let Some(paths) = &outputs {
        for p in paths {
            refuse_overwrite(p, a.force)?;
        }
    }
    let report = evaluate_corpus(&results, &records, &config).map_err(|e| match e {
        MetricError::NoReferences => Failure::empty("no result has a gold reference to score against"),
        other => Failure::config(other.to_string()),
    })?;
    let markdown = report.to_markdown(&a.system);
    if let Some([json, csv, md]) = &outputs {
        write_atomic(json, (report.to_json() + "\n").as_bytes())?;
        write_atomic(csv, report.to_csv().as_bytes())?;
        write_atomic(md, markdown.as_bytes())?;
    }
    print!("{markdown}");
    if let Some(b) = report.corpus_bleu {
        println!("\ncorpus BLEU {b:.4} over {} samples ({} skipped)", report.n_samples, report.n_skipped);
    }
    Ok(0)
}

pub fn stats(a: StatsArgs) -> Outcome {
    let records = load_records(&a.dataset, &a.fields.field_map())?;
    let s = dataset::stats(&records).map_err(|e| Failure::config(e.to_string()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
    } else {
        println!("samples            {}", s.n_samples);
        println!("avg context words  {:.2}", s.avg_context_words);
        println!("avg sentence words {:.2}", s.avg_sentence_words);
    }
    Ok(0)
}

pub fn cache(action: CacheAction) -> Outcome {
    let open = |dir: &Path| {
        if !dir.is_dir() {
            return Err(Failure::config(format!("{}: no such cache directory", dir.display())));
        }
        ResponseCache::open(dir).map_err(|e| Failure::config(e.to_string()))
    };
    match action {
        CacheAction::Inspect { cache_dir } => {
            let s = open(&cache_dir)?.stats().map_err(|e| Failure::config(e.to_string()))?;
            println!("{} entries, {} bytes", s.entries, s.bytes);
        }
        CacheAction::Clear { cache_dir } => {
            let removed = open(&cache_dir)?.clear().map_err(|e| Failure::config(e.to_string()))?;
            println!("removed {removed} entries");
        }
    }
    Ok(0)
}

pub fn export_annotations(a: ExportArgs) -> Outcome {
    refuse_overwrite(&a.out, a.force)?;
    let records = load_records(&a.dataset, &a.fields.field_map())?;
    let chosen: Vec<&SourceRecord> = match a.sample {
        Some(n) if n < records.len() => {
            let mut idx = rand::seq::index::sample(&mut StdRng::seed_from_u64(a.seed), records.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &records[i]).collect()
        }
        _ => records.iter().collect(),
    };
    let mut out = Vec::new();
    for r in &chosen {
        let line = json!({
            "id": r.id,
            "text": r.sentence,
            "edus": rule_segment(&r.sentence),
            "integrity": null,
            "coherence": null,
        });
        out.extend(line.to_string().into_bytes());
        out.push(b'\n');
    }
    write_atomic(&a.out, &out)?;
    eprintln!("wrote {} records to {}", chosen.len(), a.out.display());
    Ok(0)
}
