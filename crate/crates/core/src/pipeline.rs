//! Stage runners shared by the CLI and the end-to-end tests. Each stage
//! reads upstream artifacts from the cache/output directories, writes its
//! own files and refreshes the directory manifest.
//!
//! Layout:
//!
//! ```text
//! cache_dir/            records.{bin,jsonl}, ingest_report.json
//! cache_dir/fingerprints/  in.bin, out.bin
//! output_dir/templates/ templates.jsonl, filter_report.json, split_report.json
//! output_dir/synth/     cpt_type{N}.jsonl, sft_type{N}.jsonl
//! output_dir/pref/      {strategy}.jsonl, {strategy}_report.json
//! output_dir/bench/     bench_{domain}_L{level}_r{rep}.jsonl, answer_key.jsonl
//! output_dir/score/     report.json, report.txt
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{self, BenchConfig, BenchError, BenchInput, Domain};
use crate::config::{ConfigError, RunConfig};
use crate::ingest::{self, CacheFormat, IngestError, InputFormat, Record, RecordStore};
use crate::manifest::{sha256_file, Manifest};
use crate::pref::{PrefContext, PrefError, PrefReport, Strategy};
use crate::score::{self, Report, ScoreError};
use crate::similarity::{index_records, FingerprintParams, SimilarityError, SimilarityIndex};
use crate::synth::{self, SynthError};
use crate::templates::{self, EmbeddingMode, Split, Template, TemplateError};

pub const TEMPLATES_FILE: &str = "templates.jsonl";

static PROGRESS_JSON: AtomicBool = AtomicBool::new(false);

/// Switches progress events to one JSON object per line on stderr.
pub fn set_progress_json(on: bool) {
    PROGRESS_JSON.store(on, Ordering::Relaxed);
}

fn progress(stage: &str, event: &str, detail: serde_json::Value) {
    if PROGRESS_JSON.load(Ordering::Relaxed) {
        let line = serde_json::json!({"stage": stage, "event": event, "detail": detail});
        eprintln!("{line}");
    } else {
        log::info!("{stage}: {event} {detail}");
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing {what}; run {stage} first")]
    MissingUpstream { what: &'static str, stage: &'static str },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pref(#[from] PrefError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| io_at(path)(e.into()))?;
    body.push('\n');
    fs::write(path, body).map_err(io_at(path))
}

fn digest(name: &str, path: &Path, into: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
    into.insert(name.to_string(), sha256_file(path).map_err(io_at(path))?);
    Ok(())
}

fn refresh_manifest(dir: &Path, stage: &str, cfg: &RunConfig, inputs: BTreeMap<String, String>) -> Result<Manifest, PipelineError> {
    Manifest::refresh(dir, stage, &cfg.config_hash(), cfg.seed, inputs).map_err(io_at(dir))
}

pub fn stage_dir(cfg: &RunConfig, stage: &str) -> PathBuf {
    cfg.paths.output_dir.join(stage)
}

pub fn record_cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.cache_dir.join(cfg.cache.format.file_name())
}

fn fingerprint_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.cache_dir.join("fingerprints")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub report: ingest::ValidationReport,
    pub enrich: ingest::EnrichReport,
    pub records: usize,
    pub train: usize,
    pub out_domain: usize,
}

/// Load, validate, enrich, check the partition and write the record cache.
pub fn run_ingest(cfg: &RunConfig) -> Result<IngestSummary, PipelineError> {
    cfg.validate()?;
    let db = &cfg.paths.database;
    let format = InputFormat::from_path(db)?;
    progress("ingest", "load", serde_json::json!({"path": db}));
    let mut loaded = ingest::load_records(db, format)?;
    let enrich = ingest::enrich(&mut loaded.store);
    for (cid, atoms) in &enrich.logp_fallbacks {
        log::warn!("cid {cid}: logP used wildcard contributions for atoms {atoms:?}");
    }
    let part = ingest::partition(&loaded.store, cfg.partition.train_n, cfg.partition.out_domain_start)?;
    if part.out_domain.is_empty() {
        log::warn!("out-domain slice is empty; bench will need records with ordinal >= {}", part.out_domain_start);
    }

    let cache = &cfg.paths.cache_dir;
    ensure_dir(cache)?;
    let stale = fingerprint_dir(cfg);
    if stale.exists() {
        fs::remove_dir_all(&stale).map_err(io_at(&stale))?;
    }
    for f in [CacheFormat::Jsonl, CacheFormat::Binary] {
        let p = cache.join(f.file_name());
        if f != cfg.cache.format && p.exists() {
            fs::remove_file(&p).map_err(io_at(&p))?;
        }
    }
    ingest::write_cache(&loaded.store, &record_cache_path(cfg), cfg.cache.format)?;
    let summary = IngestSummary {
        records: loaded.store.len(),
        train: part.train.len(),
        out_domain: part.out_domain.len(),
        report: loaded.report,
        enrich,
    };
    write_json(&cache.join("ingest_report.json"), &summary)?;
    let mut inputs = BTreeMap::new();
    digest("database", db, &mut inputs)?;
    refresh_manifest(cache, "ingest", cfg, inputs)?;
    progress(
        "ingest",
        "done",
        serde_json::json!({"records": summary.records, "rejected": summary.report.rejected.len(), "computed": summary.enrich.values_computed}),
    );
    Ok(summary)
}

/// Reads the record cache written by ingest.
pub fn load_store(cfg: &RunConfig) -> Result<RecordStore, PipelineError> {
    let path = record_cache_path(cfg);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: "record cache",
            stage: "ingest",
        });
    }
    let store = ingest::read_cache(&path, cfg.cache.format)?;
    store.require_enriched()?;
    Ok(store)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateSummary {
    pub loaded: usize,
    pub filter: templates::FilterReport,
    pub split: templates::SplitOutcome,
}

pub fn run_templates(cfg: &RunConfig) -> Result<TemplateSummary, PipelineError> {
    cfg.validate()?;
    let mut inputs = BTreeMap::new();
    let list = templates::load_templates(&cfg.paths.templates)?;
    digest("templates", &cfg.paths.templates, &mut inputs)?;
    let blocklist = match &cfg.paths.blocklist {
        Some(p) => {
            digest("blocklist", p, &mut inputs)?;
            templates::load_blocklist(p)?
        }
        None => HashSet::new(),
    };
    let loaded = list.len();
    let (mut kept, filter) = templates::filter_templates(list, &blocklist);
    let mode = match &cfg.paths.vectors {
        Some(p) => {
            digest("vectors", p, &mut inputs)?;
            EmbeddingMode::External(p.clone())
        }
        None => EmbeddingMode::Internal,
    };
    let embeddings = templates::embed_templates(&kept, &mode)?;
    let split = templates::split_templates(&embeddings, cfg.dbscan.eps, cfg.dbscan.min_pts)?;
    templates::apply_split(&mut kept, &split);

    let dir = stage_dir(cfg, "templates");
    ensure_dir(&dir)?;
    templates::save_templates(&kept, &dir.join(TEMPLATES_FILE))?;
    write_json(&dir.join("filter_report.json"), &filter)?;
    write_json(&dir.join("split_report.json"), &split)?;
    refresh_manifest(&dir, "templates", cfg, inputs)?;
    progress(
        "templates",
        "done",
        serde_json::json!({"loaded": loaded, "kept": kept.len(), "train": split.train.len(), "test": split.test.len()}),
    );
    Ok(TemplateSummary { loaded, filter, split })
}

/// Templates after filtering and splitting, as `(train, test)`.
pub fn load_split_templates(cfg: &RunConfig) -> Result<(Vec<Template>, Vec<Template>), PipelineError> {
    let path = stage_dir(cfg, "templates").join(TEMPLATES_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: "template split",
            stage: "templates",
        });
    }
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t: Template = serde_json::from_str(line).map_err(|e| TemplateError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        t.validate()?;
        match t.split {
            Split::Test => test.push(t),
            _ => train.push(t),
        }
    }
    Ok((train, test))
}

fn upstream_inputs(cfg: &RunConfig) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut inputs = BTreeMap::new();
    digest("records", &record_cache_path(cfg), &mut inputs)?;
    let t = stage_dir(cfg, "templates").join(TEMPLATES_FILE);
    if t.exists() {
        digest("templates", &t, &mut inputs)?;
    }
    Ok(inputs)
}

/// Fingerprint index for one record slice, cached under the cache dir and
/// rebuilt when parameters or membership change.
pub fn domain_index(cfg: &RunConfig, domain: Domain, records: &[Record]) -> Result<SimilarityIndex, PipelineError> {
    let params = FingerprintParams {
        radius: cfg.similarity.radius,
        nbits: cfg.similarity.nbits,
        seed: 0,
    };
    let dir = fingerprint_dir(cfg);
    let path = dir.join(format!("{domain}.bin"));
    if path.exists() {
        match SimilarityIndex::load(&path) {
            Ok(idx) if *idx.params() == params && idx.ids().iter().copied().eq(records.iter().map(|r| r.cid)) => {
                return Ok(idx)
            }
            Ok(_) => log::info!("fingerprint cache {} is stale; rebuilding", path.display()),
            Err(e) => log::warn!("fingerprint cache {} unreadable ({e}); rebuilding", path.display()),
        }
    }
    progress("index", "build", serde_json::json!({"domain": domain, "records": records.len()}));
    let idx = index_records(records, params)?;
    ensure_dir(&dir)?;
    idx.save(&path)?;
    refresh_manifest(&dir, "fingerprints", cfg, BTreeMap::new())?;
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Cpt,
    Sft,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Cpt => "cpt",
            SynthKind::Sft => "sft",
        })
    }
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpt" => Ok(SynthKind::Cpt),
            "sft" => Ok(SynthKind::Sft),
            _ => Err(format!("unknown corpus kind '{s}' (expected cpt or sft)")),
        }
    }
}

fn open_out(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_at(path))?))
}

fn finish_out(path: &Path, mut w: BufWriter<File>, stage: &str, cfg: &RunConfig, inputs: BTreeMap<String, String>) -> Result<(), PipelineError> {
    w.flush().map_err(io_at(path))?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    refresh_manifest(dir, stage, cfg, inputs)?;
    Ok(())
}

/// Writes one CPT or SFT corpus over the train slice; returns its path.
pub fn run_synth(cfg: &RunConfig, kind: SynthKind, type_tag: u8, out: Option<&Path>) -> Result<PathBuf, PipelineError> {
    cfg.validate()?;
    let store = load_store(cfg)?;
    let (train_t, _) = load_split_templates(cfg)?;
    let part = ingest::partition(&store, cfg.partition.train_n, cfg.partition.out_domain_start)?;
    let records = part.train_records(&store);
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| stage_dir(cfg, "synth").join(format!("{kind}_type{type_tag}.jsonl")));
    let mut w = open_out(&path)?;
    let n = match kind {
        SynthKind::Cpt => synth::write_cpt(records, &train_t, type_tag, cfg.seed, &mut w)?,
        SynthKind::Sft => synth::write_sft(records, &train_t, type_tag, cfg.seed, &mut w)?,
    };
    finish_out(&path, w, "synth", cfg, upstream_inputs(cfg)?)?;
    progress("synth", "done", serde_json::json!({"kind": kind, "type": type_tag, "items": n, "path": path}));
    Ok(path)
}

/// Writes preference pairs over the train slice plus an accounting report.
pub fn run_pref(cfg: &RunConfig, strategy: Strategy, k: Option<usize>, out: Option<&Path>) -> Result<PrefReport, PipelineError> {
    cfg.validate()?;
    let store = load_store(cfg)?;
    let (train_t, _) = load_split_templates(cfg)?;
    let part = ingest::partition(&store, cfg.partition.train_n, cfg.partition.out_domain_start)?;
    let records = part.train_records(&store);
    let k = k.unwrap_or(cfg.similarity.k);
    let needs_index = matches!(strategy, Strategy::Rldbf | Strategy::Alt(4..=6));
    let index = if needs_index {
        Some(domain_index(cfg, Domain::In, records)?)
    } else {
        None
    };
    let ctx = PrefContext::new(records, &train_t, index.as_ref(), cfg.seed)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| stage_dir(cfg, "pref").join(format!("{strategy}.jsonl")));
    let mut w = open_out(&path)?;
    let report = ctx.write(strategy, k, &mut w)?;
    w.flush().map_err(io_at(&path))?;
    let stem = path.file_stem().map_or("pref".into(), |s| s.to_string_lossy().into_owned());
    let report_path = path.with_file_name(format!("{stem}_report.json"));
    write_json(&report_path, &report)?;
    finish_out(&path, w, "pref", cfg, upstream_inputs(cfg)?)?;
    progress(
        "pref",
        "done",
        serde_json::json!({"strategy": strategy, "emitted": report.emitted, "skipped": report.skipped, "shortfall": report.shortfall}),
    );
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummary {
    pub questions: usize,
    pub groups: Vec<BenchGroupSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchGroupSummary {
    pub name: String,
    pub questions: usize,
    pub skipped: usize,
}

/// Generates the multiple-choice suite and its answer key.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchSummary, PipelineError> {
    cfg.validate()?;
    let store = load_store(cfg)?;
    let (_, test_t) = load_split_templates(cfg)?;
    let part = ingest::partition(&store, cfg.partition.train_n, cfg.partition.out_domain_start)?;
    part.require_out_domain()?;
    let in_records = part.train_records(&store);
    let out_records = part.out_domain_records(&store);
    let in_index = domain_index(cfg, Domain::In, in_records)?;
    let out_index = domain_index(cfg, Domain::Out, out_records)?;
    let input = BenchInput {
        in_domain: in_records,
        out_domain: out_records,
        templates: &test_t,
        in_index: Some(&in_index),
        out_index: Some(&out_index),
    };
    let config = BenchConfig {
        count: cfg.bench.count,
        reps: cfg.bench.reps,
        ..BenchConfig::default()
    };
    let suite = bench::gen_suite(&input, &config, cfg.seed)?;
    let dir = stage_dir(cfg, "bench");
    ensure_dir(&dir)?;
    suite.write(&dir)?;
    let summary = BenchSummary {
        questions: suite.question_count(),
        groups: suite
            .groups
            .iter()
            .map(|g| BenchGroupSummary {
                name: g.name(),
                questions: g.questions.len(),
                skipped: g.skipped,
            })
            .collect(),
    };
    write_json(&dir.join("bench_report.json"), &summary)?;
    refresh_manifest(&dir, "bench", cfg, upstream_inputs(cfg)?)?;
    progress("bench", "done", serde_json::json!({"questions": summary.questions}));
    Ok(summary)
}

/// Scores an answer file; the key defaults to the bench stage's.
pub fn run_score(cfg: &RunConfig, answers: &Path, key: Option<&Path>) -> Result<Report, PipelineError> {
    let key_path = key
        .map(Path::to_path_buf)
        .unwrap_or_else(|| stage_dir(cfg, "bench").join(bench::ANSWER_KEY_FILE));
    if !key_path.exists() {
        return Err(PipelineError::MissingUpstream {
            what: "answer key",
            stage: "bench",
        });
    }
    let report = score::score_run(&score::load_answers(answers)?, &score::load_key(&key_path)?)?;
    let dir = stage_dir(cfg, "score");
    ensure_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    let table = score::render_table(&report);
    fs::write(dir.join("report.txt"), &table).map_err(io_at(&dir))?;
    let mut inputs = BTreeMap::new();
    digest("answers", answers, &mut inputs)?;
    digest("answer_key", &key_path, &mut inputs)?;
    refresh_manifest(&dir, "score", cfg, inputs)?;
    Ok(report)
}

/// Every generation stage in order: ingest, templates, all corpora, all
/// preference strategies, bench. Returns the manifests by directory.
pub fn run_all(cfg: &RunConfig) -> Result<BTreeMap<String, Manifest>, PipelineError> {
    run_ingest(cfg)?;
    run_templates(cfg)?;
    for t in 1..=5 {
        run_synth(cfg, SynthKind::Cpt, t, None)?;
    }
    for t in 1..=3 {
        run_synth(cfg, SynthKind::Sft, t, None)?;
    }
    let mut strategies = vec![Strategy::Rldbf, Strategy::Ladder];
    strategies.extend((1..=6).map(Strategy::Alt));
    for s in strategies {
        run_pref(cfg, s, None, None)?;
    }
    run_bench(cfg)?;
    collect_manifests(cfg)
}

pub fn collect_manifests(cfg: &RunConfig) -> Result<BTreeMap<String, Manifest>, PipelineError> {
    let mut out = BTreeMap::new();
    let mut dirs = vec![("cache".to_string(), cfg.paths.cache_dir.clone()), ("fingerprints".into(), fingerprint_dir(cfg))];
    for stage in ["templates", "synth", "pref", "bench", "score"] {
        dirs.push((stage.to_string(), stage_dir(cfg, stage)));
    }
    for (name, dir) in dirs {
        if dir.join(crate::manifest::MANIFEST_FILE).exists() {
            out.insert(name, Manifest::read(&dir).map_err(io_at(&dir))?);
        }
    }
    Ok(out)
}
