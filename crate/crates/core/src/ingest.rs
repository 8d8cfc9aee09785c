//! Database records: loading, validation, enrichment, partitioning and the
//! record cache.
//!
//! Input contract (CSV header or JSONL keys): `cid, smiles, hba, hbd,
//! rotatable, logp, mw`. An empty CSV cell, a JSON `null` or an absent key
//! marks a missing value, which [`enrich`] later computes. Ordinals are the
//! 0-based position of the data row in the source file; rejected rows leave
//! gaps.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::parse_smiles;
use crate::descriptors::{self, PropertyKind, PropertyValue, Provenance, ValueKind};
use crate::par;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("missing required column '{0}'")]
    MissingColumn(&'static str),
    #[error("duplicate cid {cid} on lines {first_line} and {second_line}")]
    DuplicateCid { cid: u64, first_line: usize, second_line: usize },
    #[error("cannot infer input format of {0}; use .csv or .jsonl")]
    UnknownFormat(PathBuf),
    #[error("train size {train_n} exceeds store size {len}")]
    TrainTooLarge { train_n: usize, len: usize },
    #[error("train size {train_n} exceeds out-domain start {out_domain_start}")]
    InvalidPartition { train_n: usize, out_domain_start: usize },
    #[error("train slice reaches ordinal {last_ordinal}, overlapping out-domain start {out_domain_start}")]
    OverlappingPartition { last_ordinal: usize, out_domain_start: usize },
    #[error("out-domain slice is empty (no record with ordinal >= {0})")]
    EmptyOutDomain(usize),
    #[error("record store is not enriched")]
    NotEnriched,
    #[error("record cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(InputFormat::Csv),
            Some("jsonl") | Some("json") => Ok(InputFormat::Jsonl),
            _ => Err(IngestError::UnknownFormat(path.to_path_buf())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub cid: u64,
    pub smiles: String,
    pub ordinal: usize,
    properties: [Option<PropertyValue>; 5],
}

impl Record {
    pub fn new(cid: u64, smiles: impl Into<String>, ordinal: usize) -> Self {
        Record {
            cid,
            smiles: smiles.into(),
            ordinal,
            properties: Default::default(),
        }
    }

    pub fn with_value(mut self, value: PropertyValue) -> Self {
        let i = value.kind.index();
        self.properties[i] = Some(value);
        self
    }

    pub fn get(&self, kind: PropertyKind) -> Option<&PropertyValue> {
        self.properties[kind.index()].as_ref()
    }

    /// Value of an enriched record.
    pub fn value(&self, kind: PropertyKind) -> &PropertyValue {
        self.get(kind)
            .unwrap_or_else(|| panic!("record {} lacks {}", self.cid, kind.key()))
    }

    pub fn rendered(&self, kind: PropertyKind) -> String {
        self.value(kind).render()
    }

    pub fn is_complete(&self) -> bool {
        self.properties.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRejection {
    pub line: usize,
    pub cid: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rejected: Vec<RowRejection>,
}

/// Records in ordinal order, indexed by cid.
#[derive(Debug, Clone, Default)]
pub struct RecordStore {
    records: Vec<Record>,
    by_cid: HashMap<u64, usize>,
}

impl RecordStore {
    /// Builds a store from records; they are sorted by ordinal.
    pub fn from_records(mut records: Vec<Record>) -> Result<Self, IngestError> {
        records.sort_by_key(|r| r.ordinal);
        let mut by_cid = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if let Some(prev) = by_cid.insert(r.cid, i) {
                return Err(IngestError::DuplicateCid {
                    cid: r.cid,
                    first_line: records[prev].ordinal + 1,
                    second_line: r.ordinal + 1,
                });
            }
        }
        Ok(RecordStore { records, by_cid })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, cid: u64) -> Option<&Record> {
        self.by_cid.get(&cid).map(|&i| &self.records[i])
    }

    pub fn position(&self, cid: u64) -> Option<usize> {
        self.by_cid.get(&cid).copied()
    }

    pub fn is_enriched(&self) -> bool {
        self.records.iter().all(Record::is_complete)
    }

    pub fn require_enriched(&self) -> Result<(), IngestError> {
        if self.is_enriched() {
            Ok(())
        } else {
            Err(IngestError::NotEnriched)
        }
    }
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub store: RecordStore,
    pub report: ValidationReport,
}

struct RawRow {
    line: usize,
    cid: Option<String>,
    smiles: Option<String>,
    values: [Option<String>; 5],
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_csv(path: &Path) -> Result<Vec<RawRow>, IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let cid_col = column("cid").ok_or(IngestError::MissingColumn("cid"))?;
    let smiles_col = column("smiles").ok_or(IngestError::MissingColumn("smiles"))?;
    let value_cols: Vec<Option<usize>> = PropertyKind::ALL.iter().map(|k| column(k.key())).collect();

    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |c: usize| rec.get(c).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        let mut values: [Option<String>; 5] = Default::default();
        for (slot, col) in values.iter_mut().zip(&value_cols) {
            *slot = col.and_then(cell);
        }
        rows.push(RawRow {
            line,
            cid: cell(cid_col),
            smiles: cell(smiles_col),
            values,
        });
    }
    Ok(rows)
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.trim().to_string()).filter(|s| !s.is_empty()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

fn read_jsonl(path: &Path) -> Result<(Vec<RawRow>, Vec<RowRejection>), IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> = match serde_json::from_str(&line) {
            Ok(o) => o,
            Err(e) => {
                bad.push(RowRejection {
                    line: lineno,
                    cid: None,
                    reason: format!("malformed JSON: {e}"),
                });
                continue;
            }
        };
        let field = |k: &str| obj.get(k).and_then(json_scalar);
        let mut values: [Option<String>; 5] = Default::default();
        for (slot, kind) in values.iter_mut().zip(PropertyKind::ALL) {
            *slot = field(kind.key());
        }
        rows.push(RawRow {
            line: lineno,
            cid: field("cid"),
            smiles: field("smiles"),
            values,
        });
    }
    Ok((rows, bad))
}

fn parse_value(kind: PropertyKind, text: &str) -> Result<f64, String> {
    let v: f64 = text
        .parse()
        .map_err(|_| format!("{}: '{text}' is not a number", kind.key()))?;
    if !v.is_finite() {
        return Err(format!("{}: '{text}' is not finite", kind.key()));
    }
    if kind.value_kind() == ValueKind::Integer && (v < 0.0 || v.fract() != 0.0) {
        return Err(format!("{}: '{text}' is not a non-negative integer", kind.key()));
    }
    Ok(v)
}

/// Reads and validates a record file. Bad rows are reported and skipped;
/// a duplicate cid aborts the load.
pub fn load_records(path: &Path, format: InputFormat) -> Result<LoadOutcome, IngestError> {
    let (rows, mut rejected) = match format {
        InputFormat::Csv => (read_csv(path)?, Vec::new()),
        InputFormat::Jsonl => read_jsonl(path)?,
    };
    let mut report = ValidationReport {
        rows_read: rows.len() + rejected.len(),
        ..Default::default()
    };
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    let mut ordinal_of_line: BTreeMap<usize, usize> = BTreeMap::new();
    {
        let mut lines: Vec<usize> = rows.iter().map(|r| r.line).collect();
        lines.extend(rejected.iter().map(|r| r.line));
        lines.sort_unstable();
        for (ordinal, line) in lines.into_iter().enumerate() {
            ordinal_of_line.insert(line, ordinal);
        }
    }

    for row in rows {
        let reject = |reason: String, cid: Option<u64>| RowRejection {
            line: row.line,
            cid,
            reason,
        };
        let cid = match row.cid.as_deref().map(str::parse::<u64>) {
            Some(Ok(c)) => c,
            Some(Err(_)) => {
                rejected.push(reject(format!("cid '{}' is not an integer", row.cid.as_deref().unwrap_or("")), None));
                continue;
            }
            None => {
                rejected.push(reject("missing cid".into(), None));
                continue;
            }
        };
        if let Some(&first_line) = seen.get(&cid) {
            return Err(IngestError::DuplicateCid {
                cid,
                first_line,
                second_line: row.line,
            });
        }
        seen.insert(cid, row.line);

        let Some(smiles) = row.smiles.clone() else {
            rejected.push(reject("missing SMILES".into(), Some(cid)));
            continue;
        };
        if let Err(e) = parse_smiles(&smiles) {
            rejected.push(reject(format!("SMILES '{smiles}': {e}"), Some(cid)));
            continue;
        }
        let mut record = Record::new(cid, smiles, ordinal_of_line[&row.line]);
        let mut bad_value = None;
        for (kind, text) in PropertyKind::ALL.into_iter().zip(&row.values) {
            if let Some(text) = text {
                match parse_value(kind, text) {
                    Ok(v) => record = record.with_value(PropertyValue::from_database(kind, v, text.clone())),
                    Err(e) => {
                        bad_value = Some(e);
                        break;
                    }
                }
            }
        }
        if let Some(e) = bad_value {
            rejected.push(reject(e, Some(cid)));
            continue;
        }
        records.push(record);
    }
    rejected.sort_by_key(|r| r.line);
    for r in &rejected {
        log::warn!("line {}: row rejected: {}", r.line, r.reason);
    }
    report.rows_accepted = records.len();
    report.rejected = rejected;
    Ok(LoadOutcome {
        store: RecordStore::from_records(records)?,
        report,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrichReport {
    pub values_computed: usize,
    pub records_touched: usize,
    /// `(cid, atom indices)` where logP fell back to a wildcard contribution.
    pub logp_fallbacks: Vec<(u64, Vec<usize>)>,
}

/// Fills every missing property from the descriptor module; database values
/// are left untouched. Idempotent.
pub fn enrich(store: &mut RecordStore) -> EnrichReport {
    type Filled = (Vec<PropertyValue>, Option<Vec<usize>>);
    let computed: Vec<Option<Filled>> = par::map(&store.records, |r| {
        if r.is_complete() {
            return None;
        }
        let mol = parse_smiles(&r.smiles).expect("validated at load");
        let mut fallback = None;
        let values = PropertyKind::ALL
            .into_iter()
            .filter(|k| r.get(*k).is_none())
            .map(|k| {
                let v = if k == PropertyKind::LogP {
                    let lp = descriptors::logp(&mol);
                    if !lp.fallback_atoms.is_empty() {
                        fallback = Some(lp.fallback_atoms);
                    }
                    lp.value
                } else {
                    descriptors::compute(k, &mol)
                };
                PropertyValue::computed(k, v)
            })
            .collect();
        Some((values, fallback))
    });
    let mut report = EnrichReport::default();
    for (record, filled) in store.records.iter_mut().zip(computed) {
        let Some((values, fallback)) = filled else { continue };
        report.records_touched += 1;
        report.values_computed += values.len();
        for v in values {
            let i = v.kind.index();
            record.properties[i] = Some(v);
        }
        if let Some(atoms) = fallback {
            report.logp_fallbacks.push((record.cid, atoms));
        }
    }
    report
}

/// Train slice = first `train_n` records by ordinal; out-domain slice =
/// records with ordinal >= `out_domain_start`. Both are position ranges
/// into the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Range<usize>,
    pub out_domain: Range<usize>,
    pub out_domain_start: usize,
}

impl Partition {
    pub fn train_records<'a>(&self, store: &'a RecordStore) -> &'a [Record] {
        &store.records()[self.train.clone()]
    }

    pub fn out_domain_records<'a>(&self, store: &'a RecordStore) -> &'a [Record] {
        &store.records()[self.out_domain.clone()]
    }

    pub fn require_out_domain(&self) -> Result<(), IngestError> {
        if self.out_domain.is_empty() {
            Err(IngestError::EmptyOutDomain(self.out_domain_start))
        } else {
            Ok(())
        }
    }
}

pub fn partition(store: &RecordStore, train_n: usize, out_domain_start: usize) -> Result<Partition, IngestError> {
    if train_n > out_domain_start {
        return Err(IngestError::InvalidPartition {
            train_n,
            out_domain_start,
        });
    }
    if train_n > store.len() {
        return Err(IngestError::TrainTooLarge {
            train_n,
            len: store.len(),
        });
    }
    if train_n > 0 {
        let last_ordinal = store.records()[train_n - 1].ordinal;
        if last_ordinal >= out_domain_start {
            return Err(IngestError::OverlappingPartition {
                last_ordinal,
                out_domain_start,
            });
        }
    }
    let first_out = store.records().partition_point(|r| r.ordinal < out_domain_start);
    Ok(Partition {
        train: 0..train_n,
        out_domain: first_out..store.len(),
        out_domain_start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheFormat {
    Jsonl,
    Binary,
}

impl CacheFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            CacheFormat::Jsonl => "records.jsonl",
            CacheFormat::Binary => "records.bin",
        }
    }
}

const RECORD_MAGIC: &[u8; 4] = b"DBRC";
const RECORD_CACHE_VERSION: u32 = 1;

pub fn write_cache(store: &RecordStore, path: &Path, format: CacheFormat) -> Result<(), IngestError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let result = match format {
        CacheFormat::Jsonl => write_jsonl_cache(store, &mut w),
        CacheFormat::Binary => write_binary_cache(store, &mut w),
    };
    result.and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_jsonl_cache(store: &RecordStore, w: &mut impl Write) -> io::Result<()> {
    for r in &store.records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_binary_cache(store: &RecordStore, w: &mut impl Write) -> io::Result<()> {
    w.write_all(RECORD_MAGIC)?;
    w.write_all(&RECORD_CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(store.records.len() as u64).to_le_bytes())?;
    for r in &store.records {
        w.write_all(&r.cid.to_le_bytes())?;
        w.write_all(&(r.ordinal as u64).to_le_bytes())?;
        put_str(w, &r.smiles)?;
        for slot in &r.properties {
            match slot {
                None => w.write_all(&[0])?,
                Some(v) => {
                    let prov = match v.provenance {
                        Provenance::Database => 1u8,
                        Provenance::Computed => 2u8,
                    };
                    w.write_all(&[prov])?;
                    w.write_all(&v.value.to_bits().to_le_bytes())?;
                    match &v.source_text {
                        Some(t) => {
                            w.write_all(&[1])?;
                            put_str(w, t)?;
                        }
                        None => w.write_all(&[0])?,
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn read_cache(path: &Path, format: CacheFormat) -> Result<RecordStore, IngestError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let records = match format {
        CacheFormat::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in r.lines().enumerate() {
                let line = line.map_err(io_err(path))?;
                let rec: Record = serde_json::from_str(&line)
                    .map_err(|e| IngestError::Cache(format!("line {}: {e}", i + 1)))?;
                out.push(rec);
            }
            out
        }
        CacheFormat::Binary => read_binary_cache(&mut r).map_err(|e| IngestError::Cache(e.to_string()))?,
    };
    RecordStore::from_records(records)
}

fn get_exact<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_str(r: &mut impl Read) -> io::Result<String> {
    let len = u32::from_le_bytes(get_exact(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn read_binary_cache(r: &mut impl Read) -> io::Result<Vec<Record>> {
    let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    if &get_exact::<4>(r)? != RECORD_MAGIC {
        return Err(invalid("bad magic"));
    }
    let version = u32::from_le_bytes(get_exact(r)?);
    if version != RECORD_CACHE_VERSION {
        return Err(invalid(&format!(
            "version {version} (expected {RECORD_CACHE_VERSION})"
        )));
    }
    let count = u64::from_le_bytes(get_exact(r)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let cid = u64::from_le_bytes(get_exact(r)?);
        let ordinal = u64::from_le_bytes(get_exact(r)?) as usize;
        let smiles = get_str(r)?;
        let mut record = Record::new(cid, smiles, ordinal);
        for kind in PropertyKind::ALL {
            let [tag] = get_exact::<1>(r)?;
            let provenance = match tag {
                0 => continue,
                1 => Provenance::Database,
                2 => Provenance::Computed,
                _ => return Err(invalid("bad provenance tag")),
            };
            let value = f64::from_bits(u64::from_le_bytes(get_exact(r)?));
            let [has_text] = get_exact::<1>(r)?;
            let source_text = if has_text == 1 { Some(get_str(r)?) } else { None };
            record = record.with_value(PropertyValue {
                kind,
                value,
                provenance,
                source_text,
            });
        }
        out.push(record);
    }
    Ok(out)
}
