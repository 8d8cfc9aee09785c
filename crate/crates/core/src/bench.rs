//! Four-level multiple-choice benchmark over in-domain (train) and
//! out-of-domain records.
//!
//! Level 1: simple perturbations of the truth. Level 2: nine signed
//! variants. Level 3: values of other properties and/or other molecules.
//! Level 4: the same property of the most similar molecules.
//!
//! Every option, the truth included, is rendered with
//! [`render_option`]; candidates are deduplicated by that rendering.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::PropertyKind;
use crate::ingest::Record;
use crate::par;
use crate::render::render_option;
use crate::rng;
use crate::similarity::{SimilarityError, SimilarityIndex};
use crate::templates::Template;

pub const OPTION_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];
pub const ANSWER_DIRECTIVE: &str = "Answer with the letter of the correct option.";
pub const ANSWER_KEY_FILE: &str = "answer_key.jsonl";

/// Attempts per category before a Level 3 question is given up.
const LEVEL3_ATTEMPTS: usize = 32;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no test templates available")]
    NoTemplates,
    #[error("{0}-domain record pool is empty")]
    EmptyPool(Domain),
    #[error("record {0} is missing property values; run enrichment first")]
    NotEnriched(u64),
    #[error("level {0} is not one of 1..=4")]
    BadLevel(u8),
    #[error("count and repetitions must be positive")]
    BadCount,
    #[error("level 4 needs a similarity index for the {0} domain")]
    NeedsIndex(Domain),
    #[error("group {group}: only {found} of {wanted} eligible questions in the pool")]
    PoolExhausted { group: String, found: usize, wanted: usize },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    In,
    Out,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::In, Domain::Out];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::In => "in",
            Domain::Out => "out",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in" => Ok(Domain::In),
            "out" => Ok(Domain::Out),
            _ => Err(format!("unknown domain '{s}' (expected in or out)")),
        }
    }
}

/// Where an option's value came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum OptionSource {
    Truth,
    Perturbation { op: String },
    SameMolOtherProp { property: PropertyKind },
    OtherMolSameProp { cid: u64 },
    OtherMolOtherProp { cid: u64, property: PropertyKind },
    Neighbor { cid: u64, rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub rendered: String,
    pub op: String,
}

fn dedupe(truth: f64, raw: Vec<(f64, &str)>) -> Vec<Candidate> {
    let truth_text = render_option(truth);
    let mut seen = HashSet::from([truth_text]);
    raw.into_iter()
        .filter_map(|(value, op)| {
            let rendered = render_option(value);
            seen.insert(rendered.clone()).then(|| Candidate {
                value,
                rendered,
                op: op.to_string(),
            })
        })
        .collect()
}

/// `{v+0.1, v-0.1, 10v, v/10}` minus collisions.
pub fn perturb_level1(v: f64) -> Vec<Candidate> {
    dedupe(v, vec![(v + 0.1, "+0.1"), (v - 0.1, "-0.1"), (v * 10.0, "*10"), (v / 10.0, "/10")])
}

/// `{v±0.1, v±1, -v, -v±0.1, -v±1}` minus collisions.
pub fn perturb_level2(v: f64) -> Vec<Candidate> {
    let n = -v;
    dedupe(
        v,
        vec![
            (v + 0.1, "+0.1"),
            (v - 0.1, "-0.1"),
            (v + 1.0, "+1"),
            (v - 1.0, "-1"),
            (n, "neg"),
            (n + 0.1, "neg+0.1"),
            (n - 0.1, "neg-0.1"),
            (n + 1.0, "neg+1"),
            (n - 1.0, "neg-1"),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMeta {
    pub cid: u64,
    pub property: PropertyKind,
    pub template_id: u32,
    pub sources: Vec<OptionSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuestion {
    pub question_id: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub level: u8,
    pub domain: Domain,
    pub repetition: u8,
    pub meta: QuestionMeta,
}

/// One answer-key row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub question_id: String,
    pub domain: Domain,
    pub level: u8,
    pub repetition: u8,
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl From<&BenchQuestion> for KeyEntry {
    fn from(q: &BenchQuestion) -> Self {
        KeyEntry {
            question_id: q.question_id.clone(),
            domain: q.domain,
            level: q.level,
            repetition: q.repetition,
            options: q.options.clone(),
            correct_index: q.correct_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGroup {
    pub domain: Domain,
    pub level: u8,
    pub repetition: u8,
    /// Sampled (record, property) pairs that could not yield a question.
    pub skipped: usize,
    pub questions: Vec<BenchQuestion>,
}

impl BenchGroup {
    pub fn name(&self) -> String {
        group_name(self.domain, self.level, self.repetition)
    }

    pub fn file_name(&self) -> String {
        format!("bench_{}.jsonl", self.name())
    }
}

fn group_name(domain: Domain, level: u8, rep: u8) -> String {
    format!("{domain}_L{level}_r{rep}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub groups: Vec<BenchGroup>,
}

impl BenchSuite {
    pub fn question_count(&self) -> usize {
        self.groups.iter().map(|g| g.questions.len()).sum()
    }

    pub fn questions(&self) -> impl Iterator<Item = &BenchQuestion> {
        self.groups.iter().flat_map(|g| &g.questions)
    }

    pub fn answer_key(&self) -> Vec<KeyEntry> {
        self.questions().map(KeyEntry::from).collect()
    }

    /// Writes one JSONL file per group plus the answer key; returns the
    /// file names written, in order.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>, BenchError> {
        let mut names = Vec::new();
        for g in &self.groups {
            let name = g.file_name();
            write_jsonl(&dir.join(&name), &g.questions)?;
            names.push(name);
        }
        write_jsonl(&dir.join(ANSWER_KEY_FILE), &self.answer_key())?;
        names.push(ANSWER_KEY_FILE.to_string());
        Ok(names)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let io_err = |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub count: usize,
    pub reps: u8,
    pub levels: Vec<u8>,
    pub domains: Vec<Domain>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            count: 200,
            reps: 3,
            levels: vec![1, 2, 3, 4],
            domains: Domain::ALL.to_vec(),
        }
    }
}

/// Record pools, test templates and per-domain similarity indexes.
pub struct BenchInput<'a> {
    pub in_domain: &'a [Record],
    pub out_domain: &'a [Record],
    pub templates: &'a [Template],
    pub in_index: Option<&'a SimilarityIndex>,
    pub out_index: Option<&'a SimilarityIndex>,
}

impl<'a> BenchInput<'a> {
    fn pool(&self, d: Domain) -> &'a [Record] {
        match d {
            Domain::In => self.in_domain,
            Domain::Out => self.out_domain,
        }
    }

    fn index(&self, d: Domain) -> Option<&'a SimilarityIndex> {
        match d {
            Domain::In => self.in_index,
            Domain::Out => self.out_index,
        }
    }
}

type Distractors = Vec<(String, OptionSource)>;

fn level12(record: &Record, p: PropertyKind, level: u8, rng: &mut ChaCha8Rng) -> Option<Distractors> {
    let v = record.value(p).value;
    let cands = if level == 1 { perturb_level1(v) } else { perturb_level2(v) };
    if cands.len() < 3 {
        return None;
    }
    Some(
        cands
            .choose_multiple(rng, 3)
            .map(|c| (c.rendered.clone(), OptionSource::Perturbation { op: c.op.clone() }))
            .collect(),
    )
}

fn other_property(p: PropertyKind, rng: &mut ChaCha8Rng) -> PropertyKind {
    let others: Vec<PropertyKind> = PropertyKind::ALL.into_iter().filter(|k| *k != p).collect();
    others[rng.gen_range(0..others.len())]
}

fn level3(pool: &[Record], pos: usize, p: PropertyKind, rng: &mut ChaCha8Rng) -> Option<Distractors> {
    let record = &pool[pos];
    let mut taken = HashSet::from([render_option(record.value(p).value)]);
    let mut out = Vec::with_capacity(3);

    let mut props: Vec<PropertyKind> = PropertyKind::ALL.into_iter().filter(|k| *k != p).collect();
    props.shuffle(rng);
    let same = props.into_iter().find_map(|q| {
        let text = render_option(record.value(q).value);
        taken.insert(text.clone()).then_some((text, OptionSource::SameMolOtherProp { property: q }))
    })?;
    out.push(same);

    if pool.len() < 2 {
        return None;
    }
    let other = |rng: &mut ChaCha8Rng| {
        let mut i = rng.gen_range(0..pool.len() - 1);
        if i >= pos {
            i += 1;
        }
        &pool[i]
    };
    let mut found = None;
    for _ in 0..LEVEL3_ATTEMPTS {
        let o = other(rng);
        let text = render_option(o.value(p).value);
        if taken.insert(text.clone()) {
            found = Some((text, OptionSource::OtherMolSameProp { cid: o.cid }));
            break;
        }
    }
    out.push(found?);
    let mut found = None;
    for _ in 0..LEVEL3_ATTEMPTS {
        let o = other(rng);
        let q = other_property(p, rng);
        let text = render_option(o.value(q).value);
        if taken.insert(text.clone()) {
            found = Some((text, OptionSource::OtherMolOtherProp { cid: o.cid, property: q }));
            break;
        }
    }
    out.push(found?);
    Some(out)
}

/// Same property of the nearest neighbours, walking the ranking until three
/// distinct values (all different from the truth) are found.
pub fn level4_distractors(
    record: &Record,
    p: PropertyKind,
    pool: &HashMap<u64, &Record>,
    index: &SimilarityIndex,
) -> Result<Option<Distractors>, BenchError> {
    let mut taken = HashSet::from([render_option(record.value(p).value)]);
    let mut out = Vec::with_capacity(3);
    for (rank, hit) in index.ranking(record.cid)?.into_iter().enumerate() {
        let n = pool.get(&hit.record_id).ok_or(SimilarityError::UnknownRecord(hit.record_id))?;
        let text = render_option(n.value(p).value);
        if taken.insert(text.clone()) {
            out.push((text, OptionSource::Neighbor { cid: n.cid, rank: rank + 1 }));
            if out.len() == 3 {
                return Ok(Some(out));
            }
        }
    }
    Ok(None)
}

fn option_block(options: &[String]) -> String {
    options
        .iter()
        .zip(OPTION_LETTERS)
        .map(|(o, l)| format!("{l}) {o}"))
        .collect::<Vec<_>>()
        .join("\n")
}

struct GroupSpec {
    domain: Domain,
    level: u8,
    rep: u8,
}

fn build_group(input: &BenchInput, g: &GroupSpec, count: usize, seed: u64, lookup: &HashMap<u64, &Record>) -> Result<BenchGroup, BenchError> {
    let pool = input.pool(g.domain);
    let mut r = rng::stream(
        seed,
        &[rng::hash_str("bench"), g.domain as u64, u64::from(g.level), u64::from(g.rep)],
    );
    let n_props = PropertyKind::ALL.len();
    let mut order: Vec<usize> = (0..pool.len() * n_props).collect();
    order.shuffle(&mut r);

    let mut questions = Vec::with_capacity(count);
    let mut skipped = 0;
    for slot in order {
        if questions.len() == count {
            break;
        }
        let pos = slot / n_props;
        let p = PropertyKind::ALL[slot % n_props];
        let record = &pool[pos];
        let distractors = match g.level {
            1 | 2 => level12(record, p, g.level, &mut r),
            3 => level3(pool, pos, p, &mut r),
            _ => {
                let index = input.index(g.domain).ok_or(BenchError::NeedsIndex(g.domain))?;
                level4_distractors(record, p, lookup, index)?
            }
        };
        let Some(distractors) = distractors else {
            skipped += 1;
            continue;
        };
        let mut options: Vec<(String, OptionSource)> = Vec::with_capacity(4);
        options.push((render_option(record.value(p).value), OptionSource::Truth));
        options.extend(distractors);
        options.shuffle(&mut r);
        let correct_index = options
            .iter()
            .position(|(_, s)| *s == OptionSource::Truth)
            .expect("truth is among the options");
        let t = &input.templates[r.gen_range(0..input.templates.len())];
        let (texts, sources): (Vec<String>, Vec<OptionSource>) = options.into_iter().unzip();
        let prompt = format!(
            "{}\n{}\n{ANSWER_DIRECTIVE}",
            t.fill_question(p.display_name(), &record.smiles),
            option_block(&texts)
        );
        questions.push(BenchQuestion {
            question_id: format!("{}-L{}-r{}-{:04}", g.domain, g.level, g.rep, questions.len()),
            prompt,
            options: texts,
            correct_index,
            level: g.level,
            domain: g.domain,
            repetition: g.rep,
            meta: QuestionMeta {
                cid: record.cid,
                property: p,
                template_id: t.id,
                sources,
            },
        });
    }
    if questions.len() < count {
        return Err(BenchError::PoolExhausted {
            group: group_name(g.domain, g.level, g.rep),
            found: questions.len(),
            wanted: count,
        });
    }
    Ok(BenchGroup {
        domain: g.domain,
        level: g.level,
        repetition: g.rep,
        skipped,
        questions,
    })
}

fn specs(config: &BenchConfig) -> Result<Vec<GroupSpec>, BenchError> {
    if config.count == 0 || config.reps == 0 {
        return Err(BenchError::BadCount);
    }
    let mut out = Vec::new();
    for &domain in &config.domains {
        for &level in &config.levels {
            if !(1..=4).contains(&level) {
                return Err(BenchError::BadLevel(level));
            }
            for rep in 1..=config.reps {
                out.push(GroupSpec { domain, level, rep });
            }
        }
    }
    Ok(out)
}

fn check(input: &BenchInput, config: &BenchConfig) -> Result<(), BenchError> {
    if input.templates.is_empty() {
        return Err(BenchError::NoTemplates);
    }
    for &d in &config.domains {
        let pool = input.pool(d);
        if pool.is_empty() {
            return Err(BenchError::EmptyPool(d));
        }
        if let Some(r) = pool.iter().find(|r| !r.is_complete()) {
            return Err(BenchError::NotEnriched(r.cid));
        }
        if config.levels.contains(&4) && input.index(d).is_none() {
            return Err(BenchError::NeedsIndex(d));
        }
    }
    Ok(())
}

fn lookups<'a>(input: &BenchInput<'a>) -> [HashMap<u64, &'a Record>; 2] {
    Domain::ALL.map(|d| input.pool(d).iter().map(|r| (r.cid, r)).collect())
}

/// Generates every (domain, level, repetition) group; groups run in
/// parallel, each on its own random stream.
pub fn gen_suite(input: &BenchInput, config: &BenchConfig, seed: u64) -> Result<BenchSuite, BenchError> {
    check(input, config)?;
    let specs = specs(config)?;
    let lookups = lookups(input);
    let groups = par::map(&specs, |s| build_group(input, s, config.count, seed, &lookups[s.domain as usize]));
    Ok(BenchSuite {
        groups: groups.into_iter().collect::<Result<_, _>>()?,
    })
}

pub fn gen_suite_sequential(input: &BenchInput, config: &BenchConfig, seed: u64) -> Result<BenchSuite, BenchError> {
    check(input, config)?;
    let specs = specs(config)?;
    let lookups = lookups(input);
    let groups = par::map_seq(&specs, |s| build_group(input, s, config.count, seed, &lookups[s.domain as usize]));
    Ok(BenchSuite {
        groups: groups.into_iter().collect::<Result<_, _>>()?,
    })
}
