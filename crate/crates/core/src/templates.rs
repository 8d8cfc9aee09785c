//! Question/answer templates: loading, filtering, embedding and the
//! density-based train/test split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROPERTY: &str = "{PROPERTY}";
pub const COMPOUND: &str = "{COMPOUND}";
pub const VALUE: &str = "{VALUE}";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("template {id}: {reason}")]
    Invalid { id: u32, reason: String },
    #[error("{} invalid templates: {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMany(Vec<TemplateError>),
    #[error("duplicate template id {0}")]
    DuplicateId(u32),
    #[error("no embedding vector for template id {0}")]
    MissingVector(u32),
    #[error("vector for template id {id} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: u32, found: usize, expected: usize },
    #[error("vector for template id {0} has a non-finite entry")]
    NonFinite(u32),
    #[error("split needs at least one embedding")]
    NoEmbeddings,
    #[error("invalid DBSCAN parameters: eps={eps}, min_pts={min_pts}")]
    BadParameters { eps: f64, min_pts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: u32,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub split: Split,
}

impl Template {
    pub fn new(id: u32, question: impl Into<String>, answer: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Template {
            id,
            question: question.into(),
            answer: answer.into(),
            split: Split::Unassigned,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let invalid = |reason: String| TemplateError::Invalid { id: self.id, reason };
        for ph in [PROPERTY, COMPOUND] {
            match self.question.matches(ph).count() {
                1 => {}
                0 => return Err(invalid(format!("question lacks {ph}"))),
                n => return Err(invalid(format!("question has {ph} {n} times"))),
            }
        }
        if self.question.contains(VALUE) {
            return Err(invalid(format!("question contains {VALUE}")));
        }
        if !self.answer.contains(VALUE) {
            return Err(invalid(format!("answer lacks {VALUE}")));
        }
        Ok(())
    }

    pub fn fill_question(&self, property: &str, compound: &str) -> String {
        self.question.replace(PROPERTY, property).replace(COMPOUND, compound)
    }

    pub fn fill_answer(&self, property: &str, compound: &str, value: &str) -> String {
        self.answer_scaffold(property, compound).replace(VALUE, value)
    }

    /// The answer with property and compound filled but `{VALUE}` kept.
    pub fn answer_scaffold(&self, property: &str, compound: &str) -> String {
        self.answer.replace(PROPERTY, property).replace(COMPOUND, compound)
    }
}

#[derive(Deserialize)]
struct RawTemplate {
    id: u32,
    question: String,
    answer: String,
}

/// Loads a JSONL template file. Every template is validated; all failures
/// are reported together.
pub fn load_templates(path: &Path) -> Result<Vec<Template>, TemplateError> {
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTemplate = serde_json::from_str(line).map_err(|e| TemplateError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(raw.id) {
            return Err(TemplateError::DuplicateId(raw.id));
        }
        match Template::new(raw.id, raw.question, raw.answer) {
            Ok(t) => out.push(t),
            Err(e) => errors.push(e),
        }
    }
    match errors.len() {
        0 => {}
        1 => return Err(errors.remove(0)),
        _ => return Err(TemplateError::InvalidMany(errors)),
    }
    if out.is_empty() {
        log::warn!("{}: no templates", path.display());
    }
    Ok(out)
}

pub fn save_templates(templates: &[Template], path: &Path) -> Result<(), TemplateError> {
    let mut body = String::new();
    for t in templates {
        body.push_str(&serde_json::to_string(t).expect("template serializes"));
        body.push('\n');
    }
    fs::write(path, body).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Plain text, one id per line; `#` starts a comment.
pub fn load_blocklist(path: &Path) -> Result<HashSet<u32>, TemplateError> {
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let entry = line.split('#').next().unwrap_or("").trim();
        if entry.is_empty() {
            continue;
        }
        let id = entry.parse().map_err(|_| TemplateError::Malformed {
            line: i + 1,
            message: format!("'{entry}' is not a template id"),
        })?;
        ids.insert(id);
    }
    Ok(ids)
}

const YES_NO_OPENERS: [&str; 13] = [
    "is", "are", "does", "do", "can", "could", "will", "would", "should", "has", "have", "was", "were",
];
const REQUEST_MODALS: [&str; 4] = ["can", "could", "will", "would"];
const REQUEST_VERBS: [&str; 10] = [
    "provide", "tell", "give", "share", "state", "report", "list", "find", "calculate", "determine",
];

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase())
        .filter(|w| !w.is_empty())
}

/// True for general yes/no questions: the first word is an auxiliary verb.
/// Polite requests ("Could you provide ...", "Can you tell me ...") open the
/// same way but ask for a value, so they are kept.
pub fn is_yes_no_question(question: &str) -> bool {
    let mut w = words(question);
    let Some(first) = w.next() else { return false };
    if !YES_NO_OPENERS.contains(&first.as_str()) {
        return false;
    }
    if REQUEST_MODALS.contains(&first.as_str()) {
        let second = w.next();
        let mut third = w.next();
        if third.as_deref() == Some("please") {
            third = w.next();
        }
        if second.as_deref() == Some("you") && third.is_some_and(|v| REQUEST_VERBS.contains(&v.as_str())) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub duplicates: Vec<u32>,
    pub yes_no: Vec<u32>,
    pub blocked: Vec<u32>,
}

/// Dedup (keep first) → drop yes/no → drop blocklisted ids. Idempotent.
pub fn filter_templates(templates: Vec<Template>, blocklist: &HashSet<u32>) -> (Vec<Template>, FilterReport) {
    let mut report = FilterReport::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(templates.len());
    for t in templates {
        if !seen.insert(t.question.clone()) {
            report.duplicates.push(t.id);
        } else if is_yes_no_question(&t.question) {
            report.yes_no.push(t.id);
        } else if blocklist.contains(&t.id) {
            report.blocked.push(t.id);
        } else {
            kept.push(t);
        }
    }
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateEmbedding {
    #[serde(rename = "id")]
    pub template_id: u32,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingMode {
    Internal,
    External(PathBuf),
}

fn trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Character-trigram TF-IDF over the questions, smooth idf, L2-normalized.
pub fn tfidf_embeddings(templates: &[Template]) -> Vec<TemplateEmbedding> {
    let docs: Vec<HashMap<String, f64>> = templates
        .iter()
        .map(|t| {
            let mut tf = HashMap::new();
            for g in trigrams(&t.question) {
                *tf.entry(g).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for g in d.keys() {
            *df.entry(g.as_str()).or_insert(0) += 1;
        }
    }
    let n = docs.len() as f64;
    let vocab: HashMap<&str, (usize, f64)> = df
        .iter()
        .enumerate()
        .map(|(i, (g, &c))| (*g, (i, ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0)))
        .collect();
    templates
        .iter()
        .zip(&docs)
        .map(|(t, tf)| {
            let mut v = vec![0.0; vocab.len()];
            for (g, &count) in tf {
                let (i, idf) = vocab[g.as_str()];
                v[i] = count * idf;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            TemplateEmbedding {
                template_id: t.id,
                vector: v,
            }
        })
        .collect()
}

/// Vectors from a JSONL `{id, vector}` file, in template order.
pub fn external_embeddings(templates: &[Template], path: &Path) -> Result<Vec<TemplateEmbedding>, TemplateError> {
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut by_id = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: TemplateEmbedding = serde_json::from_str(line).map_err(|e| TemplateError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        by_id.insert(e.template_id, e.vector);
    }
    let mut out: Vec<TemplateEmbedding> = Vec::with_capacity(templates.len());
    for t in templates {
        let vector = by_id.remove(&t.id).ok_or(TemplateError::MissingVector(t.id))?;
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(TemplateError::NonFinite(t.id));
        }
        if let Some(first) = out.first() {
            if vector.len() != first.vector.len() {
                return Err(TemplateError::DimensionMismatch {
                    id: t.id,
                    found: vector.len(),
                    expected: first.vector.len(),
                });
            }
        }
        out.push(TemplateEmbedding {
            template_id: t.id,
            vector,
        });
    }
    Ok(out)
}

pub fn embed_templates(templates: &[Template], mode: &EmbeddingMode) -> Result<Vec<TemplateEmbedding>, TemplateError> {
    match mode {
        EmbeddingMode::Internal => Ok(tfidf_embeddings(templates)),
        EmbeddingMode::External(path) => external_embeddings(templates, path),
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

/// DBSCAN labels: `Some(cluster)` or `None` for noise. A point is core when
/// its eps-neighbourhood (itself included) holds at least `min_pts` points.
/// Clusters are numbered in order of their first member.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| cosine_distance(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start].is_some() || !core[start] {
            continue;
        }
        labels[start] = Some(next);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub train: Vec<u32>,
    pub test: Vec<u32>,
    pub clusters: usize,
}

/// Clustered templates go to train, noise to test.
pub fn split_templates(embeddings: &[TemplateEmbedding], eps: f64, min_pts: usize) -> Result<SplitOutcome, TemplateError> {
    if embeddings.is_empty() {
        return Err(TemplateError::NoEmbeddings);
    }
    if !(eps.is_finite() && eps >= 0.0) || min_pts == 0 {
        return Err(TemplateError::BadParameters { eps, min_pts });
    }
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.vector.clone()).collect();
    let labels = dbscan(&points, eps, min_pts);
    let mut out = SplitOutcome {
        train: Vec::new(),
        test: Vec::new(),
        clusters: labels.iter().flatten().max().map_or(0, |m| m + 1),
    };
    for (e, label) in embeddings.iter().zip(&labels) {
        match label {
            Some(_) => out.train.push(e.template_id),
            None => out.test.push(e.template_id),
        }
    }
    if out.train.is_empty() {
        log::warn!("every template is noise at eps={eps}, min_pts={min_pts}; train split is empty");
    }
    Ok(out)
}

pub fn apply_split(templates: &mut [Template], split: &SplitOutcome) {
    let test: HashSet<u32> = split.test.iter().copied().collect();
    for t in templates {
        t.split = if test.contains(&t.id) { Split::Test } else { Split::Train };
    }
}
