//! Answer parsing, per-group accuracy and the level-weighted sum.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{Domain, KeyEntry, OPTION_LETTERS};

/// Weights of levels 1..=4.
pub const LEVEL_WEIGHTS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("answer references unknown question id '{0}'")]
    UnknownQuestion(String),
    #[error("question id '{0}' answered more than once")]
    DuplicateAnswer(String),
    #[error("duplicate question id '{0}' in answer key")]
    DuplicateKey(String),
    #[error("level {0} score is missing")]
    MissingLevel(u8),
    #[error("level {0} score given more than once")]
    DuplicateLevel(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub reply_text: String,
}

fn number_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

fn letter_index(c: char) -> Option<usize> {
    OPTION_LETTERS.iter().position(|l| *l == c.to_ascii_uppercase())
}

/// Maps a free-text reply onto an option index. Tried in order: a leading
/// option letter (`B`, `b)`, `(C)`, `D.`), a unique exact match of a number
/// in the reply against an option's rendering, a unique isolated capital
/// letter A-D. `None` means unparsed.
pub fn parse_answer(reply: &str, options: &[String]) -> Option<usize> {
    let text = reply.trim();
    let body = text.strip_prefix('(').unwrap_or(text);
    let mut chars = body.chars();
    if let Some(first) = chars.next() {
        let rest = chars.as_str();
        let terminated = rest.is_empty() || rest.starts_with([')', '.', ':']);
        if terminated {
            if let Some(i) = letter_index(first).filter(|&i| i < options.len()) {
                return Some(i);
            }
        }
    }

    let tokens: HashSet<&str> = number_token().find_iter(text).map(|m| m.as_str()).collect();
    let hits: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| tokens.contains(o.as_str()))
        .map(|(i, _)| i)
        .collect();
    if hits.len() == 1 {
        return Some(hits[0]);
    }

    let isolated: HashSet<usize> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| w.len() == 1)
        .filter_map(|w| w.chars().next())
        .filter(|c| c.is_ascii_uppercase())
        .filter_map(letter_index)
        .filter(|&i| i < options.len())
        .collect();
    if isolated.len() == 1 {
        return isolated.into_iter().next();
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: u8,
    pub in_acc: f64,
    pub out_acc: f64,
    pub s: f64,
}

impl LevelScore {
    pub fn new(level: u8, in_acc: f64, out_acc: f64) -> Self {
        LevelScore {
            level,
            in_acc,
            out_acc,
            s: in_acc + out_acc,
        }
    }
}

/// `0.4*S4 + 0.3*S3 + 0.2*S2 + 0.1*S1` where `S_i` = in + out accuracy.
pub fn weighted_sum(levels: &[LevelScore]) -> Result<f64, ScoreError> {
    let mut s = [None; 4];
    for l in levels {
        let slot = s
            .get_mut(usize::from(l.level).wrapping_sub(1))
            .ok_or(ScoreError::MissingLevel(l.level))?;
        if slot.is_some() {
            return Err(ScoreError::DuplicateLevel(l.level));
        }
        *slot = Some(l.in_acc + l.out_acc);
    }
    let mut ws = 0.0;
    for (i, (v, w)) in s.iter().zip(LEVEL_WEIGHTS).enumerate() {
        ws += w * v.ok_or(ScoreError::MissingLevel(i as u8 + 1))?;
    }
    Ok(ws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub domain: Domain,
    pub level: u8,
    pub repetition: u8,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub groups: Vec<GroupScore>,
    pub levels: Vec<LevelScore>,
    /// Absent when the key does not cover all four levels.
    pub ws: Option<f64>,
    pub unparsed: usize,
    pub missing: usize,
}

/// Scores answers against the key. Missing answers count as wrong.
pub fn score_run(answers: &[Answer], key: &[KeyEntry]) -> Result<Report, ScoreError> {
    let mut by_id: HashMap<&str, &KeyEntry> = HashMap::with_capacity(key.len());
    for k in key {
        if by_id.insert(&k.question_id, k).is_some() {
            return Err(ScoreError::DuplicateKey(k.question_id.clone()));
        }
    }
    let mut replies: HashMap<&str, &str> = HashMap::with_capacity(answers.len());
    for a in answers {
        if !by_id.contains_key(a.question_id.as_str()) {
            return Err(ScoreError::UnknownQuestion(a.question_id.clone()));
        }
        if replies.insert(&a.question_id, &a.reply_text).is_some() {
            return Err(ScoreError::DuplicateAnswer(a.question_id.clone()));
        }
    }

    let mut tallies: BTreeMap<(Domain, u8, u8), (usize, usize)> = BTreeMap::new();
    let mut unparsed = 0;
    let mut missing = 0;
    for k in key {
        let t = tallies.entry((k.domain, k.level, k.repetition)).or_default();
        t.1 += 1;
        match replies.get(k.question_id.as_str()) {
            None => missing += 1,
            Some(reply) => match parse_answer(reply, &k.options) {
                None => unparsed += 1,
                Some(i) if i == k.correct_index => t.0 += 1,
                Some(_) => {}
            },
        }
    }

    let groups: Vec<GroupScore> = tallies
        .iter()
        .map(|(&(domain, level, repetition), &(correct, total))| GroupScore {
            domain,
            level,
            repetition,
            correct,
            total,
            accuracy: correct as f64 / total as f64 * 100.0,
        })
        .collect();

    let mut per_dl: BTreeMap<(u8, Domain), Vec<f64>> = BTreeMap::new();
    for g in &groups {
        per_dl.entry((g.level, g.domain)).or_default().push(g.accuracy);
    }
    let mean = |level: u8, d: Domain| -> Option<f64> {
        per_dl
            .get(&(level, d))
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let levels: Vec<LevelScore> = (1..=4u8)
        .filter(|&l| mean(l, Domain::In).is_some() || mean(l, Domain::Out).is_some())
        .map(|l| LevelScore::new(l, mean(l, Domain::In).unwrap_or(0.0), mean(l, Domain::Out).unwrap_or(0.0)))
        .collect();
    let ws = weighted_sum(&levels).ok();
    if ws.is_none() {
        log::warn!("answer key does not cover all four levels; weighted sum omitted");
    }
    Ok(Report {
        groups,
        levels,
        ws,
        unparsed,
        missing,
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ScoreError> {
    let text = fs::read_to_string(path).map_err(|source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScoreError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_answers(path: &Path) -> Result<Vec<Answer>, ScoreError> {
    read_jsonl(path)
}

pub fn load_key(path: &Path) -> Result<Vec<KeyEntry>, ScoreError> {
    read_jsonl(path)
}

/// Aligned plain-text table, one decimal.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<7} {:>7} {:>7} {:>7}", "level", "in", "out", "S");
    for l in &report.levels {
        let _ = writeln!(out, "{:<7} {:>7.1} {:>7.1} {:>7.1}", format!("L{}", l.level), l.in_acc, l.out_acc, l.s);
    }
    match report.ws {
        Some(ws) => {
            let _ = writeln!(out, "W.S.    {ws:.1}");
        }
        None => out.push_str("W.S.    n/a (levels missing)\n"),
    }
    let _ = writeln!(out, "unparsed {}  missing {}", report.unparsed, report.missing);
    out
}
