//! Preference pairs: the similarity-based numeric method, the four-level
//! score ladder, and the six alternative reject strategies.
//!
//! All randomness is keyed by (cid, property, purpose) rather than by
//! strategy, so strategies that share a branch draw the same values.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::PropertyKind;
use crate::ingest::Record;
use crate::par;
use crate::rng;
use crate::similarity::{SimilarityError, SimilarityIndex};
use crate::synth::{pick_template, scaffold_prompt, value_only_prompt};
use crate::templates::Template;

const CHUNK: usize = 1024;
const TEMPLATE_STAGE: &str = "pref";

#[derive(Debug, Error)]
pub enum PrefError {
    #[error("unknown strategy '{0}' (expected rldbf, alt1..alt6 or ladder)")]
    BadStrategy(String),
    #[error("K must be at least 1")]
    ZeroK,
    #[error("no training records available")]
    NoRecords,
    #[error("no training templates available")]
    NoTemplates,
    #[error("record {0} is missing property values; run enrichment first")]
    NotEnriched(u64),
    #[error("strategy {0} needs a similarity index")]
    NeedsIndex(Strategy),
    #[error("ladder needs two different molecules")]
    SameInstance,
    #[error("ladder needs two different attributes")]
    SameAttribute,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    Rldbf,
    Alt(u8),
    Ladder,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Rldbf => f.write_str("rldbf"),
            Strategy::Alt(n) => write!(f, "alt{n}"),
            Strategy::Ladder => f.write_str("ladder"),
        }
    }
}

impl FromStr for Strategy {
    type Err = PrefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rldbf" => Ok(Strategy::Rldbf),
            "ladder" => Ok(Strategy::Ladder),
            _ => s
                .strip_prefix("alt")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=6).contains(n))
                .map(Strategy::Alt)
                .ok_or_else(|| PrefError::BadStrategy(s.to_string())),
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = PrefError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectCategory {
    SameMolOtherProp,
    OtherMolSameProp,
    OtherMolOtherProp,
}

impl RejectCategory {
    fn tag(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub strategy: Strategy,
    pub cid: u64,
    pub property: PropertyKind,
    pub rejected_source_cid: u64,
    pub rejected_source_property: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_rank: Option<usize>,
    pub template_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<RejectCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: PairMeta,
}

/// Per (molecule, property) accounting: `emitted + skipped + shortfall`
/// equals the number of pairs the strategy aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAccount {
    pub cid: u64,
    pub property: PropertyKind,
    pub target: usize,
    pub emitted: usize,
    pub skipped: usize,
    pub shortfall: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefReport {
    pub groups: usize,
    pub emitted: usize,
    pub skipped: usize,
    pub shortfall: usize,
    #[serde(skip)]
    pub accounts: Vec<GroupAccount>,
}

impl PrefReport {
    fn absorb(&mut self, accounts: Vec<GroupAccount>) {
        for a in &accounts {
            self.groups += 1;
            self.emitted += a.emitted;
            self.skipped += a.skipped;
            self.shortfall += a.shortfall;
        }
        self.accounts.extend(accounts);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderStatement {
    pub text: String,
    pub score: u8,
    pub source_cid: u64,
    pub source_property: PropertyKind,
}

/// Ladder sentence: attribute 1 of instance A with some value.
pub fn ladder_text(attr: PropertyKind, instance: &str, value: &str) -> String {
    format!("{} of {instance} is {value}", attr.display_name())
}

/// The four statements ranked 3 (true triple) down to 0 (both swapped).
pub fn ladder(a: &Record, b: &Record, attr1: PropertyKind, attr2: PropertyKind) -> Result<[LadderStatement; 4], PrefError> {
    if a.cid == b.cid {
        return Err(PrefError::SameInstance);
    }
    if attr1 == attr2 {
        return Err(PrefError::SameAttribute);
    }
    let stmt = |score: u8, src: &Record, prop: PropertyKind| LadderStatement {
        text: ladder_text(attr1, &a.smiles, &src.rendered(prop)),
        score,
        source_cid: src.cid,
        source_property: prop,
    };
    Ok([stmt(3, a, attr1), stmt(2, a, attr2), stmt(1, b, attr1), stmt(0, b, attr2)])
}

/// Shared inputs for pair generation over one record slice.
pub struct PrefContext<'a> {
    records: &'a [Record],
    templates: &'a [Template],
    index: Option<&'a SimilarityIndex>,
    positions: HashMap<u64, usize>,
    seed: u64,
}

impl<'a> PrefContext<'a> {
    pub fn new(
        records: &'a [Record],
        templates: &'a [Template],
        index: Option<&'a SimilarityIndex>,
        seed: u64,
    ) -> Result<Self, PrefError> {
        if records.is_empty() {
            return Err(PrefError::NoRecords);
        }
        if templates.is_empty() {
            return Err(PrefError::NoTemplates);
        }
        if let Some(r) = records.iter().find(|r| !r.is_complete()) {
            return Err(PrefError::NotEnriched(r.cid));
        }
        let positions = records.iter().enumerate().map(|(i, r)| (r.cid, i)).collect();
        Ok(PrefContext {
            records,
            templates,
            index,
            positions,
            seed,
        })
    }

    fn record(&self, cid: u64) -> Option<&'a Record> {
        self.positions.get(&cid).map(|&i| &self.records[i])
    }

    /// Uniform other record, excluding position `me`.
    fn other_record(&self, me: usize, cid: u64, property: PropertyKind, category: RejectCategory) -> Option<&'a Record> {
        let n = self.records.len();
        if n < 2 {
            return None;
        }
        let mut r = rng::stream(
            self.seed,
            &[rng::hash_str("pref-other-mol"), cid, property.index() as u64, category.tag()],
        );
        let mut pick = r.gen_range(0..n - 1);
        if pick >= me {
            pick += 1;
        }
        Some(&self.records[pick])
    }

    fn other_property(&self, cid: u64, property: PropertyKind, category: RejectCategory) -> PropertyKind {
        let mut r = rng::stream(
            self.seed,
            &[rng::hash_str("pref-other-prop"), cid, property.index() as u64, category.tag()],
        );
        let pick = r.gen_range(0..PropertyKind::ALL.len() - 1);
        let others: Vec<PropertyKind> = PropertyKind::ALL.into_iter().filter(|k| *k != property).collect();
        others[pick]
    }

    fn neighbours(&self, cid: u64, k: usize) -> Result<Vec<u64>, PrefError> {
        let index = self.index.ok_or(PrefError::NeedsIndex(Strategy::Rldbf))?;
        Ok(index.top_k_sequential(cid, k)?.into_iter().map(|h| h.record_id).collect())
    }

    fn template(&self, cid: u64, property: PropertyKind) -> &'a Template {
        pick_template(self.templates, self.seed, TEMPLATE_STAGE, cid, property)
    }

    fn meta(&self, strategy: Strategy, c: &Record, p: PropertyKind, src: &Record, src_p: PropertyKind, t: &Template) -> PairMeta {
        PairMeta {
            strategy,
            cid: c.cid,
            property: p,
            rejected_source_cid: src.cid,
            rejected_source_property: src_p,
            similarity_rank: None,
            template_id: t.id,
            category: None,
            chosen_score: None,
            rejected_score: None,
        }
    }

    fn rldbf_record(&self, pos: usize, k: usize) -> Result<(Vec<PreferencePair>, Vec<GroupAccount>), PrefError> {
        let c = &self.records[pos];
        let neighbours = self.neighbours(c.cid, k)?;
        let mut pairs = Vec::new();
        let mut accounts = Vec::new();
        for p in PropertyKind::ALL {
            let t = self.template(c.cid, p);
            let prompt = value_only_prompt(&t.fill_question(p.display_name(), &c.smiles));
            let chosen = c.rendered(p);
            let mut acc = GroupAccount {
                cid: c.cid,
                property: p,
                target: k,
                emitted: 0,
                skipped: 0,
                shortfall: k - neighbours.len(),
            };
            for (rank, &ncid) in neighbours.iter().enumerate() {
                let s = self.record(ncid).ok_or(SimilarityError::UnknownRecord(ncid))?;
                let rejected = s.rendered(p);
                if rejected == chosen {
                    acc.skipped += 1;
                    continue;
                }
                let mut meta = self.meta(Strategy::Rldbf, c, p, s, p, t);
                meta.similarity_rank = Some(rank + 1);
                pairs.push(PreferencePair {
                    prompt: prompt.clone(),
                    chosen: chosen.clone(),
                    rejected,
                    meta,
                });
                acc.emitted += 1;
            }
            accounts.push(acc);
        }
        Ok((pairs, accounts))
    }

    fn alt_record(&self, pos: usize, n: u8) -> Result<(Vec<PreferencePair>, Vec<GroupAccount>), PrefError> {
        use RejectCategory::*;
        let c = &self.records[pos];
        let categories: &[RejectCategory] = match n {
            1 | 2 => &[SameMolOtherProp, OtherMolSameProp, OtherMolOtherProp],
            3..=5 => &[SameMolOtherProp, OtherMolSameProp],
            _ => &[OtherMolSameProp],
        };
        let nearest = if n >= 4 {
            let index = self.index.ok_or(PrefError::NeedsIndex(Strategy::Alt(n)))?;
            match index.top_k_sequential(c.cid, 1)?.first() {
                Some(h) => Some(self.record(h.record_id).ok_or(SimilarityError::UnknownRecord(h.record_id))?),
                None => None,
            }
        } else {
            None
        };
        let mut pairs = Vec::new();
        let mut accounts = Vec::new();
        for p in PropertyKind::ALL {
            let t = self.template(c.cid, p);
            let name = p.display_name();
            let q = t.fill_question(name, &c.smiles);
            let prompt = match n {
                1 => value_only_prompt(&q),
                5 | 6 => scaffold_prompt(&q, &t.answer_scaffold(name, &c.smiles)),
                _ => q,
            };
            let chosen = if n == 1 {
                c.rendered(p)
            } else {
                t.fill_answer(name, &c.smiles, &c.rendered(p))
            };
            let mut acc = GroupAccount {
                cid: c.cid,
                property: p,
                target: categories.len(),
                emitted: 0,
                skipped: 0,
                shortfall: 0,
            };
            for &cat in categories {
                let source: Option<(&Record, PropertyKind, Option<usize>)> = match cat {
                    SameMolOtherProp => Some((c, self.other_property(c.cid, p, cat), None)),
                    OtherMolSameProp if n >= 4 => nearest.map(|s| (s, p, Some(1))),
                    OtherMolSameProp => self.other_record(pos, c.cid, p, cat).map(|s| (s, p, None)),
                    OtherMolOtherProp => self
                        .other_record(pos, c.cid, p, cat)
                        .map(|s| (s, self.other_property(c.cid, p, cat), None)),
                };
                let Some((src, src_p, rank)) = source else {
                    acc.shortfall += 1;
                    continue;
                };
                let rejected = if n == 1 {
                    src.rendered(src_p)
                } else {
                    t.fill_answer(src_p.display_name(), &src.smiles, &src.rendered(src_p))
                };
                if rejected == chosen {
                    acc.skipped += 1;
                    continue;
                }
                let mut meta = self.meta(Strategy::Alt(n), c, p, src, src_p, t);
                meta.similarity_rank = rank;
                meta.category = Some(cat);
                pairs.push(PreferencePair {
                    prompt: prompt.clone(),
                    chosen: chosen.clone(),
                    rejected,
                    meta,
                });
                acc.emitted += 1;
            }
            accounts.push(acc);
        }
        Ok((pairs, accounts))
    }

    fn ladder_record(&self, pos: usize) -> Result<(Vec<PreferencePair>, Vec<GroupAccount>), PrefError> {
        let a = &self.records[pos];
        let mut pairs = Vec::new();
        let mut accounts = Vec::new();
        for attr1 in PropertyKind::ALL {
            let mut acc = GroupAccount {
                cid: a.cid,
                property: attr1,
                target: 6,
                emitted: 0,
                skipped: 0,
                shortfall: 0,
            };
            let Some(b) = self.other_record(pos, a.cid, attr1, RejectCategory::OtherMolOtherProp) else {
                acc.shortfall = 6;
                accounts.push(acc);
                continue;
            };
            let attr2 = self.other_property(a.cid, attr1, RejectCategory::OtherMolOtherProp);
            let statements = ladder(a, b, attr1, attr2)?;
            let t = self.template(a.cid, attr1);
            let prompt = t.fill_question(attr1.display_name(), &a.smiles);
            for (i, hi) in statements.iter().enumerate() {
                for lo in &statements[i + 1..] {
                    if hi.text == lo.text {
                        acc.skipped += 1;
                        continue;
                    }
                    let src = self.record(lo.source_cid).expect("ladder source is a context record");
                    let mut meta = self.meta(Strategy::Ladder, a, attr1, src, lo.source_property, t);
                    meta.chosen_score = Some(hi.score);
                    meta.rejected_score = Some(lo.score);
                    pairs.push(PreferencePair {
                        prompt: prompt.clone(),
                        chosen: hi.text.clone(),
                        rejected: lo.text.clone(),
                        meta,
                    });
                    acc.emitted += 1;
                }
            }
            accounts.push(acc);
        }
        Ok((pairs, accounts))
    }

    fn pairs_for(&self, strategy: Strategy, k: usize, pos: usize) -> Result<(Vec<PreferencePair>, Vec<GroupAccount>), PrefError> {
        match strategy {
            Strategy::Rldbf => self.rldbf_record(pos, k),
            Strategy::Alt(n) => self.alt_record(pos, n),
            Strategy::Ladder => self.ladder_record(pos),
        }
    }

    fn check(&self, strategy: Strategy, k: usize) -> Result<(), PrefError> {
        let needs_index = matches!(strategy, Strategy::Rldbf | Strategy::Alt(4..=6));
        if needs_index && self.index.is_none() {
            return Err(PrefError::NeedsIndex(strategy));
        }
        if let Strategy::Alt(n) = strategy {
            if !(1..=6).contains(&n) {
                return Err(PrefError::BadStrategy(strategy.to_string()));
            }
        }
        if strategy == Strategy::Rldbf && k == 0 {
            return Err(PrefError::ZeroK);
        }
        Ok(())
    }

    /// Generates every pair in record order; `k` only matters for rldbf.
    pub fn generate(&self, strategy: Strategy, k: usize) -> Result<(Vec<PreferencePair>, PrefReport), PrefError> {
        let mut pairs = Vec::new();
        let report = self.for_each_chunk(strategy, k, |chunk| {
            pairs.extend(chunk);
            Ok(())
        })?;
        Ok((pairs, report))
    }

    /// Streams pairs as JSONL.
    pub fn write(&self, strategy: Strategy, k: usize, out: &mut impl Write) -> Result<PrefReport, PrefError> {
        self.for_each_chunk(strategy, k, |chunk| {
            for p in chunk {
                serde_json::to_writer(&mut *out, &p).map_err(io::Error::from)?;
                out.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    fn for_each_chunk(
        &self,
        strategy: Strategy,
        k: usize,
        mut sink: impl FnMut(Vec<PreferencePair>) -> Result<(), PrefError>,
    ) -> Result<PrefReport, PrefError> {
        self.check(strategy, k)?;
        let mut report = PrefReport::default();
        let positions: Vec<usize> = (0..self.records.len()).collect();
        for chunk in positions.chunks(CHUNK) {
            let results = par::map(chunk, |&pos| self.pairs_for(strategy, k, pos));
            for r in results {
                let (pairs, accounts) = r?;
                report.absorb(accounts);
                sink(pairs)?;
            }
        }
        Ok(report)
    }
}

pub fn rldbf_pairs(
    records: &[Record],
    templates: &[Template],
    index: &SimilarityIndex,
    k: usize,
    seed: u64,
) -> Result<(Vec<PreferencePair>, PrefReport), PrefError> {
    PrefContext::new(records, templates, Some(index), seed)?.generate(Strategy::Rldbf, k)
}

pub fn alt_pairs(
    strategy: u8,
    records: &[Record],
    templates: &[Template],
    index: Option<&SimilarityIndex>,
    seed: u64,
) -> Result<(Vec<PreferencePair>, PrefReport), PrefError> {
    PrefContext::new(records, templates, index, seed)?.generate(Strategy::Alt(strategy), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::PropertyValue;
    use crate::similarity::{index_records, FingerprintParams};

    fn rec(cid: u64, smiles: &str, ordinal: usize, vals: [f64; 5]) -> Record {
        let mut r = Record::new(cid, smiles, ordinal);
        for (k, v) in PropertyKind::ALL.into_iter().zip(vals) {
            r = r.with_value(PropertyValue::computed(k, v));
        }
        r
    }

    fn corpus() -> Vec<Record> {
        vec![
            rec(1, "CCCCO", 0, [1.0, 1.0, 2.0, 0.9, 74.12]),
            rec(2, "CCCCCO", 1, [1.0, 1.0, 3.0, 1.3, 88.15]),
            rec(3, "CCCO", 2, [1.0, 1.0, 1.0, 0.5, 60.1]),
            rec(4, "CCCCN", 3, [1.0, 1.0, 2.0, 0.6, 73.14]),
            rec(5, "c1ccccc1", 4, [0.0, 0.0, 0.0, 1.7, 78.11]),
            rec(6, "CC(=O)O", 5, [1.0, 1.0, 0.0, 0.1, 60.05]),
        ]
    }

    fn templates() -> Vec<Template> {
        vec![
            Template::new(0, "What is the {PROPERTY} of {COMPOUND}?", "The {PROPERTY} of {COMPOUND} is {VALUE}.").unwrap(),
            Template::new(1, "Tell me the {PROPERTY} of {COMPOUND}.", "{COMPOUND} has {PROPERTY} {VALUE}.").unwrap(),
        ]
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ["rldbf", "ladder", "alt1", "alt6"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert!("alt7".parse::<Strategy>().is_err());
        assert!("dpo".parse::<Strategy>().is_err());
    }

    #[test]
    fn ladder_routing() {
        let a = rec(10, "A", 0, [0.0, 1.0, 0.0, 0.0, 203.26]);
        let b = rec(11, "B", 1, [0.0, 2.0, 0.0, 0.0, 180.16]);
        let hbd = PropertyKind::HBondDonorCount;
        let mw = PropertyKind::MolecularWeight;
        let s = ladder(&a, &b, hbd, mw).unwrap();
        let values: Vec<&str> = s.iter().map(|x| x.text.rsplit(' ').next().unwrap()).collect();
        assert_eq!(values, vec!["1", "203.26", "2", "180.16"]);
        assert_eq!(s[0].text, "Hydrogen Bond Donor Count of A is 1");
        assert_eq!(s.iter().map(|x| x.score).collect::<Vec<_>>(), vec![3, 2, 1, 0]);
        assert!(matches!(ladder(&a, &b, hbd, hbd), Err(PrefError::SameAttribute)));
        assert!(matches!(ladder(&a, &a, hbd, mw), Err(PrefError::SameInstance)));

        let swapped = ladder(&a, &b, mw, hbd).unwrap();
        assert_eq!((swapped[1].source_cid, swapped[1].source_property), (a.cid, hbd));
        assert_eq!((swapped[2].source_cid, swapped[2].source_property), (b.cid, mw));
    }

    #[test]
    fn rldbf_accounting_and_numeric_only() {
        let recs = corpus();
        let index = index_records(&recs, FingerprintParams::default()).unwrap();
        let (pairs, report) = rldbf_pairs(&recs, &templates(), &index, 3, 5).unwrap();
        assert_eq!(report.groups, 30);
        for a in &report.accounts {
            assert_eq!(a.emitted + a.skipped + a.shortfall, 3);
        }
        assert_eq!(report.emitted, pairs.len());
        assert!(report.skipped > 0);
        for p in &pairs {
            assert_ne!(p.chosen, p.rejected);
            assert!(!p.chosen.chars().any(char::is_alphabetic));
            assert!(!p.rejected.chars().any(char::is_alphabetic));
            let src = recs.iter().find(|r| r.cid == p.meta.rejected_source_cid).unwrap();
            assert_eq!(src.rendered(p.meta.rejected_source_property), p.rejected);
            let rank = p.meta.similarity_rank.unwrap();
            let hits = index.top_k(p.meta.cid, 3).unwrap();
            assert_eq!(hits[rank - 1].record_id, p.meta.rejected_source_cid);
        }
        // K beyond the corpus: shortfall accounts for the gap.
        let (_, r) = rldbf_pairs(&recs, &templates(), &index, 8, 5).unwrap();
        assert!(r.accounts.iter().all(|a| a.shortfall == 3 && a.emitted + a.skipped == 5));
    }

    #[test]
    fn alternative_strategies() {
        let recs = corpus();
        let t = templates();
        let index = index_records(&recs, FingerprintParams::default()).unwrap();
        let (three, _) = alt_pairs(3, &recs, &t, None, 11).unwrap();
        let (four, _) = alt_pairs(4, &recs, &t, Some(&index), 11).unwrap();
        let same_mol = |v: &[PreferencePair]| -> Vec<PreferencePair> {
            v.iter()
                .filter(|p| p.meta.category == Some(RejectCategory::SameMolOtherProp))
                .cloned()
                .map(|mut p| {
                    p.meta.strategy = Strategy::Rldbf;
                    p
                })
                .collect()
        };
        assert_eq!(same_mol(&three), same_mol(&four));
        for p in four.iter().filter(|p| p.meta.category == Some(RejectCategory::OtherMolSameProp)) {
            let nn = index.top_k(p.meta.cid, 1).unwrap()[0].record_id;
            assert_eq!(p.meta.rejected_source_cid, nn);
            assert_eq!(p.meta.similarity_rank, Some(1));
        }

        let (one, _) = alt_pairs(1, &recs, &t, None, 11).unwrap();
        for p in &one {
            assert!(p.prompt.contains(&recs.iter().find(|r| r.cid == p.meta.cid).unwrap().smiles));
            if p.meta.category == Some(RejectCategory::SameMolOtherProp) {
                assert_eq!(p.meta.rejected_source_cid, p.meta.cid);
                assert_ne!(p.meta.rejected_source_property, p.meta.property);
            }
        }

        let (six, report) = alt_pairs(6, &recs, &t, Some(&index), 11).unwrap();
        assert!(report.accounts.iter().all(|a| a.target == 1));
        for p in &six {
            assert_eq!(p.meta.category, Some(RejectCategory::OtherMolSameProp));
            assert!(p.prompt.contains("{VALUE}"));
        }
        assert!(matches!(alt_pairs(5, &recs, &t, None, 11), Err(PrefError::NeedsIndex(_))));
    }

    #[test]
    fn ladder_pairs_rank_high_over_low() {
        let recs = corpus();
        let t = templates();
        let ctx = PrefContext::new(&recs, &t, None, 4).unwrap();
        let (pairs, report) = ctx.generate(Strategy::Ladder, 0).unwrap();
        assert!(report.accounts.iter().all(|a| a.emitted + a.skipped + a.shortfall == 6));
        for p in &pairs {
            assert!(p.meta.chosen_score > p.meta.rejected_score);
            assert_ne!(p.chosen, p.rejected);
        }
    }

    #[test]
    fn streamed_equals_collected() {
        let recs = corpus();
        let index = index_records(&recs, FingerprintParams::default()).unwrap();
        let t = templates();
        let ctx = PrefContext::new(&recs, &t, Some(&index), 2).unwrap();
        let (pairs, _) = ctx.generate(Strategy::Alt(2), 0).unwrap();
        let mut buf = Vec::new();
        ctx.write(Strategy::Alt(2), 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: Vec<PreferencePair> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, pairs);
    }
}
