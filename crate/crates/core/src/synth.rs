//! Continued-pretraining (CPT) and supervised fine-tuning (SFT) corpora.
//!
//! Every generator emits one item per (record, property), properties in
//! [`PropertyKind::ALL`] order, records in ordinal order. The template for
//! an item is drawn from its own random stream, so output is identical
//! whatever the worker count.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::PropertyKind;
use crate::ingest::Record;
use crate::par;
use crate::rng;
use crate::templates::Template;

/// Appended to a question when only the bare value is wanted.
pub const VALUE_DIRECTIVE: &str = "Answer the question only with the corresponding value";

const CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("CPT type must be 1..=5, got {0}")]
    BadCptType(u8),
    #[error("SFT type must be 1..=3, got {0}")]
    BadSftType(u8),
    #[error("no training templates available")]
    NoTemplates,
    #[error("no training records available")]
    NoRecords,
    #[error("record {0} is missing property values; run enrichment first")]
    NotEnriched(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub type_tag: u8,
    pub cid: u64,
    pub property: PropertyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CptRecord {
    pub text: String,
    pub meta: ItemMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub response: String,
    pub meta: ItemMeta,
}

/// Uniform template choice for one (stage, record, property) item.
pub fn pick_template<'a>(templates: &'a [Template], seed: u64, stage: &str, cid: u64, property: PropertyKind) -> &'a Template {
    let mut r = rng::stream(seed, &[rng::hash_str(stage), cid, property.index() as u64]);
    &templates[r.gen_range(0..templates.len())]
}

/// A question followed by the value-only directive.
pub fn value_only_prompt(question: &str) -> String {
    format!("{question} {VALUE_DIRECTIVE}")
}

/// A question followed by the answer scaffold as a format hint; the
/// scaffold keeps its `{VALUE}` slot on purpose.
pub fn scaffold_prompt(question: &str, scaffold: &str) -> String {
    format!("{question}\nAnswer format: {scaffold}")
}

fn check_inputs(records: &[Record], templates: &[Template], needs_templates: bool) -> Result<(), SynthError> {
    if records.is_empty() {
        return Err(SynthError::NoRecords);
    }
    if needs_templates && templates.is_empty() {
        return Err(SynthError::NoTemplates);
    }
    if let Some(r) = records.iter().find(|r| !r.is_complete()) {
        return Err(SynthError::NotEnriched(r.cid));
    }
    Ok(())
}

fn cpt_stage(type_tag: u8) -> String {
    format!("synth-cpt-{type_tag}")
}

fn sft_stage(type_tag: u8) -> String {
    format!("synth-sft-{type_tag}")
}

/// The five CPT items of one record.
pub fn cpt_items(record: &Record, templates: &[Template], type_tag: u8, seed: u64) -> Vec<CptRecord> {
    let stage = cpt_stage(type_tag);
    PropertyKind::ALL
        .into_iter()
        .map(|kind| {
            let value = record.rendered(kind);
            let name = kind.display_name();
            let smiles = record.smiles.as_str();
            let mut template_id = None;
            let text = match type_tag {
                2 => format!("{smiles} {name} {value}"),
                5 => format!("The {name} of {smiles} is {value}"),
                _ => {
                    let t = pick_template(templates, seed, &stage, record.cid, kind);
                    template_id = Some(t.id);
                    let q = t.fill_question(name, smiles);
                    match type_tag {
                        1 => format!("{q} {}", t.fill_answer(name, smiles, &value)),
                        3 => format!("User: {}\nAssistant: {value}", value_only_prompt(&q)),
                        _ => format!("**{}** **{value}**", value_only_prompt(&q)),
                    }
                }
            };
            CptRecord {
                text,
                meta: ItemMeta {
                    type_tag,
                    cid: record.cid,
                    property: kind,
                    template_id,
                },
            }
        })
        .collect()
}

/// The five SFT items of one record.
pub fn sft_items(record: &Record, templates: &[Template], type_tag: u8, seed: u64) -> Vec<SftRecord> {
    let stage = sft_stage(type_tag);
    PropertyKind::ALL
        .into_iter()
        .map(|kind| {
            let value = record.rendered(kind);
            let name = kind.display_name();
            let smiles = record.smiles.as_str();
            let t = pick_template(templates, seed, &stage, record.cid, kind);
            let q = t.fill_question(name, smiles);
            let (instruction, response) = match type_tag {
                1 => (q, t.fill_answer(name, smiles, &value)),
                2 => (
                    scaffold_prompt(&q, &t.answer_scaffold(name, smiles)),
                    t.fill_answer(name, smiles, &value),
                ),
                _ => (value_only_prompt(&q), value),
            };
            SftRecord {
                instruction,
                response,
                meta: ItemMeta {
                    type_tag,
                    cid: record.cid,
                    property: kind,
                    template_id: Some(t.id),
                },
            }
        })
        .collect()
}

fn stream_items<T: Serialize + Send>(
    records: &[Record],
    out: &mut impl Write,
    make: impl Fn(&Record) -> Vec<T> + Sync + Send,
) -> Result<usize, SynthError> {
    let mut written = 0;
    for chunk in records.chunks(CHUNK) {
        let lines: Vec<String> = par::map(chunk, |r| {
            make(r)
                .iter()
                .map(|item| serde_json::to_string(item).expect("item serializes") + "\n")
                .collect()
        });
        for block in lines {
            out.write_all(block.as_bytes())?;
        }
        written += chunk.len() * PropertyKind::ALL.len();
    }
    Ok(written)
}

/// Streams a CPT corpus as JSONL; returns the number of items written.
pub fn write_cpt(records: &[Record], templates: &[Template], type_tag: u8, seed: u64, out: &mut impl Write) -> Result<usize, SynthError> {
    if !(1..=5).contains(&type_tag) {
        return Err(SynthError::BadCptType(type_tag));
    }
    check_inputs(records, templates, matches!(type_tag, 1 | 3 | 4))?;
    stream_items(records, out, |r| cpt_items(r, templates, type_tag, seed))
}

pub fn write_sft(records: &[Record], templates: &[Template], type_tag: u8, seed: u64, out: &mut impl Write) -> Result<usize, SynthError> {
    if !(1..=3).contains(&type_tag) {
        return Err(SynthError::BadSftType(type_tag));
    }
    check_inputs(records, templates, true)?;
    stream_items(records, out, |r| sft_items(r, templates, type_tag, seed))
}

/// In-memory CPT corpus.
pub fn synth_cpt(records: &[Record], templates: &[Template], type_tag: u8, seed: u64) -> Result<Vec<CptRecord>, SynthError> {
    if !(1..=5).contains(&type_tag) {
        return Err(SynthError::BadCptType(type_tag));
    }
    check_inputs(records, templates, matches!(type_tag, 1 | 3 | 4))?;
    Ok(par::map(records, |r| cpt_items(r, templates, type_tag, seed)).into_iter().flatten().collect())
}

pub fn synth_sft(records: &[Record], templates: &[Template], type_tag: u8, seed: u64) -> Result<Vec<SftRecord>, SynthError> {
    if !(1..=3).contains(&type_tag) {
        return Err(SynthError::BadSftType(type_tag));
    }
    check_inputs(records, templates, true)?;
    Ok(par::map(records, |r| sft_items(r, templates, type_tag, seed)).into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::PropertyValue;

    fn ethanol() -> Record {
        Record::new(702, "CCO", 0)
            .with_value(PropertyValue::from_database(PropertyKind::HBondAcceptorCount, 1.0, "1"))
            .with_value(PropertyValue::from_database(PropertyKind::HBondDonorCount, 1.0, "1"))
            .with_value(PropertyValue::from_database(PropertyKind::RotatableBondCount, 0.0, "0"))
            .with_value(PropertyValue::from_database(PropertyKind::LogP, -0.1, "-0.1"))
            .with_value(PropertyValue::from_database(PropertyKind::MolecularWeight, 46.07, "46.07"))
    }

    fn methane() -> Record {
        let mut r = Record::new(297, "C", 1);
        for k in PropertyKind::ALL {
            r = r.with_value(PropertyValue::computed(k, 0.0));
        }
        r
    }

    fn table_row_one() -> Vec<Template> {
        vec![Template::new(0, "What is the {PROPERTY} of {COMPOUND}?", "The {PROPERTY} of {COMPOUND} is {VALUE}.").unwrap()]
    }

    fn mw(items: &[CptRecord]) -> &CptRecord {
        items.iter().find(|c| c.meta.property == PropertyKind::MolecularWeight).unwrap()
    }

    #[test]
    fn cpt_formats() {
        let t = table_row_one();
        let r = ethanol();
        assert_eq!(mw(&cpt_items(&r, &t, 5, 1)).text, "The Molecular Weight of CCO is 46.07");
        let one = cpt_items(&r, &t, 1, 1);
        assert_eq!(
            mw(&one).text,
            "What is the Molecular Weight of CCO? The Molecular Weight of CCO is 46.07."
        );
        let three = cpt_items(&r, &t, 3, 1);
        let three = &mw(&three).text;
        assert_eq!(
            three,
            "User: What is the Molecular Weight of CCO? Answer the question only with the corresponding value\nAssistant: 46.07"
        );
        let four = cpt_items(&r, &t, 4, 1);
        let four = &mw(&four).text;
        assert_eq!(
            four,
            "**What is the Molecular Weight of CCO? Answer the question only with the corresponding value** **46.07**"
        );
        let hbd = cpt_items(&methane(), &t, 2, 1)
            .into_iter()
            .find(|c| c.meta.property == PropertyKind::HBondDonorCount)
            .unwrap();
        assert_eq!(hbd.text, "C Hydrogen Bond Donor Count 0");
    }

    #[test]
    fn sft_formats() {
        let t = table_row_one();
        let r = ethanol();
        let pick = |items: Vec<SftRecord>| items.into_iter().find(|s| s.meta.property == PropertyKind::MolecularWeight).unwrap();
        let one = pick(sft_items(&r, &t, 1, 1));
        assert_eq!(one.instruction, "What is the Molecular Weight of CCO?");
        assert_eq!(one.response, "The Molecular Weight of CCO is 46.07.");
        let two = pick(sft_items(&r, &t, 2, 1));
        assert!(two.instruction.contains("The Molecular Weight of CCO is {VALUE}."));
        assert_eq!(two.response, "The Molecular Weight of CCO is 46.07.");
        let three = pick(sft_items(&r, &t, 3, 1));
        assert_eq!(three.response, "46.07");
        assert!(three.instruction.ends_with(VALUE_DIRECTIVE));
    }

    #[test]
    fn counts_and_errors() {
        let t = table_row_one();
        let recs = vec![ethanol(), methane()];
        for ty in 1..=5 {
            assert_eq!(synth_cpt(&recs, &t, ty, 3).unwrap().len(), 10);
        }
        assert!(matches!(synth_cpt(&recs, &[], 1, 3), Err(SynthError::NoTemplates)));
        assert_eq!(synth_cpt(&recs, &[], 2, 3).unwrap().len(), 10);
        assert!(matches!(synth_cpt(&recs, &t, 6, 3), Err(SynthError::BadCptType(6))));
        assert!(matches!(synth_sft(&recs, &t, 0, 3), Err(SynthError::BadSftType(0))));
        let bare = vec![Record::new(1, "C", 0)];
        assert!(matches!(synth_sft(&bare, &t, 1, 3), Err(SynthError::NotEnriched(1))));
    }

    #[test]
    fn streamed_output_matches_in_memory() {
        let t = vec![
            table_row_one().remove(0),
            Template::new(1, "Tell me the {PROPERTY} of {COMPOUND}.", "It is {VALUE}.").unwrap(),
        ];
        let recs = vec![ethanol(), methane()];
        let mut buf = Vec::new();
        write_sft(&recs, &t, 1, 9, &mut buf).unwrap();
        let expected: String = synth_sft(&recs, &t, 1, 9)
            .unwrap()
            .iter()
            .map(|s| serde_json::to_string(s).unwrap() + "\n")
            .collect();
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
        assert!(expected.contains("\"property\":\"mw\""));
    }
}
