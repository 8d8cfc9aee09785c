//! Seeded synthetic record stores for demos, benches and tests. Molecules
//! are chains of small fragments, so every SMILES parses and the corpus has
//! enough near-duplicates to make similarity rankings interesting.

use std::io::{self, Write};

use rand::Rng;

use crate::descriptors::{PropertyKind, PropertyValue};
use crate::ingest::{self, Record, RecordStore};
use crate::rng;

// Fragments with an open bond at both ends.
const LINKERS: &[&str] = &[
    "C", "CC", "CCC", "C(C)", "C(C)C", "O", "N", "N(C)", "C(=O)", "C(=O)O", "C(=O)N", "c1ccccc1", "c1ccncc1",
    "C1CCCCC1", "C1CCOC1", "S", "C=C", "C(F)(F)",
];
const CAPS: &[&str] = &["C", "O", "N", "F", "Cl", "Br", "C(=O)O", "C#N", "OC", "N(C)C", "c1ccccc1", "c1ccc(O)cc1", "S(=O)(=O)N"];
const HEADS: &[&str] = &["C", "O", "N", "CC", "OC", "Nc1ccccc1", "c1ccccc1", "CC(C)", "O=C(O)", "Clc1ccccc1"];

pub fn synthetic_smiles(rng: &mut impl Rng) -> String {
    let mut s = String::from(HEADS[rng.gen_range(0..HEADS.len())]);
    for _ in 0..rng.gen_range(1..=5) {
        s.push_str(LINKERS[rng.gen_range(0..LINKERS.len())]);
    }
    s.push_str(CAPS[rng.gen_range(0..CAPS.len())]);
    s
}

/// `n` records with ordinals `0..n`. Roughly a third carry a database MW
/// written with three decimals; everything else is left for `enrich`.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<Record> {
    (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, &[rng::hash_str("synthetic"), i as u64]);
            let smiles = synthetic_smiles(&mut r);
            let mut rec = Record::new(100_000 + i as u64 * 3, smiles, i);
            if r.gen_ratio(1, 3) {
                let mol = crate::chem::parse_smiles(&rec.smiles).expect("fragments parse");
                let mw = crate::descriptors::molecular_weight(&mol);
                rec = rec.with_value(PropertyValue::from_database(PropertyKind::MolecularWeight, mw, format!("{mw:.3}")));
            }
            rec
        })
        .collect()
}

/// An enriched store of `n` synthetic records.
pub fn synthetic_store(n: usize, seed: u64) -> RecordStore {
    let mut store = RecordStore::from_records(synthetic_records(n, seed)).expect("cids are unique");
    ingest::enrich(&mut store);
    store
}

/// CSV in the ingest layout (`cid,smiles,mw`), database values only.
pub fn write_csv(records: &[Record], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "cid,smiles,{}", PropertyKind::MolecularWeight.key())?;
    for r in records {
        let mw = r
            .get(PropertyKind::MolecularWeight)
            .and_then(|v| v.source_text.clone())
            .unwrap_or_default();
        writeln!(out, "{},{},{}", r.cid, r.smiles, mw)?;
    }
    Ok(())
}
