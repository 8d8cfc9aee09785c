//! Descriptor values against a frozen corpus computed with RDKit
//! (`tests/data/gen_golden.py`).

use dbforge::chem::parse_smiles;
use dbforge::descriptors::{hba_count, hbd_count, logp, molecular_weight, rotatable_bond_count};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    smiles: String,
    mw: f64,
    hbd: usize,
    hba: usize,
    rotatable: usize,
    logp: f64,
}

fn corpus() -> Vec<Golden> {
    include_str!("data/golden_descriptors.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn golden_corpus_matches_oracle() {
    let rows = corpus();
    assert_eq!(rows.len(), 100);
    let mut failures = Vec::new();
    for g in &rows {
        let m = parse_smiles(&g.smiles).unwrap_or_else(|e| panic!("{}: {e}", g.smiles));
        let mw = molecular_weight(&m);
        let lp = logp(&m).value;
        let got = (hbd_count(&m), hba_count(&m), rotatable_bond_count(&m));
        if (mw - g.mw).abs() > 0.01 || got != (g.hbd, g.hba, g.rotatable) || (lp - g.logp).abs() > 0.1 {
            failures.push(format!(
                "{}: mw {mw:.3}/{} counts {got:?}/{:?} logp {lp:.4}/{}",
                g.smiles,
                g.mw,
                (g.hbd, g.hba, g.rotatable),
                g.logp
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
