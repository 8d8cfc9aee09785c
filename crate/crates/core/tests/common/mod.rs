//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;

use dbforge::similarity::SimilarityIndex;

fn merge_counts(a: &[usize], b: &[usize]) -> (u32, u32) {
    let (mut i, mut j, mut both) = (0, 0, 0u32);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    (both, (a.len() + b.len()) as u32 - both)
}

/// Raw bit lists, computed once per index.
pub fn bit_lists(index: &SimilarityIndex) -> HashMap<u64, Vec<usize>> {
    index
        .ids()
        .iter()
        .map(|&id| (id, index.fingerprint_of(id).unwrap().ones().collect()))
        .collect()
}

/// Exhaustive neighbour ranking computed from raw bit sets with exact
/// rational comparison: `(id, |a∧b|, |a∨b|)`, best first, ties by id.
pub fn brute_force_ranking(index: &SimilarityIndex, bits: &HashMap<u64, Vec<usize>>, query: u64) -> Vec<(u64, u32, u32)> {
    let q = &bits[&query];
    let mut rows: Vec<(u64, u32, u32)> = index
        .ids()
        .iter()
        .filter(|&&id| id != query)
        .map(|&id| {
            let (both, either) = merge_counts(q, &bits[&id]);
            (id, both, either)
        })
        .collect();
    rows.sort_by(|a, b| {
        // a.1/a.2 vs b.1/b.2 without division
        let lhs = u64::from(b.1) * u64::from(a.2);
        let rhs = u64::from(a.1) * u64::from(b.2);
        match lhs.cmp(&rhs) {
            Ordering::Equal => a.0.cmp(&b.0),
            o => o,
        }
    });
    rows
}

/// Checks `top_k_similar` against the brute force for every query and
/// `k` in `ks`; returns the first mismatch.
pub fn check_against_brute_force(index: &SimilarityIndex, ks: &[usize]) -> Result<usize, String> {
    let bits = bit_lists(index);
    let mut checked = 0;
    for &query in index.ids() {
        let truth = brute_force_ranking(index, &bits, query);
        for &k in ks {
            let got = dbforge::similarity::top_k_similar(query, index, k).map_err(|e| e.to_string())?;
            let want = &truth[..k.min(truth.len())];
            if got.len() != want.len() {
                return Err(format!("query {query} k {k}: {} hits, expected {}", got.len(), want.len()));
            }
            for (h, &(id, both, either)) in got.iter().zip(want) {
                let score = f64::from(both) / f64::from(either);
                if h.record_id != id || h.score != score {
                    return Err(format!("query {query} k {k}: got ({}, {}), expected ({id}, {score})", h.record_id, h.score));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}
