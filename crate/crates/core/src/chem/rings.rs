//! Ring perception: smallest set of smallest rings.
//!
//! Ring bonds are the non-bridge bonds. The ring set is a minimum cycle
//! basis over those bonds, picked from Horton's candidate cycles (shortest
//! path from a root to each end of a bond, closed by the bond) in order of
//! increasing length with GF(2) independence testing.

use std::collections::{HashSet, VecDeque};

use super::graph::Bond;

/// Marks every bond lying on some cycle (i.e. every non-bridge).
pub(crate) fn ring_bond_mask(n_atoms: usize, adjacency: &[Vec<(usize, usize)>], n_bonds: usize) -> Vec<bool> {
    let mut in_ring = vec![true; n_bonds];
    let mut disc = vec![usize::MAX; n_atoms];
    let mut low = vec![0usize; n_atoms];
    let mut timer = 0usize;
    // Frame: (atom, bond used to enter, next adjacency cursor).
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n_atoms {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(frame) = stack.last_mut() {
            let (v, via, cursor) = *frame;
            if cursor < adjacency[v].len() {
                frame.2 += 1;
                let (w, bi) = adjacency[v][cursor];
                if bi == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, bi, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(parent) = stack.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        in_ring[via] = false;
                    }
                }
            }
        }
    }
    in_ring
}

struct Candidate {
    len: usize,
    edges: Vec<u64>,
    atoms: Vec<usize>,
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

fn lowest_bit(bits: &[u64]) -> Option<usize> {
    bits.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Returns the SSSR as atom cycles. `ring_mask` restricts the search to
/// ring bonds; `cyclomatic` is the number of rings to report.
pub(crate) fn smallest_rings(
    n_atoms: usize,
    bonds: &[Bond],
    adjacency: &[Vec<(usize, usize)>],
    ring_mask: &[bool],
    cyclomatic: usize,
) -> Vec<Vec<usize>> {
    if cyclomatic == 0 {
        return Vec::new();
    }
    let words = bonds.len().div_ceil(64);
    let ring_adj: Vec<Vec<(usize, usize)>> = adjacency
        .iter()
        .map(|nbrs| nbrs.iter().copied().filter(|(_, bi)| ring_mask[*bi]).collect())
        .collect();
    let ring_atoms: Vec<usize> = (0..n_atoms).filter(|&a| !ring_adj[a].is_empty()).collect();

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut parent = vec![usize::MAX; n_atoms];
    let mut parent_bond = vec![usize::MAX; n_atoms];
    let mut depth = vec![usize::MAX; n_atoms];

    for &root in &ring_atoms {
        // BFS tree over ring bonds.
        for &a in &ring_atoms {
            parent[a] = usize::MAX;
            parent_bond[a] = usize::MAX;
            depth[a] = usize::MAX;
        }
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(w, bi) in &ring_adj[v] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[v] + 1;
                    parent[w] = v;
                    parent_bond[w] = bi;
                    queue.push_back(w);
                }
            }
        }
        let path_to = |mut a: usize| -> Vec<usize> {
            let mut p = vec![a];
            while a != root {
                a = parent[a];
                p.push(a);
            }
            p.reverse();
            p
        };
        for (bi, bond) in bonds.iter().enumerate() {
            if !ring_mask[bi] {
                continue;
            }
            let (x, y) = bond.atoms;
            if depth[x] == usize::MAX || depth[y] == usize::MAX {
                continue;
            }
            if parent_bond[x] == bi || parent_bond[y] == bi {
                continue;
            }
            let px = path_to(x);
            let py = path_to(y);
            let sx: HashSet<usize> = px[1..].iter().copied().collect();
            if py[1..].iter().any(|a| sx.contains(a)) {
                continue;
            }
            let mut edges = vec![0u64; words];
            set_bit(&mut edges, bi);
            for path in [&px, &py] {
                for &a in &path[1..] {
                    set_bit(&mut edges, parent_bond[a]);
                }
            }
            if !seen.insert(edges.clone()) {
                continue;
            }
            let mut atoms = px.clone();
            atoms.extend(py[1..].iter().rev());
            candidates.push(Candidate {
                len: px.len() + py.len() - 1,
                edges,
                atoms,
            });
        }
    }

    candidates.sort_by(|a, b| a.len.cmp(&b.len).then_with(|| a.edges.cmp(&b.edges)));

    // Basis rows kept in echelon form keyed by pivot bit.
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::with_capacity(cyclomatic);
    for cand in candidates {
        let mut row = cand.edges.clone();
        loop {
            let Some(pivot) = lowest_bit(&row) else { break };
            match basis.iter().find(|(p, _)| *p == pivot) {
                Some((_, b)) => xor_into(&mut row, b),
                None => break,
            }
        }
        if let Some(pivot) = lowest_bit(&row) {
            basis.push((pivot, row));
            rings.push(cand.atoms);
            if rings.len() == cyclomatic {
                break;
            }
        }
    }
    rings
}
