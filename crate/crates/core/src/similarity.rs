//! Circular (ECFP-style) fingerprints, Tanimoto similarity and exhaustive
//! top-K search with a persisted fingerprint cache.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::Molecule;
use crate::par;

const CACHE_MAGIC: &[u8; 4] = b"DBFP";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("fingerprint width {0} must be a power of two >= 64")]
    InvalidWidth(u32),
    #[error("cannot fingerprint a molecule with no atoms")]
    EmptyMolecule,
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(u32, u32),
    #[error("record {0} is not in the similarity index")]
    UnknownRecord(u64),
    #[error("duplicate record {0} in similarity index")]
    DuplicateRecord(u64),
    #[error("fingerprint cache: bad magic")]
    BadMagic,
    #[error("fingerprint cache version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("fingerprint cache: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub radius: u32,
    pub nbits: u32,
    pub seed: u64,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            radius: 2,
            nbits: 2048,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    radius: u32,
    nbits: u32,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn from_bits(nbits: u32, radius: u32, bits: impl IntoIterator<Item = usize>) -> Result<Self, SimilarityError> {
        check_width(nbits)?;
        let mut words = vec![0u64; nbits as usize / 64];
        for b in bits {
            let b = b % nbits as usize;
            words[b / 64] |= 1 << (b % 64);
        }
        Ok(Fingerprint { radius, nbits, words })
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn contains(&self, bit: usize) -> bool {
        bit < self.nbits as usize && self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbits as usize).filter(|&b| self.contains(b))
    }
}

fn check_width(nbits: u32) -> Result<(), SimilarityError> {
    if nbits < 64 || !nbits.is_power_of_two() {
        return Err(SimilarityError::InvalidWidth(nbits));
    }
    Ok(())
}

fn mix(seed: u64, values: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

/// Hashed circular atom-environment fingerprint.
pub fn fingerprint(mol: &Molecule, params: &FingerprintParams) -> Result<Fingerprint, SimilarityError> {
    check_width(params.nbits)?;
    if mol.atom_count() == 0 {
        return Err(SimilarityError::EmptyMolecule);
    }
    let n = mol.atom_count();
    let mut in_ring = vec![false; n];
    for ring in mol.rings() {
        for &a in ring {
            in_ring[a] = true;
        }
    }
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let a = &mol.atoms()[i];
            mix(
                params.seed,
                &[
                    u64::from(a.element.atomic_number()),
                    mol.heavy_degree(i) as u64,
                    mol.hydrogen_count(i) as u64,
                    a.formal_charge as i64 as u64,
                    u64::from(a.isotope.unwrap_or(0)),
                    u64::from(a.aromatic),
                    u64::from(in_ring[i]),
                ],
            )
        })
        .collect();
    let mask = params.nbits as u64 - 1;
    let mut words = vec![0u64; params.nbits as usize / 64];
    let mut set = |id: u64| {
        let b = (id & mask) as usize;
        words[b / 64] |= 1 << (b % 64);
    };
    ids.iter().for_each(|&id| set(id));
    for round in 1..=params.radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, bi)| (mol.bond(bi).order.code(), ids[nb]))
                    .collect();
                env.sort_unstable();
                let mut values = Vec::with_capacity(2 + env.len() * 2);
                values.push(u64::from(round));
                values.push(ids[i]);
                for (o, id) in env {
                    values.push(o);
                    values.push(id);
                }
                mix(params.seed, &values)
            })
            .collect();
        next.iter().for_each(|&id| set(id));
        ids = next;
    }
    Ok(Fingerprint {
        radius: params.radius,
        nbits: params.nbits,
        words,
    })
}

/// |a AND b| / |a OR b|.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, SimilarityError> {
    if a.nbits != b.nbits {
        return Err(SimilarityError::WidthMismatch(a.nbits, b.nbits));
    }
    Ok(tanimoto_words(&a.words, &b.words))
}

fn tanimoto_words(a: &[u64], b: &[u64]) -> f64 {
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.iter().zip(b) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    if either == 0 {
        1.0
    } else {
        f64::from(both) / f64::from(either)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub record_id: u64,
    pub score: f64,
}

/// Descending score, then ascending record id.
pub fn hit_order(a: &SimilarityHit, b: &SimilarityHit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.record_id.cmp(&b.record_id))
}

/// Fingerprints for a fixed record set, searched exhaustively.
#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    params: FingerprintParams,
    ids: Vec<u64>,
    fingerprints: Vec<Fingerprint>,
    positions: HashMap<u64, usize>,
}

impl SimilarityIndex {
    fn from_parts(params: FingerprintParams, ids: Vec<u64>, fingerprints: Vec<Fingerprint>) -> Result<Self, SimilarityError> {
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if positions.insert(id, i).is_some() {
                return Err(SimilarityError::DuplicateRecord(id));
            }
        }
        Ok(SimilarityIndex {
            params,
            ids,
            fingerprints,
            positions,
        })
    }

    /// Fingerprints every `(record id, molecule)` pair, in parallel when
    /// the `parallel` feature is on.
    pub fn build(params: FingerprintParams, records: &[(u64, &Molecule)]) -> Result<Self, SimilarityError> {
        let fps = par::map(records, |(_, m)| fingerprint(m, &params));
        Self::assemble(params, records, fps)
    }

    pub fn build_sequential(params: FingerprintParams, records: &[(u64, &Molecule)]) -> Result<Self, SimilarityError> {
        let fps = par::map_seq(records, |(_, m)| fingerprint(m, &params));
        Self::assemble(params, records, fps)
    }

    fn assemble(
        params: FingerprintParams,
        records: &[(u64, &Molecule)],
        fps: Vec<Result<Fingerprint, SimilarityError>>,
    ) -> Result<Self, SimilarityError> {
        let fingerprints = fps.into_iter().collect::<Result<Vec<_>, _>>()?;
        let ids = records.iter().map(|(id, _)| *id).collect();
        Self::from_parts(params, ids, fingerprints)
    }

    pub fn params(&self) -> &FingerprintParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.positions.contains_key(&id)
    }

    pub fn fingerprint_of(&self, id: u64) -> Option<&Fingerprint> {
        self.positions.get(&id).map(|&i| &self.fingerprints[i])
    }

    fn query_position(&self, id: u64) -> Result<usize, SimilarityError> {
        self.positions.get(&id).copied().ok_or(SimilarityError::UnknownRecord(id))
    }

    fn scores(&self, q: usize, parallel: bool) -> Vec<SimilarityHit> {
        let query = &self.fingerprints[q].words;
        let score = |i: usize| SimilarityHit {
            record_id: self.ids[i],
            score: tanimoto_words(query, &self.fingerprints[i].words),
        };
        let mut hits: Vec<SimilarityHit> = if parallel {
            par::map_range(self.ids.len(), score)
        } else {
            (0..self.ids.len()).map(score).collect()
        };
        hits.swap_remove(q);
        hits
    }

    fn select(mut hits: Vec<SimilarityHit>, k: usize) -> Vec<SimilarityHit> {
        if k == 0 {
            return Vec::new();
        }
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_by(hit_order);
        hits
    }

    /// The `k` most similar records other than the query itself.
    pub fn top_k(&self, query_id: u64, k: usize) -> Result<Vec<SimilarityHit>, SimilarityError> {
        let q = self.query_position(query_id)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        Ok(Self::select(self.scores(q, true), k))
    }

    pub fn top_k_sequential(&self, query_id: u64, k: usize) -> Result<Vec<SimilarityHit>, SimilarityError> {
        let q = self.query_position(query_id)?;
        Ok(Self::select(self.scores(q, false), k))
    }

    /// Full neighbor ranking of a record (excluding itself).
    pub fn ranking(&self, query_id: u64) -> Result<Vec<SimilarityHit>, SimilarityError> {
        let q = self.query_position(query_id)?;
        let mut hits = self.scores(q, false);
        hits.sort_by(hit_order);
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimilarityError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.params.radius.to_le_bytes())?;
        w.write_all(&self.params.nbits.to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for (id, fp) in self.ids.iter().zip(&self.fingerprints) {
            w.write_all(&id.to_le_bytes())?;
            for word in &fp.words {
                w.write_all(&word.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimilarityError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(SimilarityError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(SimilarityError::VersionMismatch {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let radius = read_u32(&mut r)?;
        let nbits = read_u32(&mut r)?;
        check_width(nbits)?;
        let seed = read_u64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let words = nbits as usize / 64;
        let mut ids = Vec::with_capacity(count);
        let mut fingerprints = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(read_u64(&mut r)?);
            let mut ws = Vec::with_capacity(words);
            for _ in 0..words {
                ws.push(read_u64(&mut r)?);
            }
            fingerprints.push(Fingerprint {
                radius,
                nbits,
                words: ws,
            });
        }
        Self::from_parts(FingerprintParams { radius, nbits, seed }, ids, fingerprints)
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Index over store records; SMILES were validated at load time.
pub fn index_records(records: &[crate::ingest::Record], params: FingerprintParams) -> Result<SimilarityIndex, SimilarityError> {
    let mols: Vec<Molecule> = par::map(records, |r| {
        crate::chem::parse_smiles(&r.smiles).expect("record SMILES validated at load")
    });
    let pairs: Vec<(u64, &Molecule)> = records.iter().map(|r| r.cid).zip(mols.iter()).collect();
    SimilarityIndex::build(params, &pairs)
}

/// Free-function form of [`SimilarityIndex::top_k`].
pub fn top_k_similar(query_id: u64, corpus: &SimilarityIndex, k: usize) -> Result<Vec<SimilarityHit>, SimilarityError> {
    corpus.top_k(query_id, k)
}
