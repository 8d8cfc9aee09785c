use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use dbforge::bench::{perturb_level1, perturb_level2, Domain, KeyEntry};
use dbforge::chem::parse_smiles;
use dbforge::ingest::{self, Record, RecordStore};
use dbforge::render::render_option;
use dbforge::score::{score_run, Answer};
use dbforge::similarity::{index_records, tanimoto, Fingerprint, FingerprintParams, SimilarityIndex};
use dbforge::synthetic::{synthetic_records, synthetic_smiles, synthetic_store};
use dbforge::templates::{dbscan, filter_templates, split_templates, tfidf_embeddings, Template};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn index() -> &'static SimilarityIndex {
    static IDX: OnceLock<SimilarityIndex> = OnceLock::new();
    IDX.get_or_init(|| index_records(synthetic_store(300, 3).records(), FingerprintParams::default()).unwrap())
}

fn fp(bits: &BTreeSet<usize>) -> Fingerprint {
    Fingerprint::from_bits(64, 2, bits.iter().copied()).unwrap()
}

/// Independent cyclomatic number: bonds - atoms + components (union-find).
fn cyclomatic(smiles: &str) -> usize {
    let m = parse_smiles(smiles).unwrap();
    let mut parent: Vec<usize> = (0..m.atom_count()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for b in m.bonds() {
        let (a, c) = (find(&mut parent, b.atoms.0), find(&mut parent, b.atoms.1));
        parent[a] = c;
    }
    let comps = (0..m.atom_count()).filter(|&i| find(&mut parent, i) == i).count();
    m.bonds().len() + comps - m.atom_count()
}

const QUESTIONS: &[&str] = &[
    "What is the {PROPERTY} of {COMPOUND}?",
    "Tell me the {PROPERTY} of {COMPOUND}.",
    "Is the {PROPERTY} of {COMPOUND} known?",
    "Does {COMPOUND} have a {PROPERTY}?",
    "Could you provide the {PROPERTY} for {COMPOUND}?",
    "Report the {PROPERTY} for {COMPOUND}.",
    "{COMPOUND}: {PROPERTY}?",
];

fn template_list() -> impl Strategy<Value = Vec<Template>> {
    prop::collection::vec(0..QUESTIONS.len(), 0..20).prop_map(|picks| {
        picks
            .into_iter()
            .enumerate()
            .map(|(i, q)| Template::new(i as u32, QUESTIONS[q], "The {PROPERTY} of {COMPOUND} is {VALUE}.").unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tanimoto_symmetric_and_one_iff_equal(
        a in prop::collection::btree_set(0usize..64, 1..20),
        b in prop::collection::btree_set(0usize..64, 1..20),
    ) {
        let (fa, fb) = (fp(&a), fp(&b));
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
    }

    #[test]
    fn top_k_is_a_prefix_of_top_k_plus_one(q in 0usize..300, k in 0usize..40) {
        let idx = index();
        let id = idx.ids()[q];
        let shorter = idx.top_k(id, k).unwrap();
        let longer = idx.top_k(id, k + 1).unwrap();
        prop_assert_eq!(&longer[..shorter.len()], &shorter[..]);
        prop_assert_eq!(shorter, idx.top_k_sequential(id, k).unwrap());
    }

    #[test]
    fn filter_is_idempotent(list in template_list(), blocked in prop::collection::hash_set(0u32..20, 0..4)) {
        let (once, _) = filter_templates(list, &blocked);
        let (twice, report) = filter_templates(once.clone(), &blocked);
        prop_assert_eq!(once, twice);
        prop_assert!(report.duplicates.is_empty() && report.yes_no.is_empty() && report.blocked.is_empty());
    }

    #[test]
    fn split_partitions_the_input(list in template_list(), eps in 0.05f64..1.0, min_pts in 1usize..5) {
        let (kept, _) = filter_templates(list, &HashSet::new());
        prop_assume!(!kept.is_empty());
        let s = split_templates(&tfidf_embeddings(&kept), eps, min_pts).unwrap();
        let train: HashSet<u32> = s.train.iter().copied().collect();
        let test: HashSet<u32> = s.test.iter().copied().collect();
        prop_assert!(train.is_disjoint(&test));
        let all: HashSet<u32> = kept.iter().map(|t| t.id).collect();
        prop_assert_eq!(train.union(&test).copied().collect::<HashSet<_>>(), all);
    }

    #[test]
    fn dbscan_noise_is_order_invariant(
        points in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..40),
        eps in 0.05f64..1.2,
        min_pts in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let noise = |labels: Vec<Option<usize>>, map: &dyn Fn(usize) -> usize| -> BTreeSet<usize> {
            labels.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| map(i)).collect()
        };
        let a = noise(dbscan(&points, eps, min_pts), &|i| i);
        let b = noise(dbscan(&shuffled, eps, min_pts), &|i| order[i]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn weighted_sum_ignores_answer_order(
        replies in prop::collection::vec(0usize..5, 24),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut key = Vec::new();
        for (i, domain) in [Domain::In, Domain::Out].into_iter().enumerate() {
            for level in 1..=4u8 {
                for j in 0..3 {
                    key.push(KeyEntry {
                        question_id: format!("{i}-{level}-{j}"),
                        domain,
                        level,
                        repetition: 1,
                        options: vec!["1".into(), "2".into(), "3".into(), "4".into()],
                        correct_index: j,
                    });
                }
            }
        }
        let mut answers: Vec<Answer> = key
            .iter()
            .zip(&replies)
            .filter(|(_, &r)| r < 4)
            .map(|(k, &r)| Answer { question_id: k.question_id.clone(), reply_text: ["A", "B", "C", "D"][r].into() })
            .collect();
        let before = score_run(&answers, &key).unwrap();
        answers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let after = score_run(&answers, &key).unwrap();
        prop_assert!(before.ws.is_some());
        prop_assert_eq!(before.ws, after.ws);
    }

    #[test]
    fn ring_count_is_the_cyclomatic_number(seed in any::<u64>(), parts in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let smiles = (0..parts).map(|_| synthetic_smiles(&mut rng)).collect::<Vec<_>>().join(".");
        let m = parse_smiles(&smiles).unwrap();
        prop_assert_eq!(m.rings().len(), cyclomatic(&smiles), "{}", smiles);
    }

    #[test]
    fn partition_depends_only_on_ordinal(
        ordinals in prop::collection::btree_set(0usize..200, 1..60),
        train_n in 1usize..30,
        extra in 0usize..100,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let start = train_n + extra;
        let make = |salt: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            let mut recs: Vec<Record> = ordinals
                .iter()
                .map(|&o| Record::new(o as u64, synthetic_smiles(&mut rng), o))
                .collect();
            recs.shuffle(&mut rng);
            RecordStore::from_records(recs).unwrap()
        };
        let (a, b) = (make(1), make(2));
        let members = |s: &RecordStore| {
            ingest::partition(s, train_n, start).ok().map(|p| {
                let ids = |r: &[Record]| r.iter().map(|x| x.ordinal).collect::<Vec<_>>();
                (ids(p.train_records(s)), ids(p.out_domain_records(s)))
            })
        };
        let got = members(&a);
        prop_assert_eq!(&got, &members(&b));
        let want_train: Vec<usize> = ordinals.iter().copied().take(train_n).collect();
        let valid = want_train.len() == train_n && want_train.iter().all(|&o| o < start);
        prop_assert_eq!(got.is_some(), valid);
        if let Some((train, out)) = got {
            let want_out: Vec<usize> = ordinals.iter().copied().filter(|&o| o >= start).collect();
            prop_assert_eq!(train, want_train);
            prop_assert_eq!(out, want_out);
        }
    }

    #[test]
    fn perturbations_never_render_as_the_truth(v in -500.0f64..500.0, integral in any::<bool>()) {
        let v = if integral { v.round().abs() } else { (v * 100.0).round() / 100.0 };
        let truth = render_option(v);
        for cands in [perturb_level1(v), perturb_level2(v)] {
            let rendered: HashSet<&str> = cands.iter().map(|c| c.rendered.as_str()).collect();
            prop_assert_eq!(rendered.len(), cands.len());
            prop_assert!(!rendered.contains(truth.as_str()));
            for c in &cands {
                prop_assert_eq!(&render_option(c.value), &c.rendered);
            }
        }
    }
}

#[test]
fn enrich_is_idempotent_and_cache_round_trips() {
    let mut store = RecordStore::from_records(synthetic_records(200, 9)).unwrap();
    let first = ingest::enrich(&mut store);
    assert!(first.values_computed > 0);
    let snapshot = store.clone();
    assert_eq!(ingest::enrich(&mut store).values_computed, 0);
    assert_eq!(store.records(), snapshot.records());

    let dir = tempfile::tempdir().unwrap();
    for format in [ingest::CacheFormat::Binary, ingest::CacheFormat::Jsonl] {
        let p = dir.path().join(format.file_name());
        ingest::write_cache(&store, &p, format).unwrap();
        let back = ingest::read_cache(&p, format).unwrap();
        let p2 = dir.path().join(format!("again_{}", format.file_name()));
        ingest::write_cache(&back, &p2, format).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }
}
