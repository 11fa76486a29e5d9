mod common;

use std::collections::BTreeSet;

use fcgshift::bench::synth::generate_sample;
use fcgshift::bench::{generate_synthetic_corpus, SyntheticConfig};
use fcgshift::collate::{collate_dataset, dataset_trim_schema, Scheme};
use fcgshift::extract::{
    assemble_features, byte_entropy_histogram, byte_histogram, extract_corpus, hash_tokens, ldp_features,
    meta_features, string_stats, EmbeddingTable, FeatureConfig, LDP_GROUP, META_GROUPS,
};
use fcgshift::{Adjacency, FunctionRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles::{check_ldp, random_edges};

#[test]
fn ldp_matches_neighbor_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..300 {
        let n = rng.gen_range(1..=50);
        let edges = random_edges(&mut rng, n);
        check_ldp(n, &edges).unwrap_or_else(|e| panic!("graph {i}: {e}"));
    }
}

#[test]
fn ldp_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let n = rng.gen_range(1..=40);
        let adj = Adjacency::new(n, random_edges(&mut rng, n)).unwrap();
        for [deg, min, max, mean, std] in ldp_features(&adj) {
            assert!(min <= mean + 1e-12 && mean <= max + 1e-12 && std >= 0.0);
            if deg == 0.0 {
                assert_eq!([min, max, mean, std], [0.0; 4]);
            }
        }
    }
}

fn synth() -> SyntheticConfig {
    SyntheticConfig { min_nodes: 8, max_nodes: 25, embedding_dim: 8, ..SyntheticConfig::default() }
}

#[test]
fn node_permutation_permutes_rows() {
    let cfg = synth();
    let full = FeatureConfig { meta: true, llm: true, ldp: true, llm_dim: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10 {
        let s = generate_sample(&cfg, k % 5, k % 2, k).unwrap();
        let n = s.adjacency.n();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut records = vec![s.records[0].clone(); n];
        let mut table = EmbeddingTable::new(8).unwrap();
        for old in 0..n {
            records[perm[old]] = s.records[old].clone();
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&old| perm[old]);
        for old in order {
            if let Some(v) = s.embeddings.get(old) {
                table.insert(perm[old] as u32, v.to_vec()).unwrap();
            }
        }
        let edges = s.adjacency.edges().iter().map(|&(a, b)| (perm[a as usize] as u32, perm[b as usize] as u32));
        let adj = Adjacency::new(n, edges).unwrap();
        let g0 = assemble_features("a", &s.adjacency, &s.records, Some(&s.embeddings), &full).unwrap();
        let g1 = assemble_features("a", &adj, &records, Some(&table), &full).unwrap();
        for old in 0..n {
            assert_eq!(g0.features.row(old), g1.features.row(perm[old]));
            for grp in 0..g0.schema().len() {
                assert_eq!(g0.features.present(old, grp), g1.features.present(perm[old], grp));
            }
        }
    }
}

#[test]
fn universal_groups_always_present() {
    let cfg = synth();
    let full = FeatureConfig { meta: true, llm: true, ldp: true, llm_dim: 8 };
    for k in 0..20 {
        let s = generate_sample(&cfg, k % 5, k % 2, k).unwrap();
        let g = assemble_features("u", &s.adjacency, &s.records, Some(&s.embeddings), &full).unwrap();
        for (gi, grp) in g.schema().groups().iter().enumerate() {
            if grp.universal {
                assert!((0..g.n()).all(|i| g.features.present(i, gi)), "{}", grp.name);
            }
        }
    }
}

#[test]
fn external_rich_corpus_trims_to_universal_groups() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig { samples_per_type: 3, ..synth() };
    let index = generate_synthetic_corpus(&cfg, dir.path()).unwrap();
    let features = FeatureConfig { meta: true, llm: true, ldp: true, llm_dim: 8 };
    let graphs = extract_corpus(dir.path(), &index, &features).unwrap();
    let schema = dataset_trim_schema(&graphs).unwrap();
    let names: Vec<&str> = schema.groups().iter().map(|g| g.name.as_str()).collect();
    let mut want: Vec<&str> = META_GROUPS[..5].iter().map(|g| g.0).collect();
    want.push(LDP_GROUP);
    assert_eq!(names, want);
    assert_eq!(schema.dim(), 201 + 5);
    let (trimmed, _) = collate_dataset(&graphs, Scheme::Trim, None).unwrap();
    assert!(trimmed.iter().all(|g| g.features.cols() == 206 && g.features.is_fully_present()));
}

#[test]
fn ldp_only_is_the_baseline_input() {
    let s = generate_sample(&synth(), 1, 1, 1).unwrap();
    let g = assemble_features("b", &s.adjacency, &s.records, None, &FeatureConfig::ldp_only()).unwrap();
    assert_eq!(g.features.cols(), 5);
    assert!(g.features.is_fully_present());
}

#[test]
fn histogram_groups_are_distributions() {
    let cfg = synth();
    let hist_groups: BTreeSet<&str> = ["byte_histogram", "byte_entropy_histogram", "char_histogram"].into();
    let mut offsets = Vec::new();
    let mut off = 0;
    for (gi, &(name, w)) in META_GROUPS.iter().enumerate() {
        if hist_groups.contains(name) {
            offsets.push((gi, off, w));
        }
        off += w;
    }
    assert_eq!(offsets.len(), 3);
    for k in 0..10 {
        let s = generate_sample(&cfg, k % 5, 0, k).unwrap();
        for r in &s.records {
            let m = meta_features(r);
            for &(gi, o, w) in &offsets {
                let sum: f64 = m.values[o..o + w].iter().map(|&v| v as f64).sum();
                assert!(!m.present[gi] || sum == 0.0 || (sum - 1.0).abs() < 1e-6, "sum {sum}");
            }
        }
    }
}

fn token() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_$./]{0,12}"
}

proptest! {
    #[test]
    fn hashing_is_additive(a in prop::collection::vec(token(), 0..8), b in prop::collection::vec(token(), 0..8)) {
        let ab: Vec<String> = a.iter().chain(&b).cloned().collect();
        let (ha, hb, hab) = (hash_tokens(&a, 50), hash_tokens(&b, 50), hash_tokens(&ab, 50));
        for i in 0..ha.len() {
            prop_assert_eq!(hab[i], ha[i] + hb[i]);
        }
    }

    #[test]
    fn byte_histograms_normalized(bytes in prop::collection::vec(any::<u8>(), 1..5000)) {
        for h in [byte_histogram(&bytes), byte_entropy_histogram(&bytes)] {
            let s: f64 = h.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn char_stats_bounded(strings in prop::collection::vec(".{0,20}", 0..6)) {
        let st = string_stats(&strings);
        let s: f64 = st.char_histogram.iter().map(|&v| v as f64).sum();
        prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-6);
        prop_assert!(st.char_entropy >= 0.0 && f64::from(st.char_entropy) <= 96f64.log2() + 1e-5);
    }

    #[test]
    fn meta_is_pure(seed in any::<u64>()) {
        let s = generate_sample(&SyntheticConfig { seed, ..synth() }, 0, 0, 0).unwrap();
        let r: &FunctionRecord = &s.records[0];
        prop_assert_eq!(meta_features(r).values, meta_features(&r.clone()).values);
    }
}
