#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod pipeline;

use fcgshift::{Adjacency, AttributedGraph, FeatureSchema, Label, MaskedMatrix};
use rand::Rng;

/// A graph whose `d` feature columns form one fully present group.
pub fn dense_graph(id: &str, n: usize, edges: &[(u32, u32)], features: &[f32], d: usize) -> AttributedGraph {
    let schema = FeatureSchema::new([("x", d, true)]).unwrap();
    let values = features.to_vec();
    let m = MaskedMatrix::from_parts(schema, n, values, vec![true; n]).unwrap();
    AttributedGraph::new(id, Adjacency::new(n, edges.iter().copied()).unwrap(), m).unwrap()
}

pub fn random_graph(rng: &mut impl Rng, id: &str, n: usize, d: usize) -> AttributedGraph {
    let edges: Vec<(u32, u32)> =
        (0..rng.gen_range(0..=2 * n)).map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32))).collect();
    let x: Vec<f32> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    dense_graph(id, n, &edges, &x, d)
}

/// Relabels nodes by `perm` (old id -> new id).
pub fn permute_graph(g: &AttributedGraph, perm: &[usize]) -> AttributedGraph {
    let n = g.n();
    let d = g.features.cols();
    let mut x = vec![0.0f32; n * d];
    for (old, &new) in perm.iter().enumerate() {
        x[new * d..(new + 1) * d].copy_from_slice(g.features.row(old));
    }
    let edges: Vec<(u32, u32)> =
        g.adjacency.edges().iter().map(|&(s, t)| (perm[s as usize] as u32, perm[t as usize] as u32)).collect();
    dense_graph(&g.sample_id, n, &edges, &x, d)
}

pub fn labelled(mut g: AttributedGraph, family: &str) -> AttributedGraph {
    g.label = Some(Label::new(family, "t").unwrap());
    g
}
