//! Brute-force reference implementations working on per-entry views.

use std::collections::BTreeSet;

use fcgshift::collate::{prune, trim, zero};
use fcgshift::extract::ldp_features;
use fcgshift::{Adjacency, AttributedGraph, FeatureSchema, MaskedMatrix};
use rand::Rng;

/// A random masked graph together with its per-entry table
/// (`None` = undefined entry).
pub struct MaskedCase {
    pub graph: AttributedGraph,
    pub entries: Vec<Vec<Option<f32>>>,
    pub edges: Vec<(u32, u32)>,
}

pub fn random_masked_case(rng: &mut impl Rng, id: &str, max_n: usize, max_groups: usize) -> MaskedCase {
    let n = rng.gen_range(1..=max_n);
    let groups = rng.gen_range(1..=max_groups);
    let widths: Vec<usize> = (0..groups).map(|_| rng.gen_range(1..=4)).collect();
    let d: usize = widths.iter().sum();
    let miss_rate: f64 = [0.0, 0.02, 0.1, 0.4][rng.gen_range(0..4)];
    let always: Vec<bool> = (0..groups).map(|_| rng.gen_bool(0.3)).collect();
    let schema = FeatureSchema::new(widths.iter().enumerate().map(|(g, &w)| (format!("g{g}"), w, always[g]))).unwrap();
    let mut values = Vec::with_capacity(n * d);
    let mut mask = Vec::with_capacity(n * groups);
    let mut entries = vec![Vec::with_capacity(d); n];
    for row in entries.iter_mut() {
        for (g, &w) in widths.iter().enumerate() {
            let present = always[g] || !rng.gen_bool(miss_rate);
            mask.push(present);
            for _ in 0..w {
                let v: f32 = rng.gen_range(-5.0..5.0);
                values.push(v);
                row.push(present.then_some(v));
            }
        }
    }
    let edges: Vec<(u32, u32)> =
        (0..rng.gen_range(0..=2 * n)).map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32))).collect();
    let m = MaskedMatrix::from_parts(schema, n, values, mask).unwrap();
    let graph = AttributedGraph::new(id, Adjacency::new(n, edges.iter().copied()).unwrap(), m).unwrap();
    MaskedCase { graph, entries, edges }
}

/// Columns with at least one undefined entry.
pub fn oracle_c(entries: &[Vec<Option<f32>>]) -> BTreeSet<usize> {
    let mut c = BTreeSet::new();
    for row in entries {
        for (j, e) in row.iter().enumerate() {
            if e.is_none() {
                c.insert(j);
            }
        }
    }
    c
}

fn dense(g: &AttributedGraph) -> Vec<Vec<f32>> {
    assert!(g.features.is_fully_present(), "output has undefined entries");
    (0..g.n()).map(|i| g.features.row(i).to_vec()).collect()
}

fn edge_set(edges: impl IntoIterator<Item = (u32, u32)>) -> BTreeSet<(u32, u32)> {
    edges.into_iter().collect()
}

/// Compares trim, zero and prune on `case` with the set definitions.
pub fn check_collation(case: &MaskedCase) -> Result<(), String> {
    let e = &case.entries;
    let n = e.len();
    let d = e[0].len();
    let c = oracle_c(e);
    let f: Vec<usize> = (0..d).filter(|j| !c.contains(j)).collect();
    let original_edges = edge_set(case.edges.iter().copied());

    match trim(&case.graph) {
        Ok((g, report)) => {
            if f.is_empty() {
                return Err("trim succeeded with no universal column".into());
            }
            let want: Vec<Vec<f32>> = e.iter().map(|r| f.iter().map(|&j| r[j].unwrap()).collect()).collect();
            if dense(&g) != want {
                return Err("trim values differ".into());
            }
            if report.dims_removed != c.iter().copied().collect::<Vec<_>>() || !report.nodes_removed.is_empty() {
                return Err("trim report differs".into());
            }
            if edge_set(g.adjacency.edges().iter().copied()) != original_edges {
                return Err("trim changed edges".into());
            }
        }
        Err(_) if f.is_empty() => {}
        Err(err) => return Err(format!("trim failed: {err}")),
    }

    let (g, report) = zero(&case.graph);
    let want: Vec<Vec<f32>> = e.iter().map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect()).collect();
    if dense(&g) != want {
        return Err("zero values differ".into());
    }
    if !report.dims_removed.is_empty() || !report.nodes_removed.is_empty() {
        return Err("zero report not empty".into());
    }
    if edge_set(g.adjacency.edges().iter().copied()) != original_edges {
        return Err("zero changed edges".into());
    }

    let v_prime: Vec<usize> = (0..n).filter(|&i| e[i].iter().all(Option::is_some)).collect();
    match prune(&case.graph) {
        Ok((g, report)) => {
            if v_prime.is_empty() {
                return Err("prune succeeded with no complete node".into());
            }
            let want: Vec<Vec<f32>> = v_prime.iter().map(|&i| e[i].iter().map(|v| v.unwrap()).collect()).collect();
            if dense(&g) != want {
                return Err("prune rows differ".into());
            }
            let rank = |old: u32| v_prime.iter().position(|&v| v == old as usize).map(|p| p as u32);
            let want_edges: BTreeSet<(u32, u32)> =
                original_edges.iter().filter_map(|&(s, t)| Some((rank(s)?, rank(t)?))).collect();
            if edge_set(g.adjacency.edges().iter().copied()) != want_edges {
                return Err("prune edges differ".into());
            }
            if g.n() != v_prime.len() {
                return Err("prune dropped isolated nodes".into());
            }
            let removed: Vec<usize> = (0..n).filter(|i| !v_prime.contains(i)).collect();
            if report.nodes_removed != removed || !report.dims_removed.is_empty() {
                return Err("prune report differs".into());
            }
        }
        Err(_) if v_prime.is_empty() => {}
        Err(err) => return Err(format!("prune failed: {err}")),
    }
    Ok(())
}

/// LDP by scanning a dense symmetric adjacency matrix.
pub fn ldp_oracle(n: usize, edges: &[(u32, u32)]) -> Vec<[f64; 5]> {
    let mut a = vec![vec![false; n]; n];
    for &(s, t) in edges {
        let (s, t) = (s as usize, t as usize);
        if s != t {
            a[s][t] = true;
            a[t][s] = true;
        }
    }
    let deg: Vec<usize> = a.iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
    (0..n)
        .map(|v| {
            let nd: Vec<f64> = (0..n).filter(|&u| a[v][u]).map(|u| deg[u] as f64).collect();
            if nd.is_empty() {
                return [0.0; 5];
            }
            let k = nd.len() as f64;
            let mean = nd.iter().sum::<f64>() / k;
            let var = nd.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
            let min = nd.iter().cloned().fold(f64::MAX, f64::min);
            let max = nd.iter().cloned().fold(f64::MIN, f64::max);
            [deg[v] as f64, min, max, mean, var.sqrt()]
        })
        .collect()
}

pub fn random_edges(rng: &mut impl Rng, n: usize) -> Vec<(u32, u32)> {
    let density: f64 = rng.gen_range(0.0..3.0);
    let m = (density * n as f64) as usize;
    (0..m).map(|_| (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32))).collect()
}

pub fn check_ldp(n: usize, edges: &[(u32, u32)]) -> Result<(), String> {
    let adj = Adjacency::new(n, edges.iter().copied()).map_err(|e| e.to_string())?;
    let got = ldp_features(&adj);
    let want = ldp_oracle(n, edges);
    if got != want {
        let i = (0..n).find(|&i| got[i] != want[i]).unwrap();
        return Err(format!("node {i}: {:?} vs {:?}", got[i], want[i]));
    }
    Ok(())
}
