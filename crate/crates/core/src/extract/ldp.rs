//! Local degree profile: `[deg, min, max, mean, std]` of neighbor degrees.

use crate::types::Adjacency;

pub const LDP_WIDTH: usize = 5;

/// LDP rows computed on the undirected, deduplicated, loop-free view of the graph.
/// `std` is the population standard deviation; isolated nodes get all zeros.
pub fn ldp_features(adj: &Adjacency) -> Vec<[f64; LDP_WIDTH]> {
    let nbrs = adj.undirected_neighbors();
    let deg: Vec<f64> = nbrs.iter().map(|l| l.len() as f64).collect();
    nbrs.iter()
        .enumerate()
        .map(|(v, list)| {
            if list.is_empty() {
                return [0.0; LDP_WIDTH];
            }
            let ds = list.iter().map(|&u| deg[u as usize]);
            let min = ds.clone().fold(f64::INFINITY, f64::min);
            let max = ds.clone().fold(f64::NEG_INFINITY, f64::max);
            let k = list.len() as f64;
            let mean = ds.clone().sum::<f64>() / k;
            let var = ds.map(|d| (d - mean) * (d - mean)).sum::<f64>() / k;
            [deg[v], min, max, mean, var.sqrt()]
        })
        .collect()
}
