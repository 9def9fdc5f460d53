#![allow(dead_code)]

use drcascade::graph::{build_graph, WeightedGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected graph: random spanning tree plus each remaining edge with probability `p`.
pub fn random_graph(seed: u64, n: usize, p: f64, w: (f64, f64)) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        present[u][v] = true;
        edges.push((u, v, rng.random_range(w.0..w.1)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !present[i][j] && rng.random_bool(p) {
                edges.push((i, j, rng.random_range(w.0..w.1)));
            }
        }
    }
    build_graph(n, &edges).expect("spanning tree keeps the graph connected")
}

pub fn graphs(n_lo: usize, n_hi: usize) -> impl Strategy<Value = WeightedGraph> {
    (n_lo..=n_hi, any::<u64>(), 0.0..0.6f64).prop_map(|(n, seed, p)| random_graph(seed, n, p, (0.2, 2.0)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
