//! Seeded random-network generation shared by the test suites. Not part of
//! the public API.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Cell, CellNetwork, Edge};

/// Small random network with log-spread capacities and resistances.
///
/// `source_span` scales the source draw: 0.0 gives a source-free network
/// (the setting for max-min and convexity checks). Initial temperatures are
/// uniform in [-100, 100]. Edges form a random spanning-tree-ish backbone
/// plus extras, so most draws are connected but isolated cells can occur.
pub fn random_network(seed: u64, max_cells: usize, source_span: f64) -> CellNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = rng.random_range(2..=max_cells.max(2));
    let cells: Vec<Cell> = (0..n)
        .map(|_| Cell {
            capacity: 10f64.powf(rng.random_range(-2.0..2.0)),
            source: if source_span > 0.0 {
                rng.random_range(-source_span..source_span)
            } else {
                0.0
            },
            initial_temperature: rng.random_range(-100.0..100.0),
            pinned: None,
        })
        .collect();
    let mut edges = Vec::new();
    for j in 1..n {
        // attach each cell to an earlier one most of the time
        if rng.random_range(0.0..1.0) < 0.9 {
            let i = rng.random_range(0..j);
            edges.push(Edge::new(i, j, 10f64.powf(rng.random_range(-2.0..2.0))));
        }
    }
    let extras = rng.random_range(0..=n / 2);
    for _ in 0..extras {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b
            && !edges
                .iter()
                .any(|e| (e.i, e.j) == (a, b) || (e.i, e.j) == (b, a))
        {
            edges.push(Edge::new(a, b, 10f64.powf(rng.random_range(-2.0..2.0))));
        }
    }
    CellNetwork::new(cells, edges)
}

/// Uniform draw helper for test code that needs seeded scalars.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
