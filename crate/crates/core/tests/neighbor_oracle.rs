mod common;

use common::{brute_force_neighbors, random_embeddings};
use curricle::neighbors::{build_neighbor_table, default_k, NeighborTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_matches(table: &NeighborTable, oracle: &[Vec<(usize, f64)>]) {
    for (w, row) in oracle.iter().enumerate() {
        let ids: Vec<usize> = row.iter().map(|p| p.0).collect();
        let sims: Vec<f64> = row.iter().map(|p| p.1).collect();
        assert_eq!(table.neighbor_ids(w), ids.as_slice(), "word {w}");
        assert_eq!(table.similarities(w), sims.as_slice(), "word {w}");
    }
}

#[test]
fn tables_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let d = rng.random_range(1..=16);
        let emb = random_embeddings(&mut rng, n, d);
        let k = if rng.random_bool(0.5) {
            default_k(n).min(n - 1)
        } else {
            rng.random_range(1..n)
        };
        let table = build_neighbor_table(&emb, k).unwrap();
        assert_matches(&table, &brute_force_neighbors(&emb.vectors, k));
    }
}

#[test]
fn saved_table_reloads_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let emb = random_embeddings(&mut rng, 60, 8);
    let table = build_neighbor_table(&emb, default_k(60)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neighbors.txt");
    table.save(&path).unwrap();
    assert_eq!(NeighborTable::load(&path).unwrap(), table);
}
