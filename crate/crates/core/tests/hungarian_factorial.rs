mod common;

use proptest::prelude::*;
use rand::Rng;
use toothlift_core::{hungarian, CostMatrix};

/// Minimum over every injective map from the smaller side into the larger.
fn brute(m: &CostMatrix) -> f64 {
    fn go(m: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, transpose: bool) {
        let (rows, cols) = if transpose { (m.cols(), m.rows()) } else { (m.rows(), m.cols()) };
        if row == rows {
            *best = best.min(acc);
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                let v = if transpose { m.get(c, row) } else { m.get(row, c) };
                go(m, row + 1, used, acc + v, best, transpose);
                used[c] = false;
            }
        }
    }
    let transpose = m.rows() > m.cols();
    let cols = m.rows().max(m.cols());
    let mut best = f64::INFINITY;
    go(m, 0, &mut vec![false; cols], 0.0, &mut best, transpose);
    best
}

fn random_matrix(seed: u64) -> CostMatrix {
    let mut r = common::rng(seed);
    let rows = r.random_range(1..=7);
    let cols = r.random_range(1..=7);
    let data = (0..rows * cols).map(|_| r.random_range(-50.0..100.0)).collect();
    CostMatrix::new(rows, cols, data).unwrap()
}

#[test]
fn optimal_cost_matches_enumeration() {
    for seed in 0..100 {
        let m = random_matrix(seed);
        let a = hungarian(&m).unwrap();
        let best = brute(&m);
        assert!((a.total_cost - best).abs() <= 1e-9, "seed {seed}: {} vs {best}", a.total_cost);
        assert_eq!(a.pairs.len(), m.rows().min(m.cols()));
        let recomputed: f64 = a.pairs.iter().map(|&(r, c)| m.get(r, c)).sum();
        assert!((recomputed - a.total_cost).abs() <= 1e-9);
    }
}

#[test]
fn square_seven_by_seven_instances() {
    for seed in 500..520 {
        let mut r = common::rng(seed);
        let data = (0..49).map(|_| r.random_range(0..30) as f64).collect();
        let m = CostMatrix::new(7, 7, data).unwrap();
        assert_eq!(hungarian(&m).unwrap().total_cost, brute(&m));
    }
}

proptest! {
    #[test]
    fn pairs_are_a_matching(seed in 0u64..100_000) {
        let m = random_matrix(seed);
        let a = hungarian(&m).unwrap();
        let mut rows: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), a.pairs.len());
        prop_assert_eq!(cols.len(), a.pairs.len());
    }

    #[test]
    fn uniform_shift_moves_cost_by_matching_size(seed in 0u64..100_000, delta in -20.0f64..20.0) {
        let m = random_matrix(seed);
        let k = m.rows().min(m.cols()) as f64;
        let a = hungarian(&m).unwrap().total_cost;
        let b = hungarian(&m.shifted(delta)).unwrap().total_cost;
        prop_assert!((b - a - k * delta).abs() <= 1e-8);
    }
}
