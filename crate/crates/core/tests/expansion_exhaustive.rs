mod common;

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::Rng;
use toothlift_core::{alpha_expansion, EnergyModel, NUM_CLASSES};

const INACTIVE: f64 = 1000.0;

/// Integer costs keep the scaled capacities exact. Labels outside `active`
/// cost [`INACTIVE`] everywhere.
fn random_model(seed: u64, active_count: usize) -> (EnergyModel, Vec<u8>) {
    let mut r = common::rng(seed);
    let n = r.random_range(1..=5);
    let active: Vec<u8> = sample(&mut r, NUM_CLASSES, active_count).iter().map(|l| l as u8).collect();
    let unary = (0..n)
        .map(|_| {
            let mut row = [INACTIVE; NUM_CLASSES];
            for &l in &active {
                row[l as usize] = r.random_range(0..=10) as f64;
            }
            row
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for w in u + 1..n as u32 {
            if r.random_bool(0.6) {
                edges.push((u, w));
            }
        }
    }
    let pairwise = edges.iter().map(|_| r.random_range(0..=8) as f64).collect();
    let init = (0..n).map(|_| active[r.random_range(0..active.len())]).collect();
    (EnergyModel::new(unary, edges, pairwise, 1.0).unwrap(), init)
}

/// Minimum energy over all 17^n labelings.
fn brute_minimum(model: &EnergyModel) -> f64 {
    let n = model.vertex_count();
    let mut labels = vec![0u8; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(model.energy(&labels));
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if (labels[i] as usize) < NUM_CLASSES {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

#[test]
fn two_active_labels_reach_the_global_minimum() {
    for seed in 0..50 {
        let (model, init) = random_model(seed, 2);
        let r = alpha_expansion(&model, &init, 5).unwrap();
        assert_eq!(r.energy, brute_minimum(&model), "seed {seed}");
        assert_eq!(r.energy, model.energy(&r.labels));
    }
}

#[test]
fn three_labels_stay_within_twice_the_minimum() {
    for seed in 100..150 {
        let (model, init) = random_model(seed, 3);
        let r = alpha_expansion(&model, &init, 10).unwrap();
        let best = brute_minimum(&model);
        assert!(r.energy >= best);
        assert!(r.energy <= 2.0 * best, "seed {seed}: {} vs {best}", r.energy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_is_monotone_and_ends_at_the_result(seed in 0u64..10_000, k in 2usize..5) {
        let (model, init) = random_model(seed, k);
        let r = alpha_expansion(&model, &init, 5).unwrap();
        prop_assert_eq!(r.initial_energy, model.energy(&init));
        prop_assert!(r.energy <= r.initial_energy);
        let mut last = r.initial_energy;
        for t in &r.trace {
            prop_assert!(t.energy <= last);
            last = t.energy;
        }
        prop_assert_eq!(last, r.energy);
    }

    #[test]
    fn result_is_a_fixed_point(seed in 0u64..10_000) {
        let (model, init) = random_model(seed, 3);
        let first = alpha_expansion(&model, &init, 10).unwrap();
        let again = alpha_expansion(&model, &first.labels, 10).unwrap();
        prop_assert_eq!(again.energy, first.energy);
    }
}
