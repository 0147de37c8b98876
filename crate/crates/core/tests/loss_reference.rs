mod common;

use proptest::prelude::*;
use rand::Rng;
use toothlift_core::neural::gradcheck::{grad_check, gradcheck_suite, DEFAULT_EPS, SUITE_OPS, TOLERANCE};
use toothlift_core::neural::{
    loss_bce, loss_boundary, loss_ce, loss_conf, loss_dice, loss_total, LossComponents, LossWeights,
};
use toothlift_core::NUM_CLASSES;

/// 3×3 Sobel correlation on an explicitly replicate-padded copy of the image.
fn direct_sobel(img: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let (ph, pw) = (h + 2, w + 2);
    let mut pad = vec![0.0; ph * pw];
    for y in 0..ph {
        for x in 0..pw {
            let sy = y.saturating_sub(1).min(h - 1);
            let sx = x.saturating_sub(1).min(w - 1);
            pad[y * pw + x] = img[sy * w + sx];
        }
    }
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            for j in 0..3 {
                for i in 0..3 {
                    let v = pad[(y + j) * pw + x + i];
                    gx[y * w + x] += kx[j][i] * v;
                    gy[y * w + x] += ky[j][i] * v;
                }
            }
        }
    }
    (gx, gy)
}

fn random_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = common::rng(seed);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

#[test]
fn boundary_loss_matches_direct_convolution() {
    for seed in 0..20 {
        let pred = random_vec(64, 0.0, 1.0, seed);
        let gt: Vec<f64> = random_vec(64, 0.0, 1.0, seed + 50).iter().map(|v| v.round()).collect();
        let (px, py) = direct_sobel(&pred, 8, 8);
        let (gx, gy) = direct_sobel(&gt, 8, 8);
        let want = (0..64).map(|i| (px[i] - gx[i]).abs() + (py[i] - gy[i]).abs()).sum::<f64>() / 64.0;
        let (got, _) = loss_boundary(&pred, &gt, 8, 8).unwrap();
        assert!((got - want).abs() < 1e-12, "seed {seed}");
    }
    let flat = vec![0.3; 64];
    assert_eq!(loss_boundary(&flat, &vec![0.7; 64], 8, 8).unwrap().0, 0.0);
}

#[test]
fn hand_computed_values() {
    let (d, _) = loss_dice(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
    assert!(d.abs() < 1e-15);
    let (d, _) = loss_dice(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!((d - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
    let (b, _) = loss_bce(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
    assert!((b - std::f64::consts::LN_2).abs() < 1e-15);
    let (b, _) = loss_bce(&[0.0], &[1.0]).unwrap();
    assert!((b - -(1e-12f64).ln()).abs() < 1e-9);
    let (ce, _) = loss_ce(&vec![0.0; NUM_CLASSES * 3], &[0, 5, 16]).unwrap();
    assert!((ce - (NUM_CLASSES as f64).ln()).abs() < 1e-12);
}

#[test]
fn loss_constants_and_unit_total() {
    let w = LossWeights::default();
    assert_eq!((w.mc, w.peg, w.mr), (1.0, 1.0, 2.0));
    assert_eq!(loss_total(&LossComponents::uniform(1.0), &w), 10.0);
    let top = LossWeights { mc: 2.0, peg: 2.0, mr: 4.0, ..w };
    assert_eq!(loss_total(&LossComponents::uniform(1.0), &top), 20.0);
    assert_eq!(loss_total(&LossComponents::default(), &w), 0.0);
}

#[test]
fn suite_reports_every_op_and_detects_faults() {
    let report = gradcheck_suite(0, false).unwrap();
    assert!(report.passed);
    for op in SUITE_OPS {
        assert!(report.entries.iter().any(|e| e.op == op), "{op} missing");
    }
    assert!(report.entries.iter().all(|e| e.max_rel_error < TOLERANCE));
    let faulty = gradcheck_suite(0, true).unwrap();
    assert!(!faulty.passed);
    assert_eq!(faulty.entries.iter().filter(|e| !e.passed).count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smooth_losses_pass_grad_check(seed in 0u64..100_000) {
        let gt: Vec<f64> = random_vec(12, 0.0, 1.0, seed + 1).iter().map(|v| v.round()).collect();
        let pred = random_vec(12, 0.05, 0.95, seed);
        prop_assert!(grad_check(|p| loss_dice(p, &gt).unwrap(), &pred, DEFAULT_EPS).unwrap() < TOLERANCE);
        prop_assert!(grad_check(|p| loss_bce(p, &gt).unwrap(), &pred, DEFAULT_EPS).unwrap() < TOLERANCE);
        let presence: Vec<f64> = random_vec(16, 0.0, 1.0, seed + 2).iter().map(|v| v.round()).collect();
        let conf = random_vec(16, 0.05, 0.95, seed + 3);
        prop_assert!(grad_check(|c| loss_conf(c, &presence).unwrap(), &conf, DEFAULT_EPS).unwrap() < TOLERANCE);
        let mut r = common::rng(seed);
        let labels: Vec<u8> = (0..4).map(|_| r.random_range(0..NUM_CLASSES as u8)).collect();
        let logits = random_vec(NUM_CLASSES * 4, -3.0, 3.0, seed + 4);
        prop_assert!(grad_check(|z| loss_ce(z, &labels).unwrap(), &logits, DEFAULT_EPS).unwrap() < TOLERANCE);
    }

    #[test]
    fn losses_are_non_negative(seed in 0u64..100_000) {
        let gt: Vec<f64> = random_vec(16, 0.0, 1.0, seed + 1).iter().map(|v| v.round()).collect();
        let pred = random_vec(16, 0.0, 1.0, seed);
        prop_assert!(loss_dice(&pred, &gt).unwrap().0 >= 0.0);
        prop_assert!(loss_bce(&pred, &gt).unwrap().0 >= 0.0);
        prop_assert!(loss_boundary(&pred, &gt, 4, 4).unwrap().0 >= 0.0);
    }

    #[test]
    fn top_level_weights_scale_linearly(x in 0.0f64..10.0, k in 0.0f64..8.0) {
        let w = LossWeights::default();
        let c = LossComponents::uniform(x);
        let scaled = LossWeights { mc: w.mc * k, peg: w.peg * k, mr: w.mr * k, ..w };
        let want = k * loss_total(&c, &w);
        prop_assert!((loss_total(&c, &scaled) - want).abs() <= 1e-9 * want.max(1.0));
    }
}
