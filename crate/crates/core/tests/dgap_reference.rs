mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use toothlift_core::neural::dgap::deformed_points;
use toothlift_core::neural::gradcheck::{grad_check, DEFAULT_EPS, TOLERANCE};
use toothlift_core::neural::{bilinear_sample, dgap_backward, dgap_forward, DgapParams, FeatureMap};

fn random_map(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
    let mut r = common::rng(seed);
    FeatureMap::new(c, h, w, (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_matrix(rows: usize, cols: usize, r: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-0.8..0.8))
}

/// Dense single-head attention over all pixels, added to the input.
fn plain_attention(x: &FeatureMap, p: &DgapParams) -> FeatureMap {
    let (c, n) = (x.channels, x.height * x.width);
    let feat = |i: usize| -> Vec<f64> { (0..c).map(|ch| x.data[ch * n + i]).collect() };
    let proj = |m: &DMatrix<f64>, v: &[f64]| -> Vec<f64> {
        (0..c).map(|o| (0..c).map(|i| m[(o, i)] * v[i]).sum()).collect()
    };
    let qs: Vec<Vec<f64>> = (0..n).map(|i| proj(&p.wq, &feat(i))).collect();
    let ks: Vec<Vec<f64>> = (0..n).map(|i| proj(&p.wk, &feat(i))).collect();
    let vs: Vec<Vec<f64>> = (0..n).map(|i| proj(&p.wv, &feat(i))).collect();
    let mut out = x.clone();
    for i in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|j| qs[i].iter().zip(&ks[j]).map(|(a, b)| a * b).sum::<f64>() / (c as f64).sqrt())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut y = vec![0.0; c];
        for j in 0..n {
            for ch in 0..c {
                y[ch] += e[j] / z * vs[j][ch];
            }
        }
        let o = proj(&p.wo, &y);
        for ch in 0..c {
            out.data[ch * n + i] += o[ch];
        }
    }
    out
}

#[test]
fn zero_branch_is_identity() {
    for (c, h, w, s) in [(1, 1, 1, 1), (3, 8, 8, 2), (4, 7, 5, 3), (2, 9, 11, 4), (5, 6, 6, 1)] {
        let x = random_map(c, h, w, (c * h * w) as u64);
        let y = dgap_forward(&x, &DgapParams::zeros(c, 3, s)).unwrap();
        assert!(y.max_abs_diff(&x) <= 1e-12, "{c}x{h}x{w} stride {s}");
    }
}

#[test]
fn zero_offsets_reduce_to_global_attention() {
    for seed in 0..5 {
        let mut r = common::rng(seed);
        let (c, h, w) = (r.random_range(1..5), r.random_range(2..8), r.random_range(2..8));
        let mut p = DgapParams::zeros(c, 4, 1);
        p.w1 = random_matrix(4, c, &mut r);
        p.b1 = DVector::from_fn(4, |_, _| r.random_range(-0.5..0.5));
        p.wq = random_matrix(c, c, &mut r);
        p.wk = random_matrix(c, c, &mut r);
        p.wv = random_matrix(c, c, &mut r);
        p.wo = random_matrix(c, c, &mut r);
        let x = random_map(c, h, w, seed + 100);
        let got = dgap_forward(&x, &p).unwrap();
        let want = plain_attention(&x, &p);
        assert!(got.max_abs_diff(&want) <= 1e-6, "seed {seed}: {}", got.max_abs_diff(&want));
    }
}

#[test]
fn bilinear_matches_hand_interpolation() {
    let x = random_map(2, 5, 6, 3);
    let pts = [[1.5, 1.5], [2.25, 3.75], [0.5, 4.5], [5.5, 0.5], [3.0, 2.0]];
    let got = bilinear_sample(&x, &pts);
    for (g, p) in got.iter().zip(pts) {
        let (u, v) = (p[0] - 0.5, p[1] - 0.5);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let x1 = (x0 + 1).min(5);
        let y1 = (y0 + 1).min(4);
        for ch in 0..2 {
            let want = (1.0 - fx) * (1.0 - fy) * x.get(ch, x0, y0)
                + fx * (1.0 - fy) * x.get(ch, x1, y0)
                + (1.0 - fx) * fy * x.get(ch, x0, y1)
                + fx * fy * x.get(ch, x1, y1);
            assert!((g[ch] - want).abs() < 1e-12, "{p:?}");
        }
    }
}

fn param_check(x: &FeatureMap, p: &DgapParams, weights: &FeatureMap) -> f64 {
    let loss = |p: &DgapParams| -> f64 {
        let y = dgap_forward(x, p).unwrap();
        y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
    };
    let theta = p.flat();
    grad_check(
        |t| {
            let mut q = p.clone();
            q.set_flat(t).unwrap();
            let g = dgap_backward(x, &q, weights).unwrap();
            (loss(&q), g.params)
        },
        &theta,
        DEFAULT_EPS,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn analytic_gradients_match_finite_differences(seed in 0u64..1000, stride in 1usize..3) {
        let mut p = DgapParams::random(2, 3, stride, 0.5, seed);
        p.max_offset = 0.7;
        let x = random_map(2, 5, 6, seed + 1);
        let weights = random_map(2, 5, 6, seed + 2);
        prop_assert!(param_check(&x, &p, &weights) < TOLERANCE);
        let g = dgap_backward(&x, &p, &weights).unwrap();
        let err = grad_check(
            |d| {
                let xm = FeatureMap::new(2, 5, 6, d.to_vec()).unwrap();
                let y = dgap_forward(&xm, &p).unwrap();
                let v = y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum();
                (v, dgap_backward(&xm, &p, &weights).unwrap().input.data)
            },
            &x.data,
            DEFAULT_EPS,
        ).unwrap();
        prop_assert_eq!(g.input.data.len(), x.data.len());
        prop_assert!(err < TOLERANCE, "input gradient error {}", err);
    }

    #[test]
    fn deformed_points_stay_inside_the_map(seed in 0u64..10_000, max_offset in 0.0f64..20.0) {
        let mut p = DgapParams::random(3, 4, 2, 3.0, seed);
        p.max_offset = max_offset;
        let x = random_map(3, 7, 9, seed);
        for q in deformed_points(&x, &p).unwrap() {
            prop_assert!((0.5..=8.5).contains(&q[0]) && (0.5..=6.5).contains(&q[1]));
        }
    }

    #[test]
    fn output_shape_matches_input(seed in 0u64..10_000, h in 1usize..9, w in 1usize..9, stride in 1usize..4) {
        let p = DgapParams::random(2, 2, stride, 1.0, seed);
        let x = random_map(2, h, w, seed);
        let y = dgap_forward(&x, &p).unwrap();
        prop_assert_eq!((y.channels, y.height, y.width), (2, h, w));
        prop_assert!(y.data.iter().all(|v| v.is_finite()));
    }
}
