//! Central-difference gradient verification and the built-in suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dgap::{dgap_backward, dgap_forward, DgapParams, TENSOR_NAMES};
use super::losses::{loss_bce, loss_boundary, loss_ce, loss_conf, loss_dice, loss_mc, loss_total, LossComponents, LossWeights};
use super::tensor::FeatureMap;
use crate::error::{Error, Result};
use crate::metrics::AssignmentResult;
use crate::{NUM_CLASSES, NUM_TEETH};

/// Default finite-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Largest relative error between `f`'s analytic gradient at `x` and central
/// differences, using denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    grad_check_range(f, x, eps, 0..x.len())
}

/// [`grad_check`] restricted to the coordinates in `range`.
pub fn grad_check_range<F>(f: F, x: &[f64], eps: f64, range: std::ops::Range<usize>) -> Result<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("step {eps} must be positive")));
    }
    let (f0, analytic) = f(x);
    if !f0.is_finite() {
        return Err(Error::Numeric(format!("function value {f0} at the check point")));
    }
    if analytic.len() != x.len() {
        return Err(Error::Argument(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            x.len()
        )));
    }
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in range {
        probe[i] = x[i] + eps;
        let hi = f(&probe).0;
        probe[i] = x[i] - eps;
        let lo = f(&probe).0;
        probe[i] = x[i];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value near coordinate {i}")));
        }
        let numeric = (hi - lo) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub op: String,
    pub parameter: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub entries: Vec<GradCheckEntry>,
}

/// Differentiable operations covered by [`gradcheck_suite`].
pub const SUITE_OPS: [&str; 8] = [
    "dgap_forward",
    "loss_mc",
    "loss_bce",
    "loss_dice",
    "loss_conf",
    "loss_boundary",
    "loss_ce",
    "loss_total",
];

struct Suite {
    eps: f64,
    fault: bool,
    entries: Vec<GradCheckEntry>,
}

impl Suite {
    fn record(&mut self, op: &str, parameter: &str, err: f64) {
        self.entries.push(GradCheckEntry {
            op: op.into(),
            parameter: parameter.into(),
            max_rel_error: err,
            passed: err < TOLERANCE,
        });
    }

    /// Checks `f` over `x`; with fault injection on, the analytic gradient of
    /// the first checked op is scaled by 1.5.
    fn check<F>(&mut self, op: &str, parameter: &str, f: F, x: &[f64], range: std::ops::Range<usize>) -> Result<()>
    where
        F: Fn(&[f64]) -> (f64, Vec<f64>),
    {
        let faulty = self.fault && self.entries.is_empty();
        let err = grad_check_range(
            |v| {
                let (y, mut g) = f(v);
                if faulty {
                    g.iter_mut().for_each(|x| *x *= 1.5);
                }
                (y, g)
            },
            x,
            self.eps,
            range,
        )?;
        self.record(op, parameter, err);
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dgap_entries(s: &mut Suite, rng: &mut ChaCha8Rng) -> Result<()> {
    let (c, h, w) = (3, 8, 8);
    let input = FeatureMap::new(c, h, w, uniform(rng, c * h * w, -1.0, 1.0))?;
    let mut params = DgapParams::random(c, 4, 2, 0.8, rng.random());
    params.max_offset = 0.9;
    let weights = FeatureMap::new(c, h, w, uniform(rng, c * h * w, -1.0, 1.0))?;
    let objective = |out: &FeatureMap| out.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum::<f64>();

    let base = params.flat();
    let eval_params = |v: &[f64]| {
        let mut p = params.clone();
        p.set_flat(v).expect("same length");
        let out = dgap_forward(&input, &p).expect("valid parameters");
        let g = dgap_backward(&input, &p, &weights).expect("valid parameters");
        (objective(&out), g.params)
    };
    for e in params.layout() {
        let len: usize = e.shape.iter().product();
        s.check("dgap_forward", &e.name, eval_params, &base, e.offset..e.offset + len)?;
    }
    let eval_input = |v: &[f64]| {
        let x = FeatureMap::new(c, h, w, v.to_vec()).expect("finite input");
        let out = dgap_forward(&x, &params).expect("valid input");
        let g = dgap_backward(&x, &params, &weights).expect("valid input");
        (objective(&out), g.input.data)
    };
    s.check("dgap_forward", "input", eval_input, &input.data, 0..input.data.len())
}

/// Runs every registered gradient check on fixed pseudo-random inputs.
/// `fault` corrupts one analytic gradient so the report must fail.
pub fn gradcheck_suite(seed: u64, fault: bool) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Suite {
        eps: DEFAULT_EPS,
        fault,
        entries: Vec::new(),
    };

    let n = 36;
    let gt_mask: Vec<f64> = (0..n).map(|_| rng.random_bool(0.4) as u8 as f64).collect();
    let pred = uniform(&mut rng, n, 0.05, 0.95);

    let dice = |v: &[f64]| loss_dice(v, &gt_mask).expect("same shape");
    s.check("loss_dice", "pred", dice, &pred, 0..n)?;
    let bce = |v: &[f64]| loss_bce(v, &gt_mask).expect("same shape");
    s.check("loss_bce", "pred", bce, &pred, 0..n)?;
    let presence: Vec<f64> = (0..NUM_TEETH).map(|i| (i % 3 != 0) as u8 as f64).collect();
    let conf = uniform(&mut rng, NUM_TEETH, 0.05, 0.95);
    let conf_f = |v: &[f64]| loss_conf(v, &presence).expect("16 values");
    s.check("loss_conf", "confidence", conf_f, &conf, 0..NUM_TEETH)?;
    // L1 of Sobel differences: opposite kernel taps can cancel to an exactly
    // zero slope, where central differences only see roundoff. Check at a
    // point whose slope is nonzero in every coordinate.
    let mut edge_pred = pred.clone();
    for _ in 0..1000 {
        let (_, g) = loss_boundary(&edge_pred, &gt_mask, 6, 6)?;
        if g.iter().all(|x| *x != 0.0) {
            break;
        }
        edge_pred = uniform(&mut rng, n, 0.05, 0.95);
    }
    let boundary = |v: &[f64]| loss_boundary(v, &gt_mask, 6, 6).expect("6x6 masks");
    s.check("loss_boundary", "pred", boundary, &edge_pred, 0..n)?;

    let px = 12;
    let logits = uniform(&mut rng, NUM_CLASSES * px, -2.0, 2.0);
    let labels: Vec<u8> = (0..px).map(|_| rng.random_range(0..NUM_CLASSES as u8)).collect();
    let ce = |v: &[f64]| loss_ce(v, &labels).expect("aligned logits");
    s.check("loss_ce", "logits", ce, &logits, 0..logits.len())?;

    let preds = 5;
    let probs = uniform(&mut rng, preds * NUM_CLASSES, 0.05, 1.0);
    let assignment = AssignmentResult {
        pairs: vec![(0, 2), (1, 0), (3, 1), (4, 3)],
        total_cost: 0.0,
    };
    let targets = [4u8, 9, 0, 16];
    let mc = |v: &[f64]| {
        let rows: Vec<[f64; NUM_CLASSES]> = v
            .chunks_exact(NUM_CLASSES)
            .map(|r| r.try_into().expect("17 values"))
            .collect();
        let l = loss_mc(&rows, &assignment, &targets).expect("valid pairs");
        (l.value, l.grad.concat())
    };
    s.check("loss_mc", "probs", mc, &probs, 0..probs.len())?;

    let comps = uniform(&mut rng, 7, 0.0, 2.0);
    let total = |v: &[f64]| {
        let w = LossWeights {
            mc: v[0],
            peg: v[1],
            mr: v[2],
            bce: v[3],
            dice: v[4],
            conf: v[5],
            ce: v[6],
            dice_mr: v[7],
            boundary: v[8],
        };
        let c = LossComponents {
            mc: comps[0],
            bce: comps[1],
            dice: comps[2],
            conf: comps[3],
            ce: comps[4],
            dice_mr: comps[5],
            boundary: comps[6],
        };
        let peg = c.bce * w.bce + c.dice * w.dice + c.conf * w.conf;
        let mr = c.ce * w.ce + c.dice_mr * w.dice_mr + c.boundary * w.boundary;
        let grad = vec![
            c.mc,
            peg,
            mr,
            w.peg * c.bce,
            w.peg * c.dice,
            w.peg * c.conf,
            w.mr * c.ce,
            w.mr * c.dice_mr,
            w.mr * c.boundary,
        ];
        (loss_total(&c, &w), grad)
    };
    let lambdas = uniform(&mut rng, 9, 0.1, 2.0);
    s.check("loss_total", "weights", total, &lambdas, 0..9)?;

    dgap_entries(&mut s, &mut rng)?;
    debug_assert!(TENSOR_NAMES.iter().all(|t| s.entries.iter().any(|e| e.parameter == *t)));

    let passed = s.entries.iter().all(|e| e.passed);
    Ok(GradCheckReport {
        eps: s.eps,
        tolerance: TOLERANCE,
        passed,
        entries: s.entries,
    })
}
