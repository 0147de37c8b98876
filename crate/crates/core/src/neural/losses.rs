//! Training losses with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::AssignmentResult;
use crate::{NUM_CLASSES, NUM_TEETH};

/// Probability floor used inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;
/// Additive smoothing of the Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("shape mismatch: {a} vs {b} values")));
    }
    Ok(())
}

/// Matched-pair classification loss value and whether any target probability
/// had to be clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct McLoss {
    pub value: f64,
    pub clamped: bool,
    /// `∂L/∂probs`, one row per prediction.
    pub grad: Vec<[f64; NUM_CLASSES]>,
}

/// `-Σ_(i,j) ln p_i(gt_classes[j])` over the assignment pairs `(prediction i, target j)`.
pub fn loss_mc(
    probs: &[[f64; NUM_CLASSES]],
    assignment: &AssignmentResult,
    gt_classes: &[u8],
) -> Result<McLoss> {
    let mut value = 0.0;
    let mut clamped = false;
    let mut grad = vec![[0.0; NUM_CLASSES]; probs.len()];
    for &(i, j) in &assignment.pairs {
        let row = probs
            .get(i)
            .ok_or_else(|| Error::Argument(format!("prediction {i} out of range")))?;
        let class = *gt_classes
            .get(j)
            .ok_or_else(|| Error::Argument(format!("target {j} out of range")))? as usize;
        if class >= NUM_CLASSES {
            return Err(Error::Label(format!("target class {class} outside 0..=16")));
        }
        let p = row[class];
        if p < PROB_CLAMP {
            clamped = true;
            value -= PROB_CLAMP.ln();
        } else {
            value -= p.ln();
            grad[i][class] -= 1.0 / p;
        }
    }
    if clamped {
        log::warn!("matched-pair loss: target probability below {PROB_CLAMP}, clamped");
    }
    Ok(McLoss { value, clamped, grad })
}

/// `1 - (2 Σ p·g + s) / (Σ p + Σ g + s)` with `s = 1`, and its gradient in `pred`.
pub fn loss_dice(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    same_len(pred.len(), gt.len())?;
    let inter: f64 = pred.iter().zip(gt).map(|(p, g)| p * g).sum();
    let denom = pred.iter().sum::<f64>() + gt.iter().sum::<f64>() + DICE_SMOOTH;
    let num = 2.0 * inter + DICE_SMOOTH;
    let grad = gt
        .iter()
        .map(|g| -(2.0 * g * denom - num) / (denom * denom))
        .collect();
    Ok((1.0 - num / denom, grad))
}

/// Mean binary cross-entropy with predictions clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss_bce(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    same_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::Argument("empty input".into()));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &g) in pred.iter().zip(gt) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        value -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
        let inside = pc == p;
        grad.push(if inside { (-g / pc + (1.0 - g) / (1.0 - pc)) / n } else { 0.0 });
    }
    Ok((value / n, grad))
}

/// Binary cross-entropy between 16 confidences and tooth-presence indicators.
pub fn loss_conf(conf: &[f64], presence: &[f64]) -> Result<(f64, Vec<f64>)> {
    if conf.len() != NUM_TEETH || presence.len() != NUM_TEETH {
        return Err(Error::Argument(format!("confidence loss needs {NUM_TEETH} values")));
    }
    loss_bce(conf, presence)
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Taps of a 3×3 correlation with replicated borders: `emit(out_px, src_px, weight)`
/// for every nonzero kernel entry.
fn sobel_taps(h: usize, w: usize, kernel: &[[f64; 3]; 3], mut emit: impl FnMut(usize, usize, f64)) {
    for y in 0..h {
        for x in 0..w {
            for (ky, row) in kernel.iter().enumerate() {
                for (kx, &k) in row.iter().enumerate() {
                    if k == 0.0 {
                        continue;
                    }
                    let sy = (y + ky).saturating_sub(1).min(h - 1);
                    let sx = (x + kx).saturating_sub(1).min(w - 1);
                    emit(y * w + x, sy * w + sx, k);
                }
            }
        }
    }
}

/// Sobel response of an `h × w` image (replicate padding), evaluated as
/// differences of opposite taps so constant regions give exactly zero.
pub fn sobel(img: &[f64], h: usize, w: usize, horizontal: bool) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        img[yc * w + xc]
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            out.push(if horizontal {
                (at(x + 1, y - 1) - at(x - 1, y - 1))
                    + 2.0 * (at(x + 1, y) - at(x - 1, y))
                    + (at(x + 1, y + 1) - at(x - 1, y + 1))
            } else {
                (at(x - 1, y + 1) - at(x - 1, y - 1))
                    + 2.0 * (at(x, y + 1) - at(x, y - 1))
                    + (at(x + 1, y + 1) - at(x + 1, y - 1))
            });
        }
    }
    out
}

/// Mean over pixels of `|Sx·pred − Sx·gt| + |Sy·pred − Sy·gt|`.
pub fn loss_boundary(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<(f64, Vec<f64>)> {
    same_len(pred.len(), gt.len())?;
    same_len(pred.len(), h * w)?;
    if h < 3 || w < 3 {
        return Err(Error::Argument(format!("{h}x{w} image is smaller than the 3x3 kernel")));
    }
    let n = (h * w) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; h * w];
    for (horizontal, kernel) in [(true, &SOBEL_X), (false, &SOBEL_Y)] {
        let diff: Vec<f64> = sobel(pred, h, w, horizontal)
            .iter()
            .zip(sobel(gt, h, w, horizontal))
            .map(|(a, b)| a - b)
            .collect();
        value += diff.iter().map(|d| d.abs()).sum::<f64>();
        sobel_taps(h, w, kernel, |o, s, wt| {
            if diff[o] != 0.0 {
                grad[s] += wt * diff[o].signum() / n;
            }
        });
    }
    Ok((value / n, grad))
}

/// Mean per-pixel 17-class cross-entropy of softmax(`logits`) against `gt`.
/// `logits` is channel-major, `17 × pixels`.
pub fn loss_ce(logits: &[f64], gt: &[u8]) -> Result<(f64, Vec<f64>)> {
    let n = gt.len();
    same_len(logits.len(), NUM_CLASSES * n)?;
    if n == 0 {
        return Err(Error::Argument("empty input".into()));
    }
    if let Some(bad) = gt.iter().find(|&&g| g as usize >= NUM_CLASSES) {
        return Err(Error::Label(format!("class {bad} outside 0..=16")));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (px, &g) in gt.iter().enumerate() {
        let z: Vec<f64> = (0..NUM_CLASSES).map(|c| logits[c * n + px]).collect();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        value += log_z - z[g as usize];
        for c in 0..NUM_CLASSES {
            let p = (z[c] - log_z).exp();
            grad[c * n + px] = (p - (c == g as usize) as u8 as f64) / n as f64;
        }
    }
    Ok((value / n as f64, grad))
}

/// Top-level and sub-loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mc: f64,
    pub peg: f64,
    pub mr: f64,
    pub bce: f64,
    pub dice: f64,
    pub conf: f64,
    pub ce: f64,
    pub dice_mr: f64,
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mc: 1.0,
            peg: 1.0,
            mr: 2.0,
            bce: 1.0,
            dice: 1.0,
            conf: 1.0,
            ce: 1.0,
            dice_mr: 1.0,
            boundary: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mc, self.peg, self.mr, self.bce, self.dice, self.conf, self.ce, self.dice_mr, self.boundary];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        LossWeights {
            mc: self.mc * k,
            peg: self.peg * k,
            mr: self.mr * k,
            bce: self.bce * k,
            dice: self.dice * k,
            conf: self.conf * k,
            ce: self.ce * k,
            dice_mr: self.dice_mr * k,
            boundary: self.boundary * k,
        }
    }
}

/// Individual loss values feeding [`loss_total`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub mc: f64,
    pub bce: f64,
    pub dice: f64,
    pub conf: f64,
    pub ce: f64,
    pub dice_mr: f64,
    pub boundary: f64,
}

impl LossComponents {
    pub fn uniform(x: f64) -> Self {
        LossComponents {
            mc: x,
            bce: x,
            dice: x,
            conf: x,
            ce: x,
            dice_mr: x,
            boundary: x,
        }
    }
}

pub fn loss_peg(c: &LossComponents, w: &LossWeights) -> f64 {
    w.bce * c.bce + w.dice * c.dice + w.conf * c.conf
}

pub fn loss_mr(c: &LossComponents, w: &LossWeights) -> f64 {
    w.ce * c.ce + w.dice_mr * c.dice_mr + w.boundary * c.boundary
}

/// `λ_MC·L_MC + λ_PEG·L_PEG + λ_MR·L_MR`.
pub fn loss_total(c: &LossComponents, w: &LossWeights) -> f64 {
    w.mc * c.mc + w.peg * loss_peg(c, w) + w.mr * loss_mr(c, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{hungarian, CostMatrix};

    fn onehot(c: usize) -> [f64; 17] {
        let mut r = [0.0; 17];
        r[c] = 1.0;
        r
    }

    #[test]
    fn mc_cases() {
        let a = AssignmentResult { pairs: vec![(0, 0)], total_cost: 0.0 };
        assert_eq!(loss_mc(&[onehot(4)], &a, &[4]).unwrap().value, 0.0);
        let mut p = [(1.0 - (-1.0f64).exp()) / 16.0; 17];
        p[2] = (-1.0f64).exp();
        assert!((loss_mc(&[p], &a, &[2]).unwrap().value - 1.0).abs() < 1e-15);
        let zero = loss_mc(&[onehot(1)], &a, &[3]).unwrap();
        assert!(zero.clamped);
        assert!((zero.value - 12.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!(loss_mc(&[onehot(1)], &a, &[]).is_err());
    }

    #[test]
    fn mc_is_invariant_to_prediction_permutation() {
        let probs: Vec<[f64; 17]> = (0..4)
            .map(|i| {
                let mut r = [0.01; 17];
                r[i + 1] = 1.0 - 0.16 - 0.01 * (i as f64);
                r[0] = 0.01 * (i as f64 + 1.0);
                r
            })
            .collect();
        let gt = [3u8, 1, 4, 2];
        let cost = |ps: &[[f64; 17]]| {
            CostMatrix::from_rows(&ps.iter().map(|p| gt.iter().map(|&g| -p[g as usize]).collect()).collect::<Vec<_>>())
                .unwrap()
        };
        let base = loss_mc(&probs, &hungarian(&cost(&probs)).unwrap(), &gt).unwrap().value;
        let perm = [2usize, 0, 3, 1];
        let shuffled: Vec<_> = perm.iter().map(|&i| probs[i]).collect();
        let moved = loss_mc(&shuffled, &hungarian(&cost(&shuffled)).unwrap(), &gt).unwrap().value;
        assert!((base - moved).abs() < 1e-12);
    }

    #[test]
    fn dice_cases() {
        let gt = [1.0, 1.0, 0.0, 1.0];
        let (v, _) = loss_dice(&gt, &gt).unwrap();
        assert!((0.0..=1.0 / (2.0 * 3.0 + 1.0)).contains(&v));
        let a = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert!((loss_dice(&a, &b).unwrap().0 - (1.0 - 1.0 / 5.0)).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let p: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            let v = loss_dice(&p, &b).unwrap().0;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn bce_and_conf_cases() {
        let gt = [0.0, 1.0, 1.0];
        let (v, _) = loss_bce(&[PROB_CLAMP, 1.0 - PROB_CLAMP, 1.0], &gt).unwrap();
        assert!(v < 1e-11);
        assert!((loss_bce(&[0.5; 3], &gt).unwrap().0 - std::f64::consts::LN_2).abs() < 1e-15);
        let c: Vec<f64> = (0..16).map(|i| (i as f64 + 0.5) / 16.0).collect();
        let g: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        assert_eq!(loss_conf(&c, &g).unwrap(), loss_bce(&c, &g).unwrap());
        assert!((loss_conf(&[0.5; 16], &g).unwrap().0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(loss_conf(&[0.5; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn boundary_cases() {
        let p: Vec<f64> = (0..25).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        assert_eq!(loss_boundary(&p, &p, 5, 5).unwrap().0, 0.0);
        assert_eq!(loss_boundary(&[0.3; 16], &[0.9; 16], 4, 4).unwrap().0, 0.0);
        assert!(matches!(loss_boundary(&[0.0; 4], &[0.0; 4], 2, 2), Err(Error::Argument(_))));
    }

    #[test]
    fn ce_cases() {
        let (v, g) = loss_ce(&[0.0; 17], &[5]).unwrap();
        assert!((v - 17f64.ln()).abs() < 1e-14);
        assert!(g.iter().sum::<f64>().abs() < 1e-14);
        assert!(loss_ce(&[0.0; 17], &[17]).is_err());
    }

    #[test]
    fn total_cases() {
        let w = LossWeights::default();
        assert_eq!((w.mc, w.peg, w.mr), (1.0, 1.0, 2.0));
        assert_eq!(loss_total(&LossComponents::default(), &w), 0.0);
        assert_eq!(loss_total(&LossComponents::uniform(1.0), &w), 10.0);
        let c = LossComponents { mc: 0.3, bce: 0.7, dice: 0.2, conf: 0.1, ce: 1.3, dice_mr: 0.4, boundary: 0.05 };
        let w2 = LossWeights { mr: 1.5, dice: 0.25, ..w };
        let doubled = LossWeights { mc: 2.0 * w2.mc, peg: 2.0 * w2.peg, mr: 2.0 * w2.mr, ..w2 };
        assert!((loss_total(&c, &doubled) - 2.0 * loss_total(&c, &w2)).abs() < 1e-12);
        // sub-weights nest inside the top-level ones
        assert!((loss_total(&c, &w2.scaled(2.0)) - 2.0 * loss_total(&c, &w2)).abs() > 1e-3);
        assert!(LossWeights { ce: -1.0, ..w }.validate().is_err());
    }
}
