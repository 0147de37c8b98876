//! Channel-major feature maps and bilinear sampling in texel-center coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C × H × W` tensor stored channel-major: `data[c·H·W + y·W + x]`.
/// Texel `(x, y)` has its center at continuous coordinates `(x + 0.5, y + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Argument("feature map dimensions must be at least 1".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Argument(format!(
                "{} values for a {channels}x{height}x{width} map",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("feature map holds non-finite values".into()));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.plane() + y * self.width + x]
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Linear interpolation stencil along one axis in index space: clamps `u` to
/// `[0, n-1]` and returns `(i0, i1, frac, du_factor)`, where `du_factor` is 0
/// when clamping was active.
pub(crate) fn axis_taps(u: f64, n: usize) -> (usize, usize, f64, f64) {
    if n == 1 {
        return (0, 0, 0.0, 0.0);
    }
    let hi = (n - 1) as f64;
    let (uc, d) = if u < 0.0 {
        (0.0, 0.0)
    } else if u > hi {
        (hi, 0.0)
    } else {
        (u, 1.0)
    };
    let i0 = (uc.floor() as usize).min(n - 2);
    (i0, i0 + 1, uc - i0 as f64, d)
}

/// Four-tap bilinear stencil over a `w × h` grid (index-space coordinates).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Taps {
    pub idx: [usize; 4],
    pub wt: [f64; 4],
    /// Derivatives of `wt` with respect to the x and y query coordinates.
    pub dx: [f64; 4],
    pub dy: [f64; 4],
}

impl Taps {
    pub fn index_space(u: f64, v: f64, w: usize, h: usize) -> Taps {
        let (x0, x1, fx, gx) = axis_taps(u, w);
        let (y0, y1, fy, gy) = axis_taps(v, h);
        Taps {
            idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
            wt: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
            dx: [-(1.0 - fy) * gx, (1.0 - fy) * gx, -fy * gx, fy * gx],
            dy: [-(1.0 - fx) * gy, -fx * gy, (1.0 - fx) * gy, fx * gy],
        }
    }

    /// Stencil for a continuous texel-center coordinate point.
    pub fn texel(p: [f64; 2], w: usize, h: usize) -> Taps {
        Taps::index_space(p[0] - 0.5, p[1] - 0.5, w, h)
    }
}

/// Samples every channel at each taps entry; result is `points × C`.
pub(crate) fn gather(map: &FeatureMap, taps: &[Taps]) -> DMatrix<f64> {
    let plane = map.plane();
    DMatrix::from_fn(taps.len(), map.channels, |g, c| {
        let t = &taps[g];
        let ch = &map.data[c * plane..(c + 1) * plane];
        (0..4).map(|k| t.wt[k] * ch[t.idx[k]]).sum()
    })
}

/// Adjoint of [`gather`]: accumulates `grad` (`points × C`) into `out`.
pub(crate) fn scatter(out: &mut FeatureMap, taps: &[Taps], grad: &DMatrix<f64>) {
    let plane = out.plane();
    for (g, t) in taps.iter().enumerate() {
        for c in 0..out.channels {
            let v = grad[(g, c)];
            for k in 0..4 {
                out.data[c * plane + t.idx[k]] += t.wt[k] * v;
            }
        }
    }
}

/// Bilinear interpolation of all channels at continuous points (texel centers
/// at `i + 0.5`); points outside the map are clamped to the outermost centers.
pub fn bilinear_sample(map: &FeatureMap, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let taps: Vec<Taps> = points
        .iter()
        .map(|&p| Taps::texel(p, map.width, map.height))
        .collect();
    let m = gather(map, &taps);
    (0..points.len())
        .map(|g| m.row(g).iter().copied().collect())
        .collect()
}

/// Cell centers of a `⌈h/stride⌉ × ⌈w/stride⌉` grid, row-major. A partial last
/// cell is centered on its covered extent.
pub fn reference_grid(h: usize, w: usize, stride: usize) -> Result<Vec<[f64; 2]>> {
    if stride == 0 {
        return Err(Error::Argument("grid stride must be at least 1".into()));
    }
    let centers = |n: usize| -> Vec<f64> {
        (0..n.div_ceil(stride))
            .map(|i| {
                let lo = i * stride;
                let hi = ((i + 1) * stride).min(n);
                (lo + hi) as f64 / 2.0
            })
            .collect()
    };
    let (ys, xs) = (centers(h), centers(w));
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
        .collect())
}
