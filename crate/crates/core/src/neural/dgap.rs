//! Deformable global attention: offsets from a pointwise net deform a sampling
//! grid, single-head attention runs over the resampled features and the
//! result is upsampled and added back onto the input.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gather, reference_grid, scatter, FeatureMap, Taps};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DgapParams {
    pub channels: usize,
    pub hidden: usize,
    /// Offset net layer 1: `hidden × C`, bias `hidden`.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// Offset net layer 2: `2 × hidden` (rows: dx, dy), bias 2.
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub grid_stride: usize,
    pub max_offset: f64,
}

/// Learnable tensors in flattening order.
pub const TENSOR_NAMES: [&str; 8] = ["w1", "b1", "w2", "b2", "wq", "wk", "wv", "wo"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// JSON description of a flat parameter buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamManifest {
    pub channels: usize,
    pub hidden: usize,
    pub grid_stride: usize,
    pub max_offset: f64,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

impl DgapParams {
    /// All weights zero; `max_offset` defaults to two grid cells.
    pub fn zeros(channels: usize, hidden: usize, grid_stride: usize) -> Self {
        let sq = || DMatrix::zeros(channels, channels);
        DgapParams {
            channels,
            hidden,
            w1: DMatrix::zeros(hidden, channels),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(2, hidden),
            b2: DVector::zeros(2),
            wq: sq(),
            wk: sq(),
            wv: sq(),
            wo: sq(),
            grid_stride,
            max_offset: 2.0 * grid_stride as f64,
        }
    }

    /// Weights uniform in `[-scale, scale]`.
    pub fn random(channels: usize, hidden: usize, grid_stride: usize, scale: f64, seed: u64) -> Self {
        let mut p = DgapParams::zeros(channels, hidden, grid_stride);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..p.param_count())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        p.set_flat(&flat).expect("length matches");
        p
    }

    fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.wq.as_slice(),
            self.wk.as_slice(),
            self.wv.as_slice(),
            self.wo.as_slice(),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.wq.as_mut_slice(),
            self.wk.as_mut_slice(),
            self.wv.as_mut_slice(),
            self.wo.as_mut_slice(),
        ]
    }

    /// `(name, shape, offset)` of each tensor in the flat vector. Matrices are
    /// flattened column-major.
    pub fn layout(&self) -> Vec<TensorEntry> {
        let (c, h) = (self.channels, self.hidden);
        let shapes = [
            vec![h, c],
            vec![h],
            vec![2, h],
            vec![2],
            vec![c, c],
            vec![c, c],
            vec![c, c],
            vec![c, c],
        ];
        let mut offset = 0;
        TENSOR_NAMES
            .iter()
            .zip(shapes)
            .map(|(name, shape)| {
                let e = TensorEntry {
                    name: name.to_string(),
                    offset,
                    shape,
                };
                offset += e.shape.iter().product::<usize>();
                e
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Number of leading flat entries that belong to the offset net.
    pub fn offset_net_len(&self) -> usize {
        self.tensors()[..4].iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Argument(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut rest = values;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_stride == 0 {
            return Err(Error::Argument("grid stride must be at least 1".into()));
        }
        if !(self.max_offset.is_finite() && self.max_offset >= 0.0) {
            return Err(Error::Argument("max offset must be finite and >= 0".into()));
        }
        let c = self.channels;
        let dims_ok = self.w1.shape() == (self.hidden, c)
            && self.b1.len() == self.hidden
            && self.w2.shape() == (2, self.hidden)
            && self.b2.len() == 2
            && [&self.wq, &self.wk, &self.wv, &self.wo].iter().all(|m| m.shape() == (c, c));
        if !dims_ok || c == 0 {
            return Err(Error::Argument("inconsistent parameter shapes".into()));
        }
        if self.tensors().iter().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn manifest(&self) -> ParamManifest {
        ParamManifest {
            channels: self.channels,
            hidden: self.hidden,
            grid_stride: self.grid_stride,
            max_offset: self.max_offset,
            dtype: "f64le".into(),
            tensors: self.layout(),
        }
    }

    /// Writes `<path>` (little-endian f64 values) and `<path>.json` (manifest).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.flat().iter().flat_map(|x| x.to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = manifest_path(path);
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = manifest_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let m: ParamManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{}: truncated f64 buffer", path.display())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let mut p = DgapParams::zeros(m.channels, m.hidden, m.grid_stride);
        p.max_offset = m.max_offset;
        if m.tensors != p.layout() {
            return Err(Error::Format(format!("{}: tensor layout mismatch", side.display())));
        }
        p.set_flat(&values)
            .map_err(|_| Error::Format(format!("{}: buffer length mismatch", path.display())))?;
        p.validate()?;
        Ok(p)
    }
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn tanh_m(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(f64::tanh)
}

fn add_row_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut row in m.row_iter_mut() {
        row += b.transpose();
    }
}

fn softmax_rows(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = s.clone();
    for mut row in a.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let z = row.sum();
        row /= z;
    }
    a
}

struct Cache {
    grid_w: usize,
    grid_h: usize,
    ref_taps: Vec<Taps>,
    feat_ref: DMatrix<f64>,
    hid: DMatrix<f64>,
    t2: DMatrix<f64>,
    /// Whether the deformed coordinate stayed inside the clamp range, per point and axis.
    live: Vec<[bool; 2]>,
    def_taps: Vec<Taps>,
    deformed: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    attn: DMatrix<f64>,
    y: DMatrix<f64>,
    up_taps: Vec<Taps>,
}

fn check(input: &FeatureMap, params: &DgapParams) -> Result<()> {
    params.validate()?;
    if input.channels != params.channels {
        return Err(Error::Argument(format!(
            "input has {} channels, parameters expect {}",
            input.channels, params.channels
        )));
    }
    Ok(())
}

fn forward(input: &FeatureMap, p: &DgapParams) -> Result<(FeatureMap, Cache)> {
    check(input, p)?;
    let (w, h, s) = (input.width, input.height, p.grid_stride);
    let grid = reference_grid(h, w, s)?;
    let (grid_w, grid_h) = (w.div_ceil(s), h.div_ceil(s));
    let ref_taps: Vec<Taps> = grid.iter().map(|&q| Taps::texel(q, w, h)).collect();
    let feat_ref = gather(input, &ref_taps);

    let mut a1 = &feat_ref * p.w1.transpose();
    add_row_bias(&mut a1, &p.b1);
    let hid = tanh_m(&a1);
    let mut a2 = &hid * p.w2.transpose();
    add_row_bias(&mut a2, &p.b2);
    let t2 = tanh_m(&a2);

    let (lo_x, hi_x) = (0.5, w as f64 - 0.5);
    let (lo_y, hi_y) = (0.5, h as f64 - 0.5);
    let mut live = Vec::with_capacity(grid.len());
    let def_taps: Vec<Taps> = grid
        .iter()
        .enumerate()
        .map(|(g, r)| {
            let x = r[0] + p.max_offset * t2[(g, 0)];
            let y = r[1] + p.max_offset * t2[(g, 1)];
            live.push([(lo_x..=hi_x).contains(&x), (lo_y..=hi_y).contains(&y)]);
            Taps::texel([x.clamp(lo_x, hi_x), y.clamp(lo_y, hi_y)], w, h)
        })
        .collect();
    let deformed = gather(input, &def_taps);

    let q = &deformed * p.wq.transpose();
    let k = &deformed * p.wk.transpose();
    let v = &deformed * p.wv.transpose();
    let scale = 1.0 / (p.channels as f64).sqrt();
    let attn = softmax_rows(&(&q * k.transpose() * scale));
    let y = &attn * &v;
    let z = &y * p.wo.transpose();

    let half = s as f64 / 2.0;
    let up_taps: Vec<Taps> = (0..h * w)
        .map(|px| {
            let (x, yy) = ((px % w) as f64 + 0.5, (px / w) as f64 + 0.5);
            Taps::index_space((x - half) / s as f64, (yy - half) / s as f64, grid_w, grid_h)
        })
        .collect();
    let mut out = input.clone();
    let plane = h * w;
    for (px, t) in up_taps.iter().enumerate() {
        for c in 0..p.channels {
            out.data[c * plane + px] += (0..4).map(|j| t.wt[j] * z[(t.idx[j], c)]).sum::<f64>();
        }
    }
    let cache = Cache {
        grid_w,
        grid_h,
        ref_taps,
        feat_ref,
        hid,
        t2,
        live,
        def_taps,
        deformed,
        q,
        k,
        v,
        attn,
        y,
        up_taps,
    };
    Ok((out, cache))
}

/// `input + Up(Wo · softmax(QKᵀ/√C) V)` with Q, K, V projected from the input
/// resampled at offset-deformed grid points.
pub fn dgap_forward(input: &FeatureMap, params: &DgapParams) -> Result<FeatureMap> {
    forward(input, params).map(|r| r.0)
}

/// Deformed sampling points (texel-center coordinates) used by [`dgap_forward`].
pub fn deformed_points(input: &FeatureMap, params: &DgapParams) -> Result<Vec<[f64; 2]>> {
    let (_, c) = forward(input, params)?;
    let grid = reference_grid(input.height, input.width, params.grid_stride)?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, r)| {
            [
                (r[0] + params.max_offset * c.t2[(g, 0)]).clamp(0.5, input.width as f64 - 0.5),
                (r[1] + params.max_offset * c.t2[(g, 1)]).clamp(0.5, input.height as f64 - 0.5),
            ]
        })
        .collect())
}

/// Gradients of a scalar loss given `d_out = ∂L/∂output`.
#[derive(Clone, Debug)]
pub struct DgapGradients {
    /// Same layout as [`DgapParams::flat`].
    pub params: Vec<f64>,
    pub input: FeatureMap,
}

pub fn dgap_backward(input: &FeatureMap, p: &DgapParams, d_out: &FeatureMap) -> Result<DgapGradients> {
    if (d_out.channels, d_out.height, d_out.width) != (input.channels, input.height, input.width) {
        return Err(Error::Argument("output gradient shape differs from input".into()));
    }
    let (_, c) = forward(input, p)?;
    let n_grid = c.grid_w * c.grid_h;
    let plane = input.plane();
    let ch = p.channels;

    let mut d_input = d_out.clone();
    let mut dz = DMatrix::zeros(n_grid, ch);
    for (px, t) in c.up_taps.iter().enumerate() {
        for k in 0..ch {
            let g = d_out.data[k * plane + px];
            for j in 0..4 {
                dz[(t.idx[j], k)] += t.wt[j] * g;
            }
        }
    }
    let d_wo = dz.transpose() * &c.y;
    let dy = &dz * &p.wo;
    let d_attn = &dy * c.v.transpose();
    let dv = c.attn.transpose() * &dy;
    let mut ds = DMatrix::zeros(n_grid, n_grid);
    for i in 0..n_grid {
        let dot: f64 = (0..n_grid).map(|j| c.attn[(i, j)] * d_attn[(i, j)]).sum();
        for j in 0..n_grid {
            ds[(i, j)] = c.attn[(i, j)] * (d_attn[(i, j)] - dot);
        }
    }
    let scale = 1.0 / (ch as f64).sqrt();
    let dq = &ds * &c.k * scale;
    let dk = ds.transpose() * &c.q * scale;
    let d_wq = dq.transpose() * &c.deformed;
    let d_wk = dk.transpose() * &c.deformed;
    let d_wv = dv.transpose() * &c.deformed;
    let d_def = &dq * &p.wq + &dk * &p.wk + &dv * &p.wv;

    scatter(&mut d_input, &c.def_taps, &d_def);
    // ∂L/∂(offset) through the sampling location
    let mut d_t2 = DMatrix::zeros(n_grid, 2);
    for (g, t) in c.def_taps.iter().enumerate() {
        let (mut gx, mut gy) = (0.0, 0.0);
        for k in 0..ch {
            let dd = d_def[(g, k)];
            let chan = &input.data[k * plane..(k + 1) * plane];
            for j in 0..4 {
                gx += dd * t.dx[j] * chan[t.idx[j]];
                gy += dd * t.dy[j] * chan[t.idx[j]];
            }
        }
        let [lx, ly] = c.live[g];
        let sech2 = |v: f64| 1.0 - v * v;
        if lx {
            d_t2[(g, 0)] = gx * p.max_offset * sech2(c.t2[(g, 0)]);
        }
        if ly {
            d_t2[(g, 1)] = gy * p.max_offset * sech2(c.t2[(g, 1)]);
        }
    }
    let d_w2 = d_t2.transpose() * &c.hid;
    let d_b2: DVector<f64> = d_t2.row_sum().transpose();
    let d_hid = &d_t2 * &p.w2;
    let d_a1 = d_hid.component_mul(&c.hid.map(|v| 1.0 - v * v));
    let d_w1 = d_a1.transpose() * &c.feat_ref;
    let d_b1: DVector<f64> = d_a1.row_sum().transpose();
    let d_feat = &d_a1 * &p.w1;
    scatter(&mut d_input, &c.ref_taps, &d_feat);

    let params = [
        d_w1.as_slice(),
        d_b1.as_slice(),
        d_w2.as_slice(),
        d_b2.as_slice(),
        d_wq.as_slice(),
        d_wk.as_slice(),
        d_wv.as_slice(),
        d_wo.as_slice(),
    ]
    .concat();
    Ok(DgapGradients {
        params,
        input: d_input,
    })
}
