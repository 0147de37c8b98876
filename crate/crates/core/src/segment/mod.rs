//! Per-view 2D segmentations and the segmenters that produce them.

mod file;
mod noisy;
mod oracle;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::LabeledMesh;
use crate::render::{Camera, RenderOutput};
use crate::{NUM_CLASSES, NUM_TEETH};

pub use file::{file_segment, label_png_path, write_label_pngs};
pub use noisy::noisy_segment;
pub use oracle::oracle_segment;

/// One predicted tooth instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancePrediction {
    /// Soft mask over the view, `height × width`, values in `[0, 1]`.
    pub mask: Vec<f32>,
    /// Class distribution over background + 16 teeth.
    pub class_probs: [f64; NUM_CLASSES],
    /// Presence confidence in `[0, 1]`.
    pub confidence: f64,
}

/// A dense class-index map for one view, optionally with instance outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSegmentation {
    pub view_id: u32,
    pub width: usize,
    pub height: usize,
    /// Row-major class indices in `0..=16`.
    pub label_map: Vec<u8>,
    pub instances: Option<Vec<InstancePrediction>>,
}

impl ViewSegmentation {
    pub fn new(view_id: u32, width: usize, height: usize, label_map: Vec<u8>) -> Result<Self> {
        let seg = ViewSegmentation {
            view_id,
            width,
            height,
            label_map,
            instances: None,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.label_map[y * self.width + x]
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_map.len() != self.width * self.height {
            return Err(Error::Format(format!(
                "view {}: label map has {} entries for {}x{}",
                self.view_id,
                self.label_map.len(),
                self.width,
                self.height
            )));
        }
        if let Some(bad) = self.label_map.iter().find(|&&l| l as usize > NUM_TEETH) {
            return Err(Error::Format(format!("view {}: class {bad} > 16", self.view_id)));
        }
        if let Some(inst) = &self.instances {
            if inst.len() > NUM_TEETH {
                return Err(Error::Format(format!(
                    "view {}: {} instances, at most 16 allowed",
                    self.view_id,
                    inst.len()
                )));
            }
            for p in inst {
                let sum: f64 = p.class_probs.iter().sum();
                if (sum - 1.0).abs() > 1e-5 || p.class_probs.iter().any(|&x| x < 0.0) {
                    return Err(Error::Format(format!(
                        "view {}: class probabilities sum to {sum}",
                        self.view_id
                    )));
                }
                if !(0.0..=1.0).contains(&p.confidence) {
                    return Err(Error::Format(format!(
                        "view {}: confidence {} outside [0, 1]",
                        self.view_id, p.confidence
                    )));
                }
                if p.mask.len() != self.label_map.len() {
                    return Err(Error::Format(format!("view {}: instance mask size", self.view_id)));
                }
            }
        }
        Ok(())
    }

    /// One instance per tooth class: binary mask, one-hot class, confidence 1
    /// when the class appears in the label map and 0 otherwise.
    pub fn with_instances_from_labels(mut self) -> Self {
        let mut inst = Vec::with_capacity(NUM_TEETH);
        for c in 1..=NUM_TEETH as u8 {
            let mask: Vec<f32> = self
                .label_map
                .iter()
                .map(|&l| if l == c { 1.0 } else { 0.0 })
                .collect();
            let present = mask.iter().any(|&m| m > 0.0);
            let mut class_probs = [0.0; NUM_CLASSES];
            class_probs[c as usize] = 1.0;
            inst.push(InstancePrediction {
                mask,
                class_probs,
                confidence: if present { 1.0 } else { 0.0 },
            });
        }
        self.instances = Some(inst);
        self
    }
}

/// Produces one segmentation per rendered view.
pub trait Segmenter: Sync {
    fn segment(&self, outputs: &[RenderOutput], cameras: &[Camera])
        -> Result<Vec<ViewSegmentation>>;
}

/// Ground-truth segmentations read off a labeled mesh.
pub struct OracleSegmenter<'a> {
    pub mesh: &'a LabeledMesh,
}

impl Segmenter for OracleSegmenter<'_> {
    fn segment(&self, outputs: &[RenderOutput], _: &[Camera]) -> Result<Vec<ViewSegmentation>> {
        oracle_segment(self.mesh, outputs)
    }
}

/// Label PNGs produced by an external model.
pub struct FileSegmenter {
    pub dir: PathBuf,
}

impl Segmenter for FileSegmenter {
    fn segment(&self, _: &[RenderOutput], cameras: &[Camera]) -> Result<Vec<ViewSegmentation>> {
        file_segment(&self.dir, cameras)
    }
}

/// Wraps another segmenter and corrupts its output near label boundaries.
pub struct NoisySegmenter<S> {
    pub base: S,
    pub boundary_radius: usize,
    pub flip_rate: f64,
    pub seed: u64,
}

impl<S: Segmenter> Segmenter for NoisySegmenter<S> {
    fn segment(&self, outputs: &[RenderOutput], cameras: &[Camera]) -> Result<Vec<ViewSegmentation>> {
        let base = self.base.segment(outputs, cameras)?;
        noisy_segment(&base, self.boundary_radius, self.flip_rate, self.seed)
    }
}

/// Textual segmenter selection: `oracle`, `file:<dir>` or
/// `noisy:<radius>,<flip_rate>[,<seed>]` (noise over the oracle).
#[derive(Clone, Debug, PartialEq)]
pub enum SegmenterKind {
    Oracle,
    File(PathBuf),
    Noisy {
        radius: usize,
        flip_rate: f64,
        seed: Option<u64>,
    },
}

impl FromStr for SegmenterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("bad segmenter spec {s:?}"));
        if s == "oracle" {
            return Ok(SegmenterKind::Oracle);
        }
        if let Some(dir) = s.strip_prefix("file:") {
            if dir.is_empty() {
                return Err(bad());
            }
            return Ok(SegmenterKind::File(PathBuf::from(dir)));
        }
        if let Some(rest) = s.strip_prefix("noisy:") {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(bad());
            }
            let radius = parts[0].parse().map_err(|_| bad())?;
            let flip_rate: f64 = parts[1].parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&flip_rate) {
                return Err(bad());
            }
            let seed = match parts.get(2) {
                Some(p) => Some(p.parse().map_err(|_| bad())?),
                None => None,
            };
            return Ok(SegmenterKind::Noisy {
                radius,
                flip_rate,
                seed,
            });
        }
        Err(bad())
    }
}

impl fmt::Display for SegmenterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterKind::Oracle => write!(f, "oracle"),
            SegmenterKind::File(dir) => write!(f, "file:{}", dir.display()),
            SegmenterKind::Noisy {
                radius,
                flip_rate,
                seed: Some(seed),
            } => write!(f, "noisy:{radius},{flip_rate},{seed}"),
            SegmenterKind::Noisy {
                radius,
                flip_rate,
                seed: None,
            } => write!(f, "noisy:{radius},{flip_rate}"),
        }
    }
}

impl Serialize for SegmenterKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmenterKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Runs the segmenter described by `kind`. `mesh` supplies ground truth for
/// the oracle and noisy variants; `default_seed` fills in a missing noise seed.
pub fn run_segmenter(
    kind: &SegmenterKind,
    mesh: &LabeledMesh,
    outputs: &[RenderOutput],
    cameras: &[Camera],
    default_seed: u64,
) -> Result<Vec<ViewSegmentation>> {
    let segs = match kind {
        SegmenterKind::Oracle => OracleSegmenter { mesh }.segment(outputs, cameras)?,
        SegmenterKind::File(dir) => FileSegmenter { dir: dir.clone() }.segment(outputs, cameras)?,
        SegmenterKind::Noisy {
            radius,
            flip_rate,
            seed,
        } => NoisySegmenter {
            base: OracleSegmenter { mesh },
            boundary_radius: *radius,
            flip_rate: *flip_rate,
            seed: seed.unwrap_or(default_seed),
        }
        .segment(outputs, cameras)?,
    };
    check_alignment(&segs, cameras)?;
    Ok(segs)
}

fn check_alignment(segs: &[ViewSegmentation], cameras: &[Camera]) -> Result<()> {
    if segs.len() != cameras.len() {
        return Err(Error::State(format!(
            "segmenter returned {} views for {} cameras",
            segs.len(),
            cameras.len()
        )));
    }
    for (s, c) in segs.iter().zip(cameras) {
        if s.view_id != c.view_id {
            return Err(Error::State(format!(
                "segmenter returned view {} where {} was expected",
                s.view_id, c.view_id
            )));
        }
    }
    Ok(())
}
