//! Back-projection of per-view labels onto mesh vertices and majority voting.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::LabeledMesh;
use crate::render::export::{read_raw, write_raw, RawSidecar};
use crate::render::{dominant_corner, RenderOutput, EMPTY};
use crate::segment::ViewSegmentation;
use crate::NUM_CLASSES;

/// Per-vertex histogram of class votes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteTable {
    pub counts: Vec<[u32; NUM_CLASSES]>,
}

impl VoteTable {
    pub fn zeros(vertices: usize) -> Self {
        VoteTable {
            counts: vec![[0; NUM_CLASSES]; vertices],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.counts.len()
    }

    pub fn row_sum(&self, v: usize) -> u64 {
        self.counts[v].iter().map(|&c| c as u64).sum()
    }

    pub fn merge(&mut self, other: &VoteTable) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.saturating_add(*y);
            }
        }
    }

    /// Row-major little-endian `u32` matrix (`vertices × 17`) with JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let flat: Vec<u32> = self.counts.iter().flatten().copied().collect();
        let side = RawSidecar {
            width: NUM_CLASSES,
            height: self.counts.len(),
            dtype: "u32".into(),
            channels: 1,
        };
        write_raw(path, &flat, &side, u32::to_le_bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (flat, side) = read_raw(path, "u32", u32::from_le_bytes)?;
        if side.width != NUM_CLASSES {
            return Err(Error::Format(format!(
                "{}: vote table has {} columns, expected {NUM_CLASSES}",
                path.display(),
                side.width
            )));
        }
        Ok(VoteTable {
            counts: flat
                .chunks_exact(NUM_CLASSES)
                .map(|c| c.try_into().expect("chunk has 17 entries"))
                .collect(),
        })
    }
}

fn view_votes(mesh: &LabeledMesh, out: &RenderOutput, seg: &ViewSegmentation) -> Result<VoteTable> {
    if (out.width, out.height) != (seg.width, seg.height) {
        return Err(Error::Argument(format!(
            "view {}: render is {}x{} but segmentation is {}x{}",
            out.view_id, out.width, out.height, seg.width, seg.height
        )));
    }
    let mut table = VoteTable::zeros(mesh.vertex_count());
    let faces = mesh.faces();
    for (px, &f) in out.face_id.iter().enumerate() {
        if f == EMPTY {
            continue;
        }
        let face = faces
            .get(f as usize)
            .ok_or_else(|| Error::Argument(format!("view {}: face id {f} not in mesh", out.view_id)))?;
        let v = dominant_corner(face, &out.bary[px]);
        table.counts[v as usize][seg.label_map[px] as usize] += 1;
    }
    Ok(table)
}

/// Adds one vote `(vertex, label)` per covered pixel of every view. Views are
/// paired by `view_id`; order does not matter.
pub fn accumulate_votes(
    mesh: &LabeledMesh,
    outputs: &[RenderOutput],
    segs: &[ViewSegmentation],
) -> Result<VoteTable> {
    if outputs.len() != segs.len() {
        return Err(Error::Argument(format!(
            "{} rendered views but {} segmentations",
            outputs.len(),
            segs.len()
        )));
    }
    let pairs = outputs
        .iter()
        .map(|out| {
            let mut matching = segs.iter().filter(|s| s.view_id == out.view_id);
            match (matching.next(), matching.next()) {
                (Some(s), None) => Ok((out, s)),
                (None, _) => Err(Error::Argument(format!("no segmentation for view {}", out.view_id))),
                (Some(_), Some(_)) => Err(Error::Argument(format!(
                    "several segmentations for view {}",
                    out.view_id
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    pairs
        .par_iter()
        .map(|(out, seg)| view_votes(mesh, out, seg))
        .try_reduce(
            || VoteTable::zeros(mesh.vertex_count()),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )
}

/// Majority label per vertex. Unseen vertices get background; ties prefer a
/// tooth class over background, then the lowest class index.
pub fn resolve_votes(table: &VoteTable) -> Vec<u8> {
    table.counts.iter().map(resolve_row).collect()
}

fn resolve_row(row: &[u32; NUM_CLASSES]) -> u8 {
    let mut best = 0usize;
    for c in 1..NUM_CLASSES {
        if row[c] > row[best] || (best == 0 && row[c] == row[0] && row[c] > 0) {
            best = c;
        }
    }
    best as u8
}
