//! Per-vertex segmentation scores against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{AdjacencyIndex, NeighborhoodKind};
use crate::NUM_TEETH;

/// How B-IoU treats boundary vertices that both labelings mark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Intersection also requires `pred == gt` at the vertex.
    #[default]
    LabelAware,
    /// Plain IoU of the two boundary regions.
    RegionOnly,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label-aware" => Ok(BoundaryMode::LabelAware),
            "region-only" => Ok(BoundaryMode::RegionOnly),
            other => Err(Error::Argument(format!(
                "unknown boundary mode '{other}' (expected label-aware or region-only)"
            ))),
        }
    }
}

fn check_lengths(pred: &[u8], gt: &[u8]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Argument(format!(
            "prediction has {} labels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

pub fn overall_accuracy(pred: &[u8], gt: &[u8]) -> Result<f64> {
    check_lengths(pred, gt)?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty labeling".into()));
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// `(intersection, |pred = c|, |gt = c|)` for tooth classes 1..=16 (index c-1).
fn tooth_counts(pred: &[u8], gt: &[u8]) -> [(usize, usize, usize); NUM_TEETH] {
    let mut counts = [(0, 0, 0); NUM_TEETH];
    for (&p, &g) in pred.iter().zip(gt) {
        if (1..=NUM_TEETH as u8).contains(&p) {
            counts[p as usize - 1].1 += 1;
        }
        if (1..=NUM_TEETH as u8).contains(&g) {
            counts[g as usize - 1].2 += 1;
            if p == g {
                counts[g as usize - 1].0 += 1;
            }
        }
    }
    counts
}

fn mean_supported(values: &[Option<f64>]) -> Result<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::UndefinedMetric("ground truth contains no tooth class".into()));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Mean IoU over tooth classes present in `gt`, and the per-class IoUs
/// (`None` for classes absent from ground truth).
pub fn tooth_miou(pred: &[u8], gt: &[u8]) -> Result<(f64, [Option<f64>; NUM_TEETH])> {
    check_lengths(pred, gt)?;
    let per_class = tooth_counts(pred, gt).map(|(inter, np, ng)| {
        (ng > 0).then(|| inter as f64 / (np + ng - inter) as f64)
    });
    Ok((mean_supported(&per_class)?, per_class))
}

pub fn dice_per_class(pred: &[u8], gt: &[u8]) -> Result<[Option<f64>; NUM_TEETH]> {
    check_lengths(pred, gt)?;
    Ok(tooth_counts(pred, gt).map(|(inter, np, ng)| (ng > 0).then(|| 2.0 * inter as f64 / (np + ng) as f64)))
}

/// Mean Dice over tooth classes present in `gt`.
pub fn dice(pred: &[u8], gt: &[u8]) -> Result<f64> {
    mean_supported(&dice_per_class(pred, gt)?)
}

/// Vertices whose neighborhood holds a label different from their own.
pub fn boundary_vertices(labels: &[u8], neighborhoods: &[Vec<u32>]) -> Vec<bool> {
    labels
        .iter()
        .zip(neighborhoods)
        .map(|(&l, ns)| ns.iter().any(|&w| labels[w as usize] != l))
        .collect()
}

fn boundary_iou_from(pred: &[u8], gt: &[u8], neighborhoods: &[Vec<u32>], mode: BoundaryMode) -> Result<f64> {
    let bg = boundary_vertices(gt, neighborhoods);
    let bp = boundary_vertices(pred, neighborhoods);
    let mut inter = 0usize;
    let mut union = 0usize;
    for v in 0..gt.len() {
        if bg[v] || bp[v] {
            union += 1;
        }
        if bg[v] && bp[v] && (mode == BoundaryMode::RegionOnly || pred[v] == gt[v]) {
            inter += 1;
        }
    }
    if union == 0 {
        return Err(Error::UndefinedMetric("neither labeling has boundary vertices".into()));
    }
    Ok(inter as f64 / union as f64)
}

/// IoU of boundary-vertex sets, a vertex being on the boundary when one of its
/// `k` nearest neighbors carries a different label.
pub fn boundary_iou(
    pred: &[u8],
    gt: &[u8],
    index: &AdjacencyIndex,
    k: usize,
    mode: BoundaryMode,
) -> Result<f64> {
    check_lengths(pred, gt)?;
    if gt.len() != index.vertex_count() {
        return Err(Error::Argument(format!(
            "{} labels for a {}-vertex index",
            gt.len(),
            index.vertex_count()
        )));
    }
    let ns = index.all_neighborhoods(k, NeighborhoodKind::Knn)?;
    boundary_iou_from(pred, gt, &ns, mode)
}

/// Mean of symmetric class pairs `(g, g + 8)` for g in 1..=8 over the
/// applicable members; `None` when both are absent.
pub fn group_ious(per_class: &[Option<f64>; NUM_TEETH]) -> [Option<f64>; NUM_TEETH / 2] {
    std::array::from_fn(|g| {
        let members: Vec<f64> = [per_class[g], per_class[g + NUM_TEETH / 2]].into_iter().flatten().collect();
        (!members.is_empty()).then(|| members.iter().sum::<f64>() / members.len() as f64)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub t_miou: f64,
    pub b_iou: f64,
    pub dice: f64,
    /// Classes 1..=16; `null` where the class is absent from ground truth.
    pub per_class_iou: [Option<f64>; NUM_TEETH],
    /// Groups (1, 9) .. (8, 16).
    pub per_group_iou: [Option<f64>; NUM_TEETH / 2],
}

/// All scores for one mesh. Boundaries use `k` neighbors of type `kind`.
pub fn evaluate(
    pred: &[u8],
    gt: &[u8],
    index: &AdjacencyIndex,
    k: usize,
    kind: NeighborhoodKind,
    mode: BoundaryMode,
) -> Result<MetricsReport> {
    check_lengths(pred, gt)?;
    if gt.len() != index.vertex_count() {
        return Err(Error::Argument(format!(
            "{} labels for a {}-vertex mesh",
            gt.len(),
            index.vertex_count()
        )));
    }
    let (t_miou, per_class_iou) = tooth_miou(pred, gt)?;
    let ns = index.all_neighborhoods(k, kind)?;
    Ok(MetricsReport {
        oa: overall_accuracy(pred, gt)?,
        t_miou,
        b_iou: boundary_iou_from(pred, gt, &ns, mode)?,
        dice: dice(pred, gt)?,
        per_group_iou: group_ious(&per_class_iou),
        per_class_iou,
    })
}

/// One CSV row per named report: `mesh,oa,t_miou,b_iou,dice`.
pub fn summary_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("mesh,oa,t_miou,b_iou,dice\n");
    for (name, r) in rows {
        s.push_str(&format!("{name},{},{},{},{}\n", r.oa, r.t_miou, r.b_iou, r.dice));
    }
    s
}
