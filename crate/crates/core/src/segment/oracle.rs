use rayon::prelude::*;

use super::ViewSegmentation;
use crate::error::Result;
use crate::mesh::LabeledMesh;
use crate::render::{pixel_vertices, RenderOutput};

/// Ground-truth label maps: each covered pixel takes the label of its
/// attributed vertex, empty pixels are background.
pub fn oracle_segment(mesh: &LabeledMesh, outputs: &[RenderOutput]) -> Result<Vec<ViewSegmentation>> {
    let labels = mesh.require_labels()?;
    outputs
        .par_iter()
        .map(|out| {
            let label_map = pixel_vertices(out, mesh)?
                .into_iter()
                .map(|v| v.map_or(0, |v| labels[v as usize]))
                .collect();
            Ok(ViewSegmentation::new(out.view_id, out.width, out.height, label_map)?
                .with_instances_from_labels())
        })
        .collect()
}
