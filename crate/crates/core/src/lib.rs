//! Dental mesh segmentation by multi-view rendering and 2D-to-3D label lifting.
//!
//! The pipeline normalizes a mesh, rasterizes it from a fixed set of
//! orthographic views, takes a per-view 2D segmentation from a pluggable
//! [`Segmenter`], votes the pixel labels back onto mesh vertices and smooths
//! the result with alpha-expansion graph cuts. [`metrics`] scores a labeling
//! against ground truth and [`neural`] holds small reference kernels for the
//! deformable attention plugin and the training losses, with gradient checks.

pub mod error;
pub mod lifting;
pub mod mesh;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod refine;
pub mod render;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
pub use lifting::{accumulate_votes, resolve_votes, VoteTable};
pub use mesh::{
    fdi::{map_fdi, FdiMap},
    io::{load_labels, load_mesh, save_labels, save_mesh},
    normalize, AdjacencyIndex, Jaw, LabeledMesh, NormalizeTransform, NeighborhoodKind,
};
pub use metrics::{
    boundary_iou, dice, group_ious, hungarian, overall_accuracy, tooth_miou, AssignmentResult,
    BoundaryMode, CostMatrix, MetricsReport,
};
pub use refine::{
    alpha_expansion, build_energy, max_flow, EnergyModel, ExpansionResult, FlowNetwork,
    MaxFlowResult,
};
pub use render::{
    make_view_set, pixel_vertex, render, render_mask_map, Camera, MaskMap, RenderOutput,
};
pub use segment::{
    file_segment, noisy_segment, oracle_segment, Segmenter, SegmenterKind, ViewSegmentation,
};

/// Number of semantic classes: background plus 16 teeth.
pub const NUM_CLASSES: usize = 17;
/// Number of tooth classes (labels `1..=16`).
pub const NUM_TEETH: usize = 16;
