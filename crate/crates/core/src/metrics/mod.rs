//! Hungarian matching and segmentation scores (OA, T-mIoU, B-IoU, Dice).

pub mod hungarian;
pub mod scores;

pub use hungarian::{hungarian, AssignmentResult, CostMatrix};
pub use scores::{
    boundary_iou, boundary_vertices, dice, dice_per_class, evaluate, group_ious, overall_accuracy,
    summary_csv, tooth_miou, BoundaryMode, MetricsReport,
};
