//! Reference kernels for the deformable attention plugin and the training
//! losses, with finite-difference gradient checks.

pub mod dgap;
pub mod gradcheck;
pub mod losses;
pub mod tensor;

pub use dgap::{dgap_backward, dgap_forward, DgapGradients, DgapParams};
pub use gradcheck::{grad_check, gradcheck_suite, GradCheckEntry, GradCheckReport};
pub use losses::{
    loss_bce, loss_boundary, loss_ce, loss_conf, loss_dice, loss_mc, loss_total, LossComponents,
    LossWeights, McLoss,
};
pub use tensor::{bilinear_sample, reference_grid, FeatureMap};
