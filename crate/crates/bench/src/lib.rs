//! Fixtures shared by the benchmarks.

use nalgebra::Vector3;
use toothlift_core::synth::{synth_arch, ArchParams};
use toothlift_core::{
    accumulate_votes, make_view_set, normalize, oracle_segment, render, Camera, LabeledMesh,
    RenderOutput, VoteTable,
};

/// Normalized synthetic arch with `samples_along × samples_across` vertices.
pub fn arch(samples_along: usize, samples_across: usize) -> LabeledMesh {
    let raw = synth_arch(&ArchParams {
        samples_along,
        samples_across,
        ..ArchParams::default()
    })
    .expect("valid arch parameters");
    normalize(&raw, &Vector3::z()).expect("non-empty mesh").0
}

pub fn views(count: usize, size: u32) -> Vec<Camera> {
    make_view_set(count, (size, size)).expect("valid view set")
}

pub fn rendered(mesh: &LabeledMesh, cameras: &[Camera]) -> Vec<RenderOutput> {
    cameras.iter().map(|c| render(mesh, c)).collect()
}

/// Oracle votes for `mesh` from `cameras`.
pub fn oracle_votes(mesh: &LabeledMesh, cameras: &[Camera]) -> VoteTable {
    let outs = rendered(mesh, cameras);
    let segs = oracle_segment(mesh, &outs).expect("labeled mesh");
    accumulate_votes(mesh, &outs, &segs).expect("aligned views")
}
