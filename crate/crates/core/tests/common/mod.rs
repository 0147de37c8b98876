#![allow(dead_code)]

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toothlift_core::LabeledMesh;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows × cols` vertex grid in the z = 0 plane, split into triangles, with a
/// small jitter so nearest-neighbor distances are distinct.
pub fn jittered_grid(rows: usize, cols: usize, seed: u64) -> LabeledMesh {
    let mut r = rng(seed);
    let mut vertices = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            vertices.push(Point3::new(
                j as f64 + r.random_range(-0.2..0.2),
                i as f64 + r.random_range(-0.2..0.2),
                r.random_range(-0.05..0.05),
            ));
        }
    }
    let mut faces = Vec::new();
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let a = (i * cols + j) as u32;
            let b = a + 1;
            let c = a + cols as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    LabeledMesh::new(vertices, faces, None).unwrap()
}
