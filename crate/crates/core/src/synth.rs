//! Procedural labeled test meshes.

use std::f64::consts::PI;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::LabeledMesh;

/// Tooth classes along the arch, patient's right molar to left molar
/// (FDI 17..11 then 21..27 on an upper jaw). Third molars are left out.
pub const ARCH_CLASSES: [u8; 14] = [7, 6, 5, 4, 3, 2, 1, 9, 10, 11, 12, 13, 14, 15];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchParams {
    /// Grid samples along the arch curve.
    pub samples_along: usize,
    /// Grid samples across the gum strip.
    pub samples_across: usize,
    /// Semi-axes of the elliptical arch curve (mm).
    pub radius_x: f64,
    pub radius_y: f64,
    /// Width of the gum strip (mm).
    pub strip_width: f64,
    /// Hemisphere radius as a fraction of the tooth spacing.
    pub tooth_fill: f64,
    /// Relative random perturbation of tooth radii and positions.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ArchParams {
    fn default() -> Self {
        ArchParams {
            samples_along: 400,
            samples_across: 50,
            radius_x: 25.0,
            radius_y: 22.0,
            strip_width: 10.0,
            tooth_fill: 0.42,
            jitter: 0.05,
            seed: 0,
        }
    }
}

fn grid_faces(along: usize, across: usize) -> Vec<[u32; 3]> {
    let id = |i: usize, j: usize| (i * across + j) as u32;
    let mut faces = Vec::with_capacity(2 * (along - 1) * (across - 1));
    for i in 0..along - 1 {
        for j in 0..across - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    faces
}

/// A U-shaped gum strip (heightfield, crowns towards +Z) carrying 14
/// hemispherical bumps, each labeled with its own tooth class.
pub fn synth_arch(p: &ArchParams) -> Result<LabeledMesh> {
    if p.samples_along < 2 || p.samples_across < 2 {
        return Err(Error::Argument("arch grid needs at least 2x2 samples".into()));
    }
    if !(p.radius_x > 0.0 && p.radius_y > 0.0 && p.strip_width > 0.0) {
        return Err(Error::Argument("arch dimensions must be positive".into()));
    }
    if !(0.0..0.5).contains(&p.tooth_fill) || !(0.0..0.5).contains(&p.jitter) {
        return Err(Error::Argument("tooth_fill and jitter must lie in [0, 0.5)".into()));
    }
    let phi_max = 0.47 * PI;
    let center = |phi: f64| [p.radius_x * phi.sin(), -p.radius_y * phi.cos()];
    // outward in-plane normal of the ellipse at phi
    let outward = |phi: f64| {
        let n = [phi.sin() / p.radius_x, -phi.cos() / p.radius_y];
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        [n[0] / len, n[1] / len]
    };

    // arc-length table for evenly spaced teeth
    let fine = 4096;
    let mut arc = vec![0.0; fine + 1];
    for k in 1..=fine {
        let a = center(-phi_max + 2.0 * phi_max * (k - 1) as f64 / fine as f64);
        let b = center(-phi_max + 2.0 * phi_max * k as f64 / fine as f64);
        arc[k] = arc[k - 1] + ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    }
    let total = arc[fine];
    let phi_at = |s: f64| {
        let k = arc.partition_point(|&x| x < s).clamp(1, fine);
        let t = (s - arc[k - 1]) / (arc[k] - arc[k - 1]);
        -phi_max + 2.0 * phi_max * ((k - 1) as f64 + t) / fine as f64
    };

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n_teeth = ARCH_CLASSES.len();
    let spacing = total / n_teeth as f64;
    let teeth: Vec<([f64; 2], f64)> = (0..n_teeth)
        .map(|t| {
            let shift = rng.random_range(-p.jitter..=p.jitter) * spacing * 0.2;
            let grow = 1.0 + rng.random_range(-p.jitter..=p.jitter);
            (center(phi_at((t as f64 + 0.5) * spacing + shift)), p.tooth_fill * spacing * grow)
        })
        .collect();

    let (along, across) = (p.samples_along, p.samples_across);
    let mut vertices = Vec::with_capacity(along * across);
    let mut labels = Vec::with_capacity(along * across);
    for i in 0..along {
        let phi = -phi_max + 2.0 * phi_max * i as f64 / (along - 1) as f64;
        let c = center(phi);
        let n = outward(phi);
        for j in 0..across {
            let u = (j as f64 / (across - 1) as f64 - 0.5) * p.strip_width;
            let xy = [c[0] + u * n[0], c[1] + u * n[1]];
            // low rounded gum ridge
            let ridge = 0.15 * p.strip_width * (1.0 - (2.0 * u / p.strip_width).powi(2));
            let mut z = ridge;
            let mut label = 0;
            for (t, (tc, r)) in teeth.iter().enumerate() {
                let d2 = (xy[0] - tc[0]).powi(2) + (xy[1] - tc[1]).powi(2);
                if d2 < r * r {
                    z = ridge + (r * r - d2).sqrt();
                    label = ARCH_CLASSES[t];
                }
            }
            vertices.push(Point3::new(xy[0], xy[1], z));
            labels.push(label);
        }
    }
    LabeledMesh::new(vertices, grid_faces(along, across), Some(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Vertices per side.
    pub size: usize,
    /// Square blocks per side; block `(bx, by)` gets class `1 + by·blocks + bx`
    /// except the first, which stays background.
    pub blocks: usize,
    pub seed: u64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            size: 20,
            blocks: 2,
            seed: 0,
        }
    }
}

/// Flat unit square grid in the z = 0 plane with block labels. The seed
/// perturbs the vertex positions slightly within the plane.
pub fn synth_grid(p: &GridParams) -> Result<LabeledMesh> {
    if p.size < 2 || p.blocks == 0 || p.blocks > p.size || p.blocks * p.blocks > 17 {
        return Err(Error::Argument("grid needs size >= 2 and 1 <= blocks² <= 17".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let step = 1.0 / (p.size - 1) as f64;
    let mut vertices = Vec::with_capacity(p.size * p.size);
    let mut labels = Vec::with_capacity(p.size * p.size);
    for i in 0..p.size {
        for j in 0..p.size {
            let dx = rng.random_range(-0.1..=0.1) * step;
            let dy = rng.random_range(-0.1..=0.1) * step;
            vertices.push(Point3::new(j as f64 * step + dx, i as f64 * step + dy, 0.0));
            let (bx, by) = (j * p.blocks / p.size, i * p.blocks / p.size);
            labels.push((by * p.blocks + bx) as u8);
        }
    }
    LabeledMesh::new(vertices, grid_faces(p.size, p.size), Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::AdjacencyIndex;
    use std::collections::BTreeSet;

    #[test]
    fn arch_has_fourteen_classes_and_is_deterministic() {
        let p = ArchParams::default();
        let m = synth_arch(&p).unwrap();
        assert_eq!(m.vertex_count(), 20_000);
        let present: BTreeSet<u8> = m.labels().unwrap().iter().copied().filter(|&l| l > 0).collect();
        assert_eq!(present, ARCH_CLASSES.iter().copied().collect());
        assert_eq!(m, synth_arch(&p).unwrap());
        assert_ne!(m, synth_arch(&ArchParams { seed: 1, ..p }).unwrap());
    }

    #[test]
    fn tooth_regions_are_edge_connected() {
        let m = synth_arch(&ArchParams::default()).unwrap();
        let labels = m.labels().unwrap();
        let idx = AdjacencyIndex::from_mesh(&m);
        for &class in &ARCH_CLASSES {
            let members: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] == class).collect();
            let mut seen = vec![false; labels.len()];
            let mut stack = vec![members[0]];
            seen[members[0]] = true;
            let mut reached = 0;
            while let Some(v) = stack.pop() {
                reached += 1;
                for &w in idx.neighbors(v) {
                    let w = w as usize;
                    if labels[w] == class && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            assert_eq!(reached, members.len(), "class {class}");
        }
    }

    #[test]
    fn grid_blocks() {
        let m = synth_grid(&GridParams::default()).unwrap();
        assert_eq!(m.vertex_count(), 400);
        let l = m.labels().unwrap();
        assert_eq!((l[0], l[19], l[380], l[399]), (0, 1, 2, 3));
        assert!(synth_grid(&GridParams { blocks: 5, ..Default::default() }).is_err());
    }
}
