//! Triangle meshes with optional per-vertex class labels.

pub mod adjacency;
pub mod fdi;
pub mod io;
mod kdtree;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NUM_TEETH;

pub use adjacency::{AdjacencyIndex, NeighborhoodKind};

/// Which dental arch a scan covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Jaw {
    #[default]
    Upper,
    Lower,
}

/// A triangle mesh whose vertices may carry a class label in `0..=16`.
///
/// Label 0 is gingiva/background, labels 1..=16 are teeth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    labels: Option<Vec<u8>>,
}

impl LabeledMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::Format(format!(
                    "face {i} references vertex out of range (vertex count {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Format(format!("face {i} is degenerate: {f:?}")));
            }
        }
        if let Some(v) = vertices.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Format(format!("vertex {v} has a non-finite coordinate")));
        }
        let mut mesh = LabeledMesh {
            vertices,
            faces,
            labels: None,
        };
        if let Some(labels) = labels {
            mesh.set_labels(labels)?;
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Labels, or a state error when the mesh is unlabeled.
    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::State("mesh has no labels".into()))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn set_labels(&mut self, labels: Vec<u8>) -> Result<()> {
        if labels.len() != self.vertices.len() {
            return Err(Error::Alignment(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.vertices.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize > NUM_TEETH) {
            return Err(Error::Label(format!("class index {bad} outside 0..=16")));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        self.set_labels(labels)?;
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn centroid(&self) -> Point3<f64> {
        if self.vertices.is_empty() {
            return Point3::origin();
        }
        let sum = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or(0.0)
    }

    /// Unit normal of a face, or zero for a zero-area face.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Mesh with every vertex mapped through `transform`.
    pub fn transformed(&self, transform: &NormalizeTransform) -> LabeledMesh {
        LabeledMesh {
            vertices: self.vertices.iter().map(|p| transform.apply(p)).collect(),
            faces: self.faces.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Similarity transform `p ↦ scale · R · (p + translation)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizeTransform {
    pub translation: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn identity() -> Self {
        NormalizeTransform {
            translation: Vector3::zeros(),
            rotation: Matrix3::identity(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * (p.coords + self.translation) * self.scale)
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax() <= tol
    }
}

/// Rotation carrying `from` onto `to` (both non-zero).
fn rotation_onto(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => r.into_inner(),
        None => {
            // Antiparallel: half turn about any axis orthogonal to `from`.
            let helper = if from.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            let axis = Unit::new_normalize(from.cross(&helper));
            Rotation3::from_axis_angle(&axis, std::f64::consts::PI).into_inner()
        }
    }
}

/// Centers the mesh at the origin, rotates `up_axis` onto +Z and scales the
/// bounding-box diagonal to 1.
pub fn normalize(
    mesh: &LabeledMesh,
    up_axis: &Vector3<f64>,
) -> Result<(LabeledMesh, NormalizeTransform)> {
    if mesh.is_empty() {
        return Err(Error::Argument("cannot normalize an empty mesh".into()));
    }
    let up_norm = up_axis.norm();
    if up_norm <= 0.0 || !up_norm.is_finite() {
        return Err(Error::Argument("up axis must be a finite non-zero vector".into()));
    }
    let rotation = rotation_onto(&(up_axis / up_norm), &Vector3::z());
    let translation = -mesh.centroid().coords;

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in mesh.vertices() {
        let q = rotation * (p.coords + translation);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let diagonal = (hi - lo).norm();
    if diagonal.is_nan() || diagonal <= 0.0 {
        return Err(Error::Argument(
            "mesh has zero extent and cannot be scaled".into(),
        ));
    }
    let transform = NormalizeTransform {
        translation,
        rotation,
        scale: 1.0 / diagonal,
    };
    Ok((mesh.transformed(&transform), transform))
}
