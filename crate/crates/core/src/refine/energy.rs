//! Vote-driven unary costs and dihedral-modulated Potts pairwise weights.

use crate::error::{Error, Result};
use crate::lifting::VoteTable;
use crate::mesh::{AdjacencyIndex, LabeledMesh};
use crate::NUM_CLASSES;

/// Additive vote smoothing in the unary term.
pub const VOTE_PRIOR: f64 = 1.0;
/// Sensitivity of the pairwise weight to the dihedral angle.
pub const CREASE_BETA: f64 = 5.0;

/// `E(l) = Σ_v unary[v][l_v] + Σ_(u,w) pairwise · [l_u ≠ l_w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    pub unary: Vec<[f64; NUM_CLASSES]>,
    pub edges: Vec<(u32, u32)>,
    /// Weight per entry of `edges`, already multiplied by `potts_scale`.
    pub pairwise: Vec<f64>,
    pub potts_scale: f64,
}

impl EnergyModel {
    pub fn new(
        unary: Vec<[f64; NUM_CLASSES]>,
        edges: Vec<(u32, u32)>,
        pairwise: Vec<f64>,
        potts_scale: f64,
    ) -> Result<Self> {
        if edges.len() != pairwise.len() {
            return Err(Error::Argument("one pairwise weight per edge required".into()));
        }
        let n = unary.len();
        if edges.iter().any(|&(u, w)| u as usize >= n || w as usize >= n || u == w) {
            return Err(Error::Argument("edge endpoint out of range or self-loop".into()));
        }
        let finite_nonneg = |x: &f64| x.is_finite() && *x >= 0.0;
        if !unary.iter().flatten().all(finite_nonneg)
            || !pairwise.iter().all(finite_nonneg)
            || !finite_nonneg(&potts_scale)
        {
            return Err(Error::Argument("energy terms must be finite and non-negative".into()));
        }
        Ok(EnergyModel {
            unary,
            edges,
            pairwise,
            potts_scale,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.unary.len()
    }

    pub fn energy(&self, labels: &[u8]) -> f64 {
        let data: f64 = labels
            .iter()
            .zip(&self.unary)
            .map(|(&l, u)| u[l as usize])
            .sum();
        let smooth: f64 = self
            .edges
            .iter()
            .zip(&self.pairwise)
            .filter(|((u, w), _)| labels[*u as usize] != labels[*w as usize])
            .map(|(_, &wt)| wt)
            .sum();
        data + smooth
    }

    /// Per-vertex label minimizing the unary term alone (lowest index on ties).
    pub fn unary_argmin(&self) -> Vec<u8> {
        self.unary
            .iter()
            .map(|row| {
                let mut best = 0;
                for c in 1..NUM_CLASSES {
                    if row[c] < row[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }
}

/// Unary `-ln((n_c + 1) / (N + 17))` from the vote histogram; pairwise weight
/// `potts_scale · (mean ℓ / ℓ) · exp(-β (1 - cos θ))` per mesh edge, where θ is
/// the dihedral angle across the edge. Zero-length edges get ratio 1.
pub fn build_energy(mesh: &LabeledMesh, table: &VoteTable, potts_scale: f64) -> Result<EnergyModel> {
    if table.vertex_count() != mesh.vertex_count() {
        return Err(Error::Argument(format!(
            "vote table has {} rows for {} vertices",
            table.vertex_count(),
            mesh.vertex_count()
        )));
    }
    if !(potts_scale.is_finite() && potts_scale >= 0.0) {
        return Err(Error::Argument(format!("potts scale {potts_scale} must be >= 0")));
    }
    let unary = table
        .counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(|&c| c as f64).sum();
            let denom = total + NUM_CLASSES as f64 * VOTE_PRIOR;
            row.map(|c| -((c as f64 + VOTE_PRIOR) / denom).ln())
        })
        .collect();

    let index = AdjacencyIndex::from_mesh(mesh);
    let edges: Vec<(u32, u32)> = index.edges().collect();
    let crease = edge_min_cosines(mesh);
    let lengths: Vec<f64> = edges
        .iter()
        .map(|&(u, w)| (mesh.vertices()[u as usize] - mesh.vertices()[w as usize]).norm())
        .collect();
    let mean_len = if lengths.is_empty() {
        1.0
    } else {
        lengths.iter().sum::<f64>() / lengths.len() as f64
    };
    let pairwise = edges
        .iter()
        .zip(&lengths)
        .map(|(&(u, w), &len)| {
            let cos = crease
                .binary_search_by(|probe| probe.0.cmp(&(u, w)))
                .map(|i| crease[i].1)
                .unwrap_or(1.0);
            let ratio = if len > 0.0 { mean_len / len } else { 1.0 };
            potts_scale * ratio * (-CREASE_BETA * (1.0 - cos)).exp()
        })
        .collect();
    EnergyModel::new(unary, edges, pairwise, potts_scale)
}

/// For every edge shared by two or more faces, the smallest cosine between
/// the normals of faces around it. Sorted by edge.
fn edge_min_cosines(mesh: &LabeledMesh) -> Vec<((u32, u32), f64)> {
    let mut incid: Vec<((u32, u32), u32)> = Vec::with_capacity(mesh.face_count() * 3);
    for (fi, f) in mesh.faces().iter().enumerate() {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            incid.push(((a.min(b), a.max(b)), fi as u32));
        }
    }
    incid.sort_unstable();
    let normals: Vec<_> = (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < incid.len() {
        let mut j = i + 1;
        while j < incid.len() && incid[j].0 == incid[i].0 {
            j += 1;
        }
        if j - i >= 2 {
            let mut min_cos = 1.0f64;
            for a in i..j {
                for b in a + 1..j {
                    let c = normals[incid[a].1 as usize].dot(&normals[incid[b].1 as usize]);
                    min_cos = min_cos.min(c);
                }
            }
            out.push((incid[i].0, min_cos.clamp(-1.0, 1.0)));
        }
        i = j;
    }
    out
}

/// Pairwise weight of a unit-length edge at dihedral angle `theta` (radians).
pub fn crease_factor(theta: f64) -> f64 {
    (-CREASE_BETA * (1.0 - theta.cos())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn hinge(angle_deg: f64) -> LabeledMesh {
        // two triangles sharing edge (0, 1) along the x axis
        let a = angle_deg.to_radians();
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 1.0, 0.0),
            Point3::new(0.5, -a.cos(), a.sin()),
        ];
        LabeledMesh::new(v, vec![[0, 1, 2], [1, 0, 3]], None).unwrap()
    }

    #[test]
    fn single_class_votes_minimize_at_that_class() {
        let m = hinge(0.0);
        let mut t = VoteTable::zeros(4);
        t.counts[2][2] = 5;
        let e = build_energy(&m, &t, 1.0).unwrap();
        assert_eq!(e.unary_argmin()[2], 2);
        // unseen vertices are uniform
        assert!(e.unary[0].iter().all(|&u| (u - (17f64).ln()).abs() < 1e-12));
    }

    #[test]
    fn flat_edges_weigh_more_than_creases() {
        assert!(crease_factor(0.0) > crease_factor(std::f64::consts::FRAC_PI_2));
        let t = VoteTable::zeros(4);
        let flat = build_energy(&hinge(0.0), &t, 1.0).unwrap();
        let bent = build_energy(&hinge(90.0), &t, 1.0).unwrap();
        let shared = |e: &EnergyModel| e.edges.iter().position(|&x| x == (0, 1)).map(|i| e.pairwise[i]).unwrap();
        assert!(shared(&flat) > shared(&bent));
        let ratio = shared(&bent) / shared(&flat);
        assert!((ratio - (-5.0f64).exp()).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn unary_softmax_recovers_smoothed_frequencies() {
        let m = hinge(30.0);
        let mut t = VoteTable::zeros(4);
        t.counts[0] = [3, 0, 7, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 12];
        t.counts[3][9] = 1;
        let e = build_energy(&m, &t, 1.0).unwrap();
        for (v, row) in t.counts.iter().enumerate() {
            let z: f64 = e.unary[v].iter().map(|u| (-u).exp()).sum();
            let total: f64 = row.iter().map(|&c| c as f64).sum();
            for c in 0..NUM_CLASSES {
                let p = (-e.unary[v][c]).exp() / z;
                assert!((p - (row[c] as f64 + 1.0) / (total + 17.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(build_energy(&hinge(0.0), &VoteTable::zeros(3), 1.0), Err(Error::Argument(_))));
        assert!(EnergyModel::new(vec![[0.0; 17]; 2], vec![(0, 2)], vec![1.0], 1.0).is_err());
        assert!(EnergyModel::new(vec![[-1.0; 17]; 2], vec![], vec![], 1.0).is_err());
    }
}
