//! Edge adjacency and spatial neighborhoods over mesh vertices.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::LabeledMesh;
use crate::error::{Error, Result};

/// How a vertex neighborhood of size/radius `k` is defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodKind {
    /// The `k` Euclidean nearest vertices.
    #[default]
    Knn,
    /// All vertices within `k` edge hops.
    KHop,
}

#[derive(Clone, Debug)]
pub struct AdjacencyIndex {
    neighbors: Vec<Vec<u32>>,
    tree: KdTree,
}

impl AdjacencyIndex {
    pub fn from_mesh(mesh: &LabeledMesh) -> Self {
        let mut neighbors = vec![Vec::new(); mesh.vertex_count()];
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                neighbors[a as usize].push(b);
                neighbors[b as usize].push(a);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        AdjacencyIndex {
            neighbors,
            tree: KdTree::build(mesh.vertices()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Edge-connected neighbors of `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[v]
    }

    /// Undirected mesh edges `(u, w)` with `u < w`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(u, ns)| {
            ns.iter()
                .filter(move |&&w| (w as usize) > u)
                .map(move |&w| (u as u32, w))
        })
    }

    /// The `k` Euclidean nearest vertices to `v`, excluding `v`, ties broken
    /// by lower index. Sorted by distance.
    pub fn k_neighborhood(&self, v: usize, k: usize) -> Result<Vec<u32>> {
        self.check(v, k)?;
        if k >= self.vertex_count() {
            return Err(Error::Argument(format!(
                "k = {k} must be below the vertex count {}",
                self.vertex_count()
            )));
        }
        Ok(self.tree.nearest(v as u32, k))
    }

    /// Vertices reachable from `v` in at most `k` edge hops, excluding `v`, ascending.
    pub fn k_hop(&self, v: usize, k: usize) -> Result<Vec<u32>> {
        self.check(v, k)?;
        let mut dist = std::collections::HashMap::new();
        dist.insert(v as u32, 0usize);
        let mut queue = VecDeque::from([v as u32]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d == k {
                continue;
            }
            for &w in &self.neighbors[u as usize] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        let mut out: Vec<u32> = dist.into_keys().filter(|&u| u != v as u32).collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn neighborhood(&self, v: usize, k: usize, kind: NeighborhoodKind) -> Result<Vec<u32>> {
        match kind {
            NeighborhoodKind::Knn => self.k_neighborhood(v, k),
            NeighborhoodKind::KHop => self.k_hop(v, k),
        }
    }

    /// Neighborhoods of every vertex, computed in parallel.
    pub fn all_neighborhoods(&self, k: usize, kind: NeighborhoodKind) -> Result<Vec<Vec<u32>>> {
        (0..self.vertex_count())
            .into_par_iter()
            .map(|v| self.neighborhood(v, k, kind))
            .collect()
    }

    fn check(&self, v: usize, k: usize) -> Result<()> {
        if v >= self.vertex_count() {
            return Err(Error::Argument(format!("vertex {v} out of range")));
        }
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use proptest::prelude::*;

    fn points_mesh(points: Vec<Point3<f64>>) -> LabeledMesh {
        LabeledMesh::new(points, vec![], None).unwrap()
    }

    fn grid_mesh(n: usize) -> LabeledMesh {
        let mut v = Vec::new();
        for y in 0..n {
            for x in 0..n {
                v.push(Point3::new(x as f64, y as f64, 0.0));
            }
        }
        let mut f = Vec::new();
        for y in 0..n - 1 {
            for x in 0..n - 1 {
                let i = (y * n + x) as u32;
                let n = n as u32;
                f.push([i, i + 1, i + n + 1]);
                f.push([i, i + n + 1, i + n]);
            }
        }
        LabeledMesh::new(v, f, None).unwrap()
    }

    fn brute_knn(points: &[Point3<f64>], v: usize, k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = points
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != v)
            .map(|(i, p)| ((p - points[v]).norm_squared(), i as u32))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn collinear_middle() {
        let m = points_mesh(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ]);
        let idx = AdjacencyIndex::from_mesh(&m);
        let mut got = idx.k_neighborhood(1, 2).unwrap();
        got.sort();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn two_points() {
        let m = points_mesh(vec![Point3::origin(), Point3::new(0.0, 0.0, 1.0)]);
        let idx = AdjacencyIndex::from_mesh(&m);
        assert_eq!(idx.k_neighborhood(0, 1).unwrap(), vec![1]);
        assert!(matches!(idx.k_neighborhood(0, 2), Err(Error::Argument(_))));
        assert!(matches!(idx.k_neighborhood(0, 0), Err(Error::Argument(_))));
        assert!(matches!(idx.k_neighborhood(2, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn grid_knn_matches_exhaustive_scan() {
        // regular grid: many equal distances, so the tie-break matters
        let m = grid_mesh(10);
        let idx = AdjacencyIndex::from_mesh(&m);
        for v in 0..m.vertex_count() {
            assert_eq!(idx.k_neighborhood(v, 10).unwrap(), brute_knn(m.vertices(), v, 10));
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_hops_grow() {
        let m = grid_mesh(6);
        let idx = AdjacencyIndex::from_mesh(&m);
        for u in 0..idx.vertex_count() {
            for &w in idx.neighbors(u) {
                assert!(idx.neighbors(w as usize).contains(&(u as u32)));
            }
        }
        assert_eq!(idx.k_hop(0, 1).unwrap(), idx.neighbors(0).to_vec());
        let two = idx.k_hop(14, 2).unwrap();
        assert!(idx.k_hop(14, 1).unwrap().iter().all(|v| two.contains(v)));
        assert!(!two.contains(&14));
        let edges: Vec<_> = idx.edges().collect();
        // 6x6 grid: 2*6*5 axis edges + 25 diagonals
        assert_eq!(edges.len(), 85);
    }

    proptest! {
        #[test]
        fn knn_matches_brute_force(
            pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..80),
            k in 1usize..12,
        ) {
            let points: Vec<_> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let k = k.min(points.len() - 1);
            let idx = AdjacencyIndex::from_mesh(&points_mesh(points.clone()));
            for v in 0..points.len() {
                let got = idx.k_neighborhood(v, k).unwrap();
                prop_assert_eq!(got.len(), k);
                prop_assert!(!got.contains(&(v as u32)));
                prop_assert_eq!(got, brute_knn(&points, v, k));
            }
        }
    }
}
