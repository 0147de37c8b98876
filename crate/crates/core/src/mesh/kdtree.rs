use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

/// Static 3-d tree over a point set, stored implicitly in a permuted index array.
#[derive(Clone, Debug)]
pub(crate) struct KdTree {
    points: Vec<Point3<f64>>,
    order: Vec<u32>,
    axes: Vec<u8>,
}

/// `(squared distance, index)` ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate(f64, u32);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub(crate) fn build(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axes = vec![0u8; points.len()];
        build_range(points, &mut order, &mut axes, 0);
        KdTree {
            points: points.to_vec(),
            order,
            axes,
        }
    }

    /// The `k` points nearest to point `query` (excluded), sorted by
    /// distance then index.
    pub(crate) fn nearest(&self, query: u32, k: usize) -> Vec<u32> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(0, self.order.len(), query, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| c.1).collect()
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        query: u32,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let q = &self.points[query as usize];
        let p = &self.points[idx as usize];
        if idx != query {
            let cand = Candidate((p - q).norm_squared(), idx);
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(cand);
            }
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, query, k, heap);
        let bound = heap.peek().map(|c| c.0).unwrap_or(f64::INFINITY);
        if heap.len() < k || diff * diff <= bound {
            self.search(far.0, far.1, query, k, heap);
        }
    }
}

fn build_range(points: &[Point3<f64>], order: &mut [u32], axes: &mut [u8], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    // Split on the axis of largest spread.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i as usize][a]);
            hi[a] = hi[a].max(points[i as usize][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(depth % 3);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build_range(points, left, left_axes, depth + 1);
    build_range(points, &mut rest[1..], &mut rest_axes[1..], depth + 1);
}
