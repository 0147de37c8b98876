//! Half-space triangle rasterization with a top-left fill rule.

/// Twice the signed area of `(a, b, p)`; positive when `p` lies left of `a → b`
/// in a y-down raster with counter-clockwise-on-screen winding normalized away.
#[inline]
pub fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

#[inline]
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// A covered pixel with barycentric weights for the triangle's corners in
/// their original order, and the interpolated depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub x: usize,
    pub y: usize,
    pub bary: [f64; 3],
    pub depth: f64,
}

/// Calls `emit` for every pixel whose center `(x + 0.5, y + 0.5)` lies
/// inside the screen-space triangle `tri` (`[x, y, depth]` per corner).
/// Zero-area triangles produce nothing.
pub fn rasterize_triangle(
    tri: [[f64; 3]; 3],
    width: usize,
    height: usize,
    mut emit: impl FnMut(Fragment),
) {
    let p = tri.map(|v| [v[0], v[1]]);
    let area = edge(p[0], p[1], p[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    // Orient positively; `perm` maps oriented corners back to the originals.
    let perm = if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
    let q = perm.map(|i| p[i]);
    let area = area.abs();

    let min_x = q.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let max_x = q.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = q.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let max_y = q.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let edges = [(q[1], q[2]), (q[2], q[0]), (q[0], q[1])];
    let owned = edges.map(|(a, b)| owns_edge(a, b));

    for y in y0 as usize..=y1 as usize {
        let cy = y as f64 + 0.5;
        for x in x0 as usize..=x1 as usize {
            let c = [x as f64 + 0.5, cy];
            let mut w = [0.0; 3];
            let mut inside = true;
            for k in 0..3 {
                w[k] = edge(edges[k].0, edges[k].1, c);
                if w[k] < 0.0 || (w[k] == 0.0 && !owned[k]) {
                    inside = false;
                    break;
                }
            }
            if !inside {
                continue;
            }
            let mut bary = [0.0; 3];
            for k in 0..3 {
                bary[perm[k]] = w[k] / area;
            }
            let depth = bary[0] * tri[0][2] + bary[1] * tri[1][2] + bary[2] * tri[2][2];
            emit(Fragment { x, y, bary, depth });
        }
    }
}
