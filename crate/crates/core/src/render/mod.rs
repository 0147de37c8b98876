//! Software rasterization of meshes into RGB images, visibility buffers and
//! per-tooth mask maps.

pub mod camera;
pub mod export;
pub mod raster;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::LabeledMesh;
use crate::NUM_TEETH;

pub use camera::{make_view_set, make_view_set_with, Camera, ProjectionKind, ViewSetOptions};

/// Sentinel face id for pixels that no triangle covers.
pub const EMPTY: u32 = u32::MAX;

const BASE_COLOR: [f32; 3] = [0.93, 0.89, 0.82];
const AMBIENT: f32 = 0.15;

/// Per-view rasterization result. Buffers are row-major, `height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub view_id: u32,
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB in `[0, 1]`.
    pub rgb: Vec<f32>,
    /// Visible face per pixel or [`EMPTY`].
    pub face_id: Vec<u32>,
    /// Barycentric weights of the visible face's corners; zero where empty.
    pub bary: Vec<[f32; 3]>,
    /// Normalized device depth (smaller is nearer); `+inf` where empty.
    pub depth: Vec<f32>,
}

impl RenderOutput {
    pub fn empty(view_id: u32, width: usize, height: usize) -> Self {
        let n = width * height;
        RenderOutput {
            view_id,
            width,
            height,
            rgb: vec![0.0; 3 * n],
            face_id: vec![EMPTY; n],
            bary: vec![[0.0; 3]; n],
            depth: vec![f32::INFINITY; n],
        }
    }

    pub fn covered_pixels(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != EMPTY).count()
    }

    /// RGB as 8-bit bytes.
    pub fn rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .map(|&c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Z-buffered flat-shaded rendering of `mesh` from `camera`. Back faces are
/// not culled; the light sits at the camera.
pub fn render(mesh: &LabeledMesh, camera: &Camera) -> RenderOutput {
    let (w, h) = (camera.width(), camera.height());
    let mut out = RenderOutput::empty(camera.view_id, w, h);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let screen: Vec<[f64; 3]> = mesh.vertices().iter().map(|p| camera.project(p)).collect();

    for (fi, face) in mesh.faces().iter().enumerate() {
        let tri = face.map(|v| screen[v as usize]);
        let mut shade = None;
        raster::rasterize_triangle(tri, w, h, |frag| {
            let px = frag.y * w + frag.x;
            if frag.depth < zbuf[px] {
                zbuf[px] = frag.depth;
                out.face_id[px] = fi as u32;
                out.bary[px] = frag.bary.map(|b| b as f32);
                let s = *shade.get_or_insert_with(|| {
                    let lambert = mesh.face_normal(fi).dot(&camera.eye_direction).abs() as f32;
                    AMBIENT + (1.0 - AMBIENT) * lambert
                });
                for (dst, base) in out.rgb[3 * px..3 * px + 3].iter_mut().zip(BASE_COLOR) {
                    *dst = base * s;
                }
            }
        });
    }
    for (d, z) in out.depth.iter_mut().zip(&zbuf) {
        *d = *z as f32;
    }
    out
}

/// Renders every camera in parallel.
pub fn render_views(mesh: &LabeledMesh, cameras: &[Camera]) -> Vec<RenderOutput> {
    cameras.par_iter().map(|c| render(mesh, c)).collect()
}

/// Corner of the visible face with the largest barycentric weight at pixel
/// `(u, v)` (column, row); ties go to the lowest vertex index.
pub fn pixel_vertex(
    output: &RenderOutput,
    mesh: &LabeledMesh,
    pixel: (usize, usize),
) -> Result<Option<u32>> {
    let (u, v) = pixel;
    if u >= output.width || v >= output.height {
        return Err(Error::Argument(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            output.width, output.height
        )));
    }
    let px = v * output.width + u;
    let f = output.face_id[px];
    if f == EMPTY {
        return Ok(None);
    }
    let face = mesh
        .faces()
        .get(f as usize)
        .ok_or_else(|| Error::Argument(format!("face id {f} not in mesh")))?;
    Ok(Some(dominant_corner(face, &output.bary[px])))
}

#[inline]
pub(crate) fn dominant_corner(face: &[u32; 3], bary: &[f32; 3]) -> u32 {
    let mut best = 0;
    for k in 1..3 {
        if bary[k] > bary[best] || (bary[k] == bary[best] && face[k] < face[best]) {
            best = k;
        }
    }
    face[best]
}

/// Per-pixel vertex attribution for a whole view.
pub fn pixel_vertices(output: &RenderOutput, mesh: &LabeledMesh) -> Result<Vec<Option<u32>>> {
    output
        .face_id
        .iter()
        .zip(&output.bary)
        .map(|(&f, b)| {
            if f == EMPTY {
                return Ok(None);
            }
            let face = mesh
                .faces()
                .get(f as usize)
                .ok_or_else(|| Error::Argument(format!("face id {f} not in mesh")))?;
            Ok(Some(dominant_corner(face, b)))
        })
        .collect()
}

/// Per-tooth binary masks of one view: 16 channels of `height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMap {
    pub width: usize,
    pub height: usize,
    /// Channel-major: `data[c * width * height + y * width + x]`.
    pub data: Vec<f32>,
}

impl MaskMap {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Renders the tooth mask map: channel `c` is 1 where the visible vertex
/// carries label `c + 1`.
pub fn render_mask_map(mesh: &LabeledMesh, camera: &Camera) -> Result<MaskMap> {
    let out = render(mesh, camera);
    mask_map_from_render(mesh, &out)
}

pub fn mask_map_from_render(mesh: &LabeledMesh, out: &RenderOutput) -> Result<MaskMap> {
    let labels = mesh.require_labels()?;
    let n = out.width * out.height;
    let mut data = vec![0.0f32; NUM_TEETH * n];
    for (px, v) in pixel_vertices(out, mesh)?.into_iter().enumerate() {
        if let Some(v) = v {
            let l = labels[v as usize] as usize;
            if l > 0 {
                data[(l - 1) * n + px] = 1.0;
            }
        }
    }
    Ok(MaskMap {
        width: out.width,
        height: out.height,
        data,
    })
}

/// Screen-space position of every vertex; used to predict which pixel a
/// vertex lands on.
pub fn project_vertices(mesh: &LabeledMesh, camera: &Camera) -> Vec<[f64; 3]> {
    mesh.vertices().iter().map(|p| camera.project(p)).collect()
}
