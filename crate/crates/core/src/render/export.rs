//! On-disk formats for rendered views.
//!
//! Per view `<id>` in a directory:
//! - `view_<id>.png`: 8-bit RGB image
//! - `view_<id>_face_id.raw`: little-endian `u32`, [`EMPTY`](super::EMPTY) for background
//! - `view_<id>_bary.raw`: little-endian `f32`, 3 per pixel
//! - `view_<id>_depth.raw`: little-endian `f32`
//! - `view_<id>_mask_<c>.png`: optional 8-bit grayscale mask per tooth channel
//!
//! Every `.raw` file has a `.json` sidecar `{"width","height","dtype","channels"}`.
//! Cameras are stored together in `cameras.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Camera, MaskMap, RenderOutput};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

pub fn view_png_path(dir: &Path, view_id: u32) -> PathBuf {
    dir.join(format!("view_{view_id}.png"))
}

fn buffer_path(dir: &Path, view_id: u32, name: &str) -> PathBuf {
    dir.join(format!("view_{view_id}_{name}.raw"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a raw little-endian buffer plus its JSON sidecar.
pub fn write_raw<T: Copy>(
    path: &Path,
    data: &[T],
    sidecar: &RawSidecar,
    to_le: impl Fn(T) -> [u8; 4],
) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &x in data {
        bytes.extend_from_slice(&to_le(x));
    }
    write_file(path, &bytes)?;
    let json = serde_json::to_string(sidecar).expect("sidecar serializes");
    write_file(&path.with_extension("json"), json.as_bytes())
}

/// Reads a raw buffer, checking it against its sidecar and the expected dtype.
pub fn read_raw<T>(
    path: &Path,
    dtype: &str,
    from_le: impl Fn([u8; 4]) -> T,
) -> Result<(Vec<T>, RawSidecar)> {
    let side_path = path.with_extension("json");
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: RawSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", side_path.display())))?;
    if sidecar.dtype != dtype {
        return Err(Error::Format(format!(
            "{}: dtype {} where {dtype} was expected",
            path.display(),
            sidecar.dtype
        )));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = sidecar.width * sidecar.height * sidecar.channels * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| from_le([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((data, sidecar))
}

fn sidecar(out: &RenderOutput, dtype: &str, channels: usize) -> RawSidecar {
    RawSidecar {
        width: out.width,
        height: out.height,
        dtype: dtype.into(),
        channels,
    }
}

pub fn write_rgb_png(path: &Path, out: &RenderOutput) -> Result<()> {
    let img = image::RgbImage::from_raw(out.width as u32, out.height as u32, out.rgb8())
        .expect("buffer matches dimensions");
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes the RGB image and all visibility buffers of one view.
pub fn write_view(dir: &Path, out: &RenderOutput) -> Result<()> {
    let id = out.view_id;
    write_rgb_png(&view_png_path(dir, id), out)?;
    write_raw(
        &buffer_path(dir, id, "face_id"),
        &out.face_id,
        &sidecar(out, "u32", 1),
        u32::to_le_bytes,
    )?;
    let bary: Vec<f32> = out.bary.iter().flatten().copied().collect();
    write_raw(
        &buffer_path(dir, id, "bary"),
        &bary,
        &sidecar(out, "f32", 3),
        f32::to_le_bytes,
    )?;
    write_raw(
        &buffer_path(dir, id, "depth"),
        &out.depth,
        &sidecar(out, "f32", 1),
        f32::to_le_bytes,
    )
}

/// Reads back a view written by [`write_view`].
pub fn read_view(dir: &Path, view_id: u32) -> Result<RenderOutput> {
    let (face_id, side) = read_raw(&buffer_path(dir, view_id, "face_id"), "u32", u32::from_le_bytes)?;
    let (bary_flat, bside) = read_raw(&buffer_path(dir, view_id, "bary"), "f32", f32::from_le_bytes)?;
    let (depth, dside) = read_raw(&buffer_path(dir, view_id, "depth"), "f32", f32::from_le_bytes)?;
    let dims = (side.width, side.height);
    if (bside.width, bside.height) != dims || (dside.width, dside.height) != dims || bside.channels != 3 {
        return Err(Error::Format(format!("view {view_id}: buffer dimensions disagree")));
    }
    let png = view_png_path(dir, view_id);
    let rgb = image::open(&png)
        .map_err(|e| Error::Format(format!("{}: {e}", png.display())))?
        .to_rgb8();
    if (rgb.width() as usize, rgb.height() as usize) != dims {
        return Err(Error::Format(format!("{}: size disagrees with buffers", png.display())));
    }
    Ok(RenderOutput {
        view_id,
        width: side.width,
        height: side.height,
        rgb: rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
        face_id,
        bary: bary_flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        depth,
    })
}

pub fn write_cameras(dir: &Path, cameras: &[Camera]) -> Result<()> {
    let path = dir.join("cameras.json");
    let json = serde_json::to_string_pretty(cameras).expect("cameras serialize");
    write_file(&path, json.as_bytes())
}

pub fn read_cameras(dir: &Path) -> Result<Vec<Camera>> {
    let path = dir.join("cameras.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes 16 grayscale PNGs `view_<id>_mask_<c>.png`, `c` in `1..=16`.
pub fn write_mask_map(dir: &Path, view_id: u32, mask: &MaskMap) -> Result<()> {
    for c in 0..crate::NUM_TEETH {
        let bytes: Vec<u8> = mask
            .channel(c)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let path = dir.join(format!("view_{view_id}_mask_{}.png", c + 1));
        image::GrayImage::from_raw(mask.width as u32, mask.height as u32, bytes)
            .expect("buffer matches dimensions")
            .save(&path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
