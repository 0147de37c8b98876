use std::path::{Path, PathBuf};

use super::ViewSegmentation;
use crate::error::{Error, Result};
use crate::render::Camera;
use crate::NUM_TEETH;

pub fn label_png_path(dir: &Path, view_id: u32) -> PathBuf {
    dir.join(format!("view_{view_id}_labels.png"))
}

/// Reads `view_<id>_labels.png` (8-bit grayscale, value = class index) for
/// every camera.
pub fn file_segment(dir: &Path, views: &[Camera]) -> Result<Vec<ViewSegmentation>> {
    views
        .iter()
        .map(|cam| {
            let path = label_png_path(dir, cam.view_id);
            let reader = image::ImageReader::open(&path).map_err(|e| Error::io(&path, e))?;
            let img = reader
                .decode()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let image::DynamicImage::ImageLuma8(gray) = img else {
                return Err(Error::Format(format!(
                    "{}: expected 8-bit grayscale, found {:?}",
                    path.display(),
                    img.color()
                )));
            };
            if (gray.width(), gray.height()) != cam.image_size {
                return Err(Error::Format(format!(
                    "{}: {}x{} image for a {}x{} view",
                    path.display(),
                    gray.width(),
                    gray.height(),
                    cam.image_size.0,
                    cam.image_size.1
                )));
            }
            if let Some(bad) = gray.as_raw().iter().find(|&&v| v as usize > NUM_TEETH) {
                return Err(Error::Format(format!(
                    "{}: pixel value {bad} is not a class index",
                    path.display()
                )));
            }
            ViewSegmentation::new(
                cam.view_id,
                gray.width() as usize,
                gray.height() as usize,
                gray.into_raw(),
            )
        })
        .collect()
}

/// Writes each label map as `view_<id>_labels.png`.
pub fn write_label_pngs(dir: &Path, segs: &[ViewSegmentation]) -> Result<()> {
    for s in segs {
        let path = label_png_path(dir, s.view_id);
        image::GrayImage::from_raw(s.width as u32, s.height as u32, s.label_map.clone())
            .ok_or_else(|| Error::Format(format!("view {}: label map size", s.view_id)))?
            .save(&path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::make_view_set;

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let cams = make_view_set(1, (8, 8)).unwrap();
        assert!(matches!(file_segment(dir.path(), &cams), Err(Error::Io { .. })));
    }

    #[test]
    fn out_of_range_class_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cams = make_view_set(1, (4, 4)).unwrap();
        let mut px = vec![0u8; 16];
        px[5] = 17;
        image::GrayImage::from_raw(4, 4, px).unwrap().save(label_png_path(dir.path(), 0)).unwrap();
        assert!(matches!(file_segment(dir.path(), &cams), Err(Error::Format(_))));
    }

    #[test]
    fn rgb_or_wrong_size_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cams = make_view_set(1, (4, 4)).unwrap();
        image::RgbImage::new(4, 4).save(label_png_path(dir.path(), 0)).unwrap();
        assert!(matches!(file_segment(dir.path(), &cams), Err(Error::Format(_))));
        image::GrayImage::new(5, 4).save(label_png_path(dir.path(), 0)).unwrap();
        assert!(matches!(file_segment(dir.path(), &cams), Err(Error::Format(_))));
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cams = make_view_set(2, (5, 3)).unwrap();
        let segs: Vec<_> = cams
            .iter()
            .map(|c| {
                let map = (0..15).map(|i| ((i * 7 + c.view_id as usize) % 17) as u8).collect();
                ViewSegmentation::new(c.view_id, 5, 3, map).unwrap()
            })
            .collect();
        write_label_pngs(dir.path(), &segs).unwrap();
        assert_eq!(file_segment(dir.path(), &cams).unwrap(), segs);
    }
}
