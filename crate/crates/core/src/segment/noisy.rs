use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ViewSegmentation;
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Distinct labels of `map` inside the `(2r+1)²` window around `(x, y)`,
/// clipped to the image, ascending.
fn window_labels(map: &[u8], w: usize, h: usize, x: usize, y: usize, r: usize, out: &mut Vec<u8>) {
    let mut seen = [false; NUM_CLASSES];
    for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
            seen[map[yy * w + xx] as usize] = true;
        }
    }
    out.clear();
    out.extend((0..NUM_CLASSES as u8).filter(|&l| seen[l as usize]));
}

fn corrupt(seg: &ViewSegmentation, radius: usize, flip_rate: f64, seed: u64) -> ViewSegmentation {
    let (w, h) = (seg.width, seg.height);
    let src = &seg.label_map;
    let mut out = src.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(seg.view_id),
    );
    let flip_radius = radius.max(1);
    let mut band = Vec::with_capacity(NUM_CLASSES);
    let mut flip = Vec::with_capacity(NUM_CLASSES);
    for y in 0..h {
        for x in 0..w {
            // fixed number of draws per pixel keeps outcomes coupled across flip rates
            let redraw: f64 = rng.random();
            let coin: f64 = rng.random();
            let pick: f64 = rng.random();
            let px = y * w + x;
            if radius > 0 {
                window_labels(src, w, h, x, y, radius, &mut band);
                if band.len() > 1 {
                    out[px] = band[((redraw * band.len() as f64) as usize).min(band.len() - 1)];
                }
            }
            if coin < flip_rate {
                window_labels(src, w, h, x, y, flip_radius, &mut flip);
                flip.retain(|&l| l != src[px]);
                if !flip.is_empty() {
                    out[px] = flip[((pick * flip.len() as f64) as usize).min(flip.len() - 1)];
                }
            }
        }
    }
    let noisy = ViewSegmentation {
        view_id: seg.view_id,
        width: w,
        height: h,
        label_map: out,
        instances: None,
    };
    if seg.instances.is_some() {
        noisy.with_instances_from_labels()
    } else {
        noisy
    }
}

/// Boundary-localized label noise. Pixels whose `(2r+1)²` window holds more
/// than one label are redrawn uniformly from the labels in that window; then
/// every pixel independently, with probability `flip_rate`, flips to a random
/// other label from its window (radius at least 1), if there is one.
/// Deterministic in `seed`.
pub fn noisy_segment(
    base: &[ViewSegmentation],
    boundary_radius: usize,
    flip_rate: f64,
    seed: u64,
) -> Result<Vec<ViewSegmentation>> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::Argument(format!("flip rate {flip_rate} outside [0, 1]")));
    }
    Ok(base
        .par_iter()
        .map(|s| corrupt(s, boundary_radius, flip_rate, seed))
        .collect())
}
