//! Inverse-mapping resampler for rigid transforms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HistairError, Result};
use crate::estimate::{rotate, RigidTransform};
use crate::raster::GrayImage;

/// Sample positions this close outside the pixel grid snap onto its edge.
const EDGE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub interpolation: Interpolation,
    pub fill_value: u8,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Bilinear,
            fill_value: 0,
        }
    }
}

/// `t⁻¹` with `θ' = −θ` and `(dx', dy') = −R(−θ)·(dx, dy)`, same center.
pub fn invert(t: &RigidTransform) -> RigidTransform {
    let (ix, iy) = rotate(-t.theta_deg, (t.dx, t.dy));
    RigidTransform::new(-t.theta_deg, -ix, -iy, t.center)
}

/// Samples `img` at a real position, `None` outside the image.
#[inline]
pub fn sample(img: &GrayImage, x: f64, y: f64, interpolation: Interpolation) -> Option<f64> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(x >= -EDGE_SLACK
        && y >= -EDGE_SLACK
        && x <= w - 1.0 + EDGE_SLACK
        && y <= h - 1.0 + EDGE_SLACK)
    {
        return None;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    match interpolation {
        Interpolation::Nearest => Some(img.get(x.round() as usize, y.round() as usize) as f64),
        Interpolation::Bilinear => {
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let x1 = (x0 + 1).min(img.width() - 1);
            let y1 = (y0 + 1).min(img.height() - 1);
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            Some(top * (1.0 - fy) + bottom * fy)
        }
    }
}

/// For every output pixel `p`, samples `moving` at `t(p)`; positions outside
/// `moving` take `cfg.fill_value`.
pub fn apply_transform(
    moving: &GrayImage,
    t: &RigidTransform,
    out_dims: (usize, usize),
    cfg: &ResampleConfig,
) -> Result<GrayImage> {
    if !t.is_finite() {
        return Err(HistairError::InvalidConfig(format!(
            "non-finite transform {t:?}"
        )));
    }
    let (w, h) = out_dims;
    let mut out = vec![cfg.fill_value; w * h];
    out.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let (sx, sy) = t.apply((x as f64, y as f64));
                if let Some(v) = sample(moving, sx, sy, cfg.interpolation) {
                    *o = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        });
    GrayImage::new(w, h, out)
}

/// Boolean mask of output pixels whose sample position `t(p)` lies inside an
/// image of `src_dims`.
pub fn valid_mask(
    t: &RigidTransform,
    src_dims: (usize, usize),
    out_dims: (usize, usize),
) -> Vec<bool> {
    let (sw, sh) = (src_dims.0 as f64, src_dims.1 as f64);
    let mut mask = Vec::with_capacity(out_dims.0 * out_dims.1);
    for y in 0..out_dims.1 {
        for x in 0..out_dims.0 {
            let (sx, sy) = t.apply((x as f64, y as f64));
            mask.push(
                sx >= -EDGE_SLACK
                    && sy >= -EDGE_SLACK
                    && sx <= sw - 1.0 + EDGE_SLACK
                    && sy <= sh - 1.0 + EDGE_SLACK,
            );
        }
    }
    mask
}
