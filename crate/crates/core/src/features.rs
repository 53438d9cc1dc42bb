//! Morphological descriptors of extracted regions: area, boundary perimeter,
//! inertia axis ratio, box-counting fractal dimension, centroid and
//! orientation.

use serde::{Deserialize, Serialize};

/// Relative eigenvalue gap below which a region counts as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-12;

/// Per-axis variance of a unit pixel treated as a uniform square.
const PIXEL_EXTENT_VARIANCE: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatures {
    pub area: f64,
    pub perimeter: f64,
    pub axis_ratio: f64,
    pub fractal_dim: f64,
    pub centroid: (f64, f64),
    /// Major-axis direction in degrees, counter-clockwise on screen, in (-90, 90].
    pub orientation_deg: f64,
    /// Inertia eigenvalues coincide; `orientation_deg` is then 0 and meaningless.
    pub isotropic: bool,
}

#[derive(Debug, Clone, Copy)]
struct BoundingBox {
    x0: u32,
    y0: u32,
    width: usize,
    height: usize,
}

fn bounding_box(pixels: &[(u32, u32)]) -> BoundingBox {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    BoundingBox {
        x0,
        y0,
        width: (x1 - x0) as usize + 1,
        height: (y1 - y0) as usize + 1,
    }
}

pub fn compute_area(pixels: &[(u32, u32)]) -> usize {
    pixels.len()
}

/// Number of member pixels with at least one 4-neighbour outside the region.
pub fn compute_perimeter(pixels: &[(u32, u32)]) -> usize {
    if pixels.is_empty() {
        return 0;
    }
    let bb = bounding_box(pixels);
    // one pixel of padding on every side
    let pw = bb.width + 2;
    let mut mask = vec![false; pw * (bb.height + 2)];
    let idx = |x: u32, y: u32| (y - bb.y0 + 1) as usize * pw + (x - bb.x0 + 1) as usize;
    for &(x, y) in pixels {
        mask[idx(x, y)] = true;
    }
    pixels
        .iter()
        .filter(|&&(x, y)| {
            let i = idx(x, y);
            !(mask[i - 1] && mask[i + 1] && mask[i - pw] && mask[i + pw])
        })
        .count()
}

pub fn compute_centroid(pixels: &[(u32, u32)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (sx, sy) = pixels.iter().fold((0u64, 0u64), |(sx, sy), &(x, y)| {
        (sx + x as u64, sy + y as u64)
    });
    (sx as f64 / n, sy as f64 / n)
}

/// Regularized 2x2 inertia (covariance) matrix `[[cxx, cxy], [cxy, cyy]]`.
///
/// Central moments are accumulated as exact integers (`n·Σx² − (Σx)²`), so the
/// result is bit-for-bit invariant under integer translation.
pub fn inertia_matrix(pixels: &[(u32, u32)]) -> [[f64; 2]; 2] {
    let n = pixels.len() as i128;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for &(x, y) in pixels {
        let (x, y) = (x as i128, y as i128);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n2 = (n * n) as f64;
    let cxx = (n * sxx - sx * sx) as f64 / n2 + PIXEL_EXTENT_VARIANCE;
    let cyy = (n * syy - sy * sy) as f64 / n2 + PIXEL_EXTENT_VARIANCE;
    let cxy = (n * sxy - sx * sy) as f64 / n2;
    [[cxx, cxy], [cxy, cyy]]
}

/// Wraps an angle in degrees into (-90, 90].
pub fn wrap_half_turn(deg: f64) -> f64 {
    let mut a = deg.rem_euclid(180.0);
    if a > 90.0 {
        a -= 180.0;
    }
    a
}

/// Returns `(axis_ratio, orientation_deg, isotropic)`.
pub fn compute_axis_ratio_and_orientation(pixels: &[(u32, u32)]) -> (f64, f64, bool) {
    let [[cxx, cxy], [_, cyy]] = inertia_matrix(pixels);
    let half_trace = 0.5 * (cxx + cyy);
    let half_diff = 0.5 * (cxx - cyy);
    let radius = (half_diff * half_diff + cxy * cxy).sqrt();
    let l1 = half_trace + radius;
    let l2 = half_trace - radius;
    let ratio = (l1 / l2).sqrt();
    if l1 - l2 <= ISOTROPY_TOLERANCE * l1 {
        return (ratio, 0.0, true);
    }
    // y grows downward; negate so positive angles turn counter-clockwise on screen
    let image_angle = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    (ratio, wrap_half_turn(-image_angle.to_degrees()), false)
}

/// Box-counting dimension with a grid anchored at the bounding-box corner and
/// box sides 1, 2, 4, ... up to half the larger bounding-box side.
pub fn compute_fractal_dimension(pixels: &[(u32, u32)]) -> f64 {
    if pixels.is_empty() {
        return 1.0;
    }
    let bb = bounding_box(pixels);
    if bb.width < 2 || bb.height < 2 {
        return 1.0;
    }
    let longest = bb.width.max(bb.height);
    let mut samples = Vec::new();
    let mut size = 1usize;
    while 2 * size <= longest {
        let gw = bb.width.div_ceil(size);
        let gh = bb.height.div_ceil(size);
        let mut occupied = vec![false; gw * gh];
        for &(x, y) in pixels {
            let cx = (x - bb.x0) as usize / size;
            let cy = (y - bb.y0) as usize / size;
            occupied[cy * gw + cx] = true;
        }
        let count = occupied.iter().filter(|&&o| o).count();
        samples.push(((1.0 / size as f64).ln(), (count as f64).ln()));
        size *= 2;
    }
    let slope = match samples.len() {
        0 | 1 => return 1.0,
        2 => (samples[1].1 - samples[0].1) / (samples[1].0 - samples[0].0),
        _ => least_squares_slope(&samples),
    };
    slope.clamp(1.0, 2.0)
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn compute_features(pixels: &[(u32, u32)]) -> RegionFeatures {
    let (axis_ratio, orientation_deg, isotropic) = compute_axis_ratio_and_orientation(pixels);
    RegionFeatures {
        area: compute_area(pixels) as f64,
        perimeter: compute_perimeter(pixels) as f64,
        axis_ratio,
        fractal_dim: compute_fractal_dimension(pixels),
        centroid: compute_centroid(pixels),
        orientation_deg,
        isotropic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: u32, y0: u32, w: u32, h: u32) -> Vec<(u32, u32)> {
        let mut v = Vec::new();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                v.push((x, y));
            }
        }
        v
    }

    #[test]
    fn area_examples() {
        assert_eq!(compute_area(&rect(0, 0, 3, 3)), 9);
        assert_eq!(compute_area(&[(4, 4)]), 1);
        assert_eq!(compute_area(&rect(2, 5, 10, 4)), 40);
    }

    #[test]
    fn perimeter_examples() {
        assert_eq!(compute_perimeter(&rect(0, 0, 3, 3)), 8);
        assert_eq!(compute_perimeter(&rect(0, 0, 1, 5)), 5);
        assert_eq!(compute_perimeter(&rect(7, 3, 5, 5)), 16);
    }

    #[test]
    fn perimeter_with_hole() {
        let mut ring = rect(0, 0, 5, 5);
        ring.retain(|&p| p != (2, 2));
        // the four pixels around the hole become boundary too
        assert_eq!(compute_perimeter(&ring), 20);
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(compute_centroid(&rect(0, 0, 3, 3)), (1.0, 1.0));
        assert_eq!(compute_centroid(&[(0, 0), (2, 0)]), (1.0, 0.0));
    }

    #[test]
    fn square_is_isotropic() {
        let (ratio, orient, iso) = compute_axis_ratio_and_orientation(&rect(3, 3, 6, 6));
        assert!((ratio - 1.0).abs() < 1e-9);
        assert_eq!(orient, 0.0);
        assert!(iso);
    }

    #[test]
    fn line_orientations() {
        let (rh, oh, ih) = compute_axis_ratio_and_orientation(&rect(0, 0, 9, 1));
        let (rv, ov, iv) = compute_axis_ratio_and_orientation(&rect(0, 0, 1, 9));
        // var_x = 80/12 + 1/12, var_y = 1/12
        assert!((rh - 9.0).abs() < 1e-9);
        assert_eq!(rh, rv);
        assert_eq!(oh, 0.0);
        assert_eq!(ov, 90.0);
        assert!(!ih && !iv);
    }

    #[test]
    fn rising_diagonal_is_positive() {
        // up-right on screen: x grows while y shrinks
        let diag: Vec<(u32, u32)> = (0..10).map(|k| (k, 9 - k)).collect();
        let (_, o, _) = compute_axis_ratio_and_orientation(&diag);
        assert!((o - 45.0).abs() < 1e-9, "{o}");
    }

    #[test]
    fn fractal_dimension_examples() {
        assert!((compute_fractal_dimension(&rect(0, 0, 64, 64)) - 2.0).abs() < 0.1);
        let diag: Vec<(u32, u32)> = (0..64).map(|k| (k, k)).collect();
        assert!((compute_fractal_dimension(&diag) - 1.0).abs() < 0.1);
        assert_eq!(compute_fractal_dimension(&rect(0, 0, 64, 1)), 1.0);
        assert_eq!(compute_fractal_dimension(&[(5, 5)]), 1.0);
        assert_eq!(compute_fractal_dimension(&rect(0, 0, 2, 2)), 1.0);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_half_turn(-90.0), 90.0);
        assert_eq!(wrap_half_turn(90.0), 90.0);
        assert_eq!(wrap_half_turn(135.0), -45.0);
        assert_eq!(wrap_half_turn(-100.0), 80.0);
        assert_eq!(wrap_half_turn(0.0), 0.0);
    }
}
