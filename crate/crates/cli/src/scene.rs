//! Built-in synthetic test scene.
//!
//! A disc of four gray-level quadrant zones sits on a dark, smoothly shaded
//! surround. Each zone holds elliptical blobs drawn at the other zones'
//! levels; mild seeded texture covers everything. The disc stays inside the
//! frame for shifts up to about 110 px at any rotation, so the zero fill of
//! a simulated motion only ever touches the surround.

use histair::{GrayImage, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const SCENE_SIZE: usize = 640;
pub const SCENE_SEED: u64 = 0x5eed_a1f0;
const DISC_RADIUS: f64 = 200.0;
const ZONE_LEVELS: [f64; 4] = [60.0, 110.0, 160.0, 210.0];
const SURROUND_RANGE: (f64, f64) = (6.0, 34.0);
const TEXTURE_SIGMA: f64 = 3.0;
const BLOBS_PER_ZONE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Major-axis angle, counter-clockwise on screen.
    pub angle_deg: f64,
    pub level: f64,
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        // y points down
        let u = c * dx - s * dy;
        let v = s * dx + c * dy;
        (u / self.semi_axes.0).powi(2) + (v / self.semi_axes.1).powi(2) <= 1.0
    }

    fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.0 * self.semi_axes.1
    }

    fn ratio(&self) -> f64 {
        self.semi_axes.0 / self.semi_axes.1
    }
}

fn center() -> f64 {
    (SCENE_SIZE as f64 - 1.0) / 2.0
}

fn zone_of(x: f64, y: f64) -> usize {
    let c = center();
    match (x >= c, y >= c) {
        (false, false) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (true, true) => 3,
    }
}

/// Deterministic blob layout: non-overlapping ellipses kept clear of zone
/// borders and of the disc rim, with pairwise distinct (area, elongation).
pub fn scene_blobs() -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(SCENE_SEED);
    let c = center();
    let mut blobs: Vec<Blob> = Vec::new();
    for zone in 0..4 {
        let (sx, sy) = match zone {
            0 => (-1.0, -1.0),
            1 => (1.0, -1.0),
            2 => (-1.0, 1.0),
            _ => (1.0, 1.0),
        };
        let mut placed = 0;
        while placed < BLOBS_PER_ZONE {
            let major: f64 = rng.random_range(15.0..34.0);
            let ratio: f64 = rng.random_range(1.8..4.0);
            let reach = major + 6.0;
            let ox: f64 = rng.random_range(reach..DISC_RADIUS);
            let oy: f64 = rng.random_range(reach..DISC_RADIUS);
            if ox.hypot(oy) + reach > DISC_RADIUS - 4.0 {
                continue;
            }
            let shift = rng.random_range(1..4usize);
            let blob = Blob {
                center: (c + sx * ox, c + sy * oy),
                semi_axes: (major, major / ratio),
                angle_deg: rng.random_range(-90.0..90.0),
                level: ZONE_LEVELS[(zone + shift) % 4],
            };
            let clash = blobs.iter().any(|b| {
                let d = (b.center.0 - blob.center.0).hypot(b.center.1 - blob.center.1);
                let similar = (b.area() / blob.area() - 1.0).abs() < 0.12
                    && (b.ratio() / blob.ratio() - 1.0).abs() < 0.2;
                d < b.semi_axes.0 + reach || similar
            });
            if !clash {
                blobs.push(blob);
                placed += 1;
            }
        }
    }
    blobs
}

fn noise_free(blobs: &[Blob], x: f64, y: f64) -> f64 {
    let c = center();
    if (x - c).hypot(y - c) > DISC_RADIUS {
        let t = (x + y) / (2.0 * (SCENE_SIZE as f64 - 1.0));
        return SURROUND_RANGE.0 + t * (SURROUND_RANGE.1 - SURROUND_RANGE.0);
    }
    blobs
        .iter()
        .find(|b| b.contains(x, y))
        .map(|b| b.level)
        .unwrap_or(ZONE_LEVELS[zone_of(x, y)])
}

/// Deterministic 640x640 scene with a five-mode histogram.
pub fn test_scene() -> Result<GrayImage> {
    let blobs = scene_blobs();
    let mut rng = ChaCha8Rng::seed_from_u64(SCENE_SEED ^ 0xffff);
    let noise = Normal::new(0.0, TEXTURE_SIGMA).expect("valid sigma");
    GrayImage::from_fn(SCENE_SIZE, SCENE_SIZE, |x, y| {
        (noise_free(&blobs, x as f64, y as f64) + noise.sample(&mut rng))
            .round()
            .clamp(0.0, 255.0) as u8
    })
}
