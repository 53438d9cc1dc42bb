//! Simulated moving images with known rigid motion.

use histair::warp::{apply_transform, invert, ResampleConfig};
use histair::{GrayImage, Result, RigidTransform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const CENTER_CONVENTION: &str = "image1-center";

/// Ground truth written next to a synthesized image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta_deg: f64,
    pub dx: f64,
    pub dy: f64,
    pub center_convention: String,
}

impl Truth {
    pub fn new(theta_deg: f64, dx: f64, dy: f64) -> Self {
        Self {
            theta_deg,
            dx,
            dy,
            center_convention: CENTER_CONVENTION.to_string(),
        }
    }
}

/// Moves the content of `input` by `R(θ)(p − c) + c + (dx, dy)` (bilinear,
/// zero fill) and optionally adds clamped Gaussian noise of standard
/// deviation `noise_sigma` drawn from a ChaCha8 stream seeded with `seed`.
pub fn synthesize(
    input: &GrayImage,
    theta_deg: f64,
    dx: f64,
    dy: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<GrayImage> {
    let forward = RigidTransform::new(theta_deg, dx, dy, input.center());
    // inverse mapping: output pixel q samples the input at forward⁻¹(q)
    let moved = apply_transform(
        input,
        &invert(&forward),
        input.dims(),
        &ResampleConfig::default(),
    )?;
    add_noise(&moved, noise_sigma, seed)
}

pub fn add_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if sigma <= 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| histair::HistairError::InvalidConfig(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| {
            (p as f64 + normal.sample(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(img.width(), img.height(), pixels)
}
