//! Histogram-mode segmentation under a relaxation parameter α.
//!
//! The smoothed histogram is searched for local maxima; maxima lower than
//! `α · max` are flat regions and dropped, neighbours separated by a shallow
//! dip are merged, and the valleys between the surviving modes become the
//! gray-level thresholds. Connected components inside each mode class are
//! the extracted objects.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HistairError, Result};
use crate::raster::{compute_histogram, GrayImage, Histogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub alpha_levels: Vec<f64>,
    pub smoothing_radius: usize,
    pub min_object_area: usize,
    pub max_objects_per_level: usize,
    pub connectivity: Connectivity,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            alpha_levels: vec![0.20, 0.10, 0.05],
            smoothing_radius: 2,
            min_object_area: 16,
            max_objects_per_level: 200,
            connectivity: Connectivity::Eight,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_levels.is_empty() {
            return Err(HistairError::InvalidConfig("no alpha levels".into()));
        }
        if let Some(a) = self.alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(HistairError::InvalidConfig(format!(
                "alpha {a} outside (0, 1)"
            )));
        }
        if self.min_object_area == 0 {
            return Err(HistairError::InvalidConfig(
                "min_object_area must be >= 1".into(),
            ));
        }
        if self.max_objects_per_level == 0 {
            return Err(HistairError::InvalidConfig(
                "max_objects_per_level must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Alpha levels sorted strictly decreasing with duplicates removed.
    pub fn sorted_alphas(&self) -> Vec<f64> {
        let mut a = self.alpha_levels.clone();
        a.sort_by(|x, y| y.total_cmp(x));
        a.dedup();
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub peak: u8,
    pub left_valley: u8,
    pub right_valley: u8,
}

impl Mode {
    pub fn contains(&self, v: u8) -> bool {
        self.left_valley <= v && v <= self.right_valley
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub alpha: f64,
}

/// Centered moving average of width `2 * radius + 1`. Windows clipped by the
/// ends are averaged over their in-range part only; total mass is therefore
/// not renormalized.
pub fn smooth_counts(values: &[f64], radius: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn smooth_histogram(h: &Histogram, radius: usize) -> Vec<f64> {
    let raw: Vec<f64> = h.counts().iter().map(|&c| c as f64).collect();
    smooth_counts(&raw, radius)
}

/// Local maxima of `values`: runs of equal height whose nearest differing
/// neighbour on each side (if any) is strictly lower. Plateaus report their
/// center bin.
fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut maxima = Vec::new();
    let mut start = 0;
    while start < n {
        let v = values[start];
        let mut end = start;
        while end + 1 < n && values[end + 1] == v {
            end += 1;
        }
        let left_ok = start == 0 || values[start - 1] < v;
        let right_ok = end == n - 1 || values[end + 1] < v;
        if v > 0.0 && left_ok && right_ok {
            maxima.push((start + end) / 2);
        }
        start = end + 1;
    }
    maxima
}

/// Lowest-index minimum strictly between two bins.
fn valley_between(values: &[f64], a: usize, b: usize) -> usize {
    if b <= a + 1 {
        return a;
    }
    let mut best = a + 1;
    for i in a + 2..b {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

pub fn detect_modes(smoothed: &[f64], alpha: f64) -> Result<ModeSet> {
    if smoothed.len() != 256 {
        return Err(HistairError::InvalidConfig(format!(
            "histogram must have 256 bins, got {}",
            smoothed.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HistairError::InvalidConfig(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let global_max = smoothed.iter().copied().fold(0.0, f64::max);
    if global_max <= 0.0 {
        return Err(HistairError::EmptyHistogram);
    }

    let floor = alpha * global_max;
    let mut peaks: Vec<usize> = local_maxima(smoothed)
        .into_iter()
        .filter(|&p| smoothed[p] >= floor)
        .collect();

    // merge neighbours whose separating dip is shallower than (1-α) of the lower peak
    loop {
        let merge = peaks.windows(2).position(|pair| {
            let (a, b) = (pair[0], pair[1]);
            let dip = smoothed[a + 1..b]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            dip > (1.0 - alpha) * smoothed[a].min(smoothed[b])
        });
        match merge {
            Some(i) => {
                let (a, b) = (peaks[i], peaks[i + 1]);
                let drop = if smoothed[b] > smoothed[a] { i } else { i + 1 };
                peaks.remove(drop);
            }
            None => break,
        }
    }

    let mut modes = Vec::with_capacity(peaks.len());
    let mut left = 0usize;
    for (k, &p) in peaks.iter().enumerate() {
        let right = match peaks.get(k + 1) {
            Some(&next) => valley_between(smoothed, p, next),
            None => 255,
        };
        modes.push(Mode {
            peak: p as u8,
            left_valley: left as u8,
            right_valley: right as u8,
        });
        left = right;
    }
    Ok(ModeSet { modes, alpha })
}

/// Sentinel class for pixels outside every mode interval.
pub const BACKGROUND: u32 = u32::MAX;

/// Per-pixel mode index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<u32>,
}

/// Assigns each pixel to the mode whose valley interval contains it; a pixel on
/// a shared valley goes to the lower mode.
pub fn threshold_by_modes(img: &GrayImage, ms: &ModeSet) -> ModeMap {
    let mut lut = [BACKGROUND; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        if let Some(k) = ms.modes.iter().position(|m| m.contains(v as u8)) {
            *slot = k as u32;
        }
    }
    ModeMap {
        width: img.width(),
        height: img.height(),
        classes: img.pixels().iter().map(|&p| lut[p as usize]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// 1-based label, unique within its segmentation level.
    pub label: u32,
    /// Index of the histogram mode the region belongs to.
    pub mode: u32,
    /// Member pixels as `(x, y)`, in raster discovery order.
    pub pixels: Vec<(u32, u32)>,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRegions {
    pub width: usize,
    pub height: usize,
    /// Row-major label map, 0 = unassigned.
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
    pub source_alpha: f64,
    pub modes: ModeSet,
}

impl LabeledRegions {
    pub fn region(&self, label: u32) -> Option<&Region> {
        self.regions.get(label.checked_sub(1)? as usize)
    }
}

fn connected_components(map: &ModeMap, connectivity: Connectivity) -> Vec<Region> {
    let (w, h) = (map.width, map.height);
    let mut seen = vec![false; w * h];
    let mut found = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let class = map.classes[start];
        if seen[start] || class == BACKGROUND {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            pixels.push((x as u32, y as u32));
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && map.classes[j] == class {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        found.push(Region {
            label: 0,
            mode: class,
            pixels,
        });
    }
    found
}

/// Labels connected components inside each mode class, drops regions smaller
/// than `min_object_area`, keeps at most `max_objects_per_level` (largest
/// first) and numbers the survivors from 1 in raster discovery order.
pub fn extract_regions(map: &ModeMap, cfg: &SegmentationConfig, ms: &ModeSet) -> LabeledRegions {
    let mut found: Vec<(usize, Region)> = connected_components(map, cfg.connectivity)
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.area() >= cfg.min_object_area)
        .collect();
    if found.len() > cfg.max_objects_per_level {
        found.sort_by(|(ia, a), (ib, b)| b.area().cmp(&a.area()).then(ia.cmp(ib)));
        found.truncate(cfg.max_objects_per_level);
        found.sort_by_key(|(i, _)| *i);
    }

    let mut labels = vec![0u32; map.width * map.height];
    let regions: Vec<Region> = found
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut r))| {
            r.label = k as u32 + 1;
            for &(x, y) in &r.pixels {
                labels[y as usize * map.width + x as usize] = r.label;
            }
            r
        })
        .collect();
    LabeledRegions {
        width: map.width,
        height: map.height,
        labels,
        regions,
        source_alpha: ms.alpha,
        modes: ms.clone(),
    }
}

/// Segments one image at a single α.
pub fn segment_level(
    img: &GrayImage,
    alpha: f64,
    cfg: &SegmentationConfig,
) -> Result<LabeledRegions> {
    let smoothed = smooth_histogram(&compute_histogram(img), cfg.smoothing_radius);
    let modes = detect_modes(&smoothed, alpha)?;
    let map = threshold_by_modes(img, &modes);
    Ok(extract_regions(&map, cfg, &modes))
}

/// One segmentation per α, ordered by decreasing α.
pub fn segment_multilevel(
    img: &GrayImage,
    cfg: &SegmentationConfig,
) -> Result<Vec<LabeledRegions>> {
    cfg.validate()?;
    cfg.sorted_alphas()
        .par_iter()
        .map(|&alpha| segment_level(img, alpha, cfg))
        .collect()
}
