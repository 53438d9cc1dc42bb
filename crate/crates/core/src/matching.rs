//! Cross-image object matching with the four-term normalized cost γ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HistairError, Result};
use crate::features::{compute_features, wrap_half_turn, RegionFeatures};
use crate::segment::LabeledRegions;

/// Identifies one region inside a pooled multi-level segmentation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RegionRef {
    /// Index of the segmentation level (levels are sorted by decreasing α).
    pub level: usize,
    pub alpha: f64,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledObject {
    pub id: RegionRef,
    pub features: RegionFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub obj1: RegionRef,
    pub obj2: RegionRef,
    pub gamma: f64,
    /// `orientation2 - orientation1` wrapped into (-90, 90].
    pub d_theta: f64,
    pub both_anisotropic: bool,
    pub centroid1: (f64, f64),
    pub centroid2: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub gamma_max: f64,
    pub mutual_best: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            gamma_max: 0.5,
            mutual_best: true,
        }
    }
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_max.is_nan() || self.gamma_max <= 0.0 {
            return Err(HistairError::InvalidConfig(format!(
                "gamma_max must be > 0, got {}",
                self.gamma_max
            )));
        }
        Ok(())
    }
}

/// Computes features for every region of every level, ordered by (level, label).
pub fn pool_regions(levels: &[LabeledRegions]) -> Vec<PooledObject> {
    levels
        .iter()
        .enumerate()
        .flat_map(|(level, lr)| {
            lr.regions.iter().map(move |r| {
                (
                    RegionRef {
                        level,
                        alpha: lr.source_alpha,
                        label: r.label,
                    },
                    r,
                )
            })
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(id, r)| PooledObject {
            id,
            features: compute_features(&r.pixels),
        })
        .collect()
}

fn check_feature(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(HistairError::InvalidFeature(format!("{name} = {v}")))
    }
}

/// Sum of the absolute property differences, each normalized by the pair's
/// mean of that property.
pub fn gamma_cost(f1: &RegionFeatures, f2: &RegionFeatures) -> Result<f64> {
    let terms = [
        ("area", f1.area, f2.area),
        ("axis_ratio", f1.axis_ratio, f2.axis_ratio),
        ("perimeter", f1.perimeter, f2.perimeter),
        ("fractal_dim", f1.fractal_dim, f2.fractal_dim),
    ];
    let mut gamma = 0.0;
    for (name, a, b) in terms {
        check_feature(name, a)?;
        check_feature(name, b)?;
        gamma += (a - b).abs() / ((a + b) / 2.0);
    }
    Ok(gamma)
}

/// Index of the smallest cost; earlier index wins ties.
fn argmin(costs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in costs.enumerate() {
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluates γ over the full cross product of the two pools and returns the
/// accepted pairs sorted by `(obj1, obj2)`.
pub fn build_candidates(
    pool1: &[PooledObject],
    pool2: &[PooledObject],
    cfg: &MatchingConfig,
) -> Result<Vec<MatchCandidate>> {
    cfg.validate()?;
    if pool1.is_empty() || pool2.is_empty() {
        return Err(HistairError::NoObjects(format!(
            "pool sizes {} and {}",
            pool1.len(),
            pool2.len()
        )));
    }
    let costs: Vec<Vec<f64>> = pool1
        .par_iter()
        .map(|a| {
            pool2
                .iter()
                .map(|b| gamma_cost(&a.features, &b.features))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let (best_for_1, best_for_2): (Vec<usize>, Vec<usize>) = if cfg.mutual_best {
        (
            costs
                .iter()
                .map(|row| argmin(row.iter().copied()).unwrap())
                .collect(),
            (0..pool2.len())
                .map(|j| argmin(costs.iter().map(|row| row[j])).unwrap())
                .collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };

    let mut out = Vec::new();
    for (i, a) in pool1.iter().enumerate() {
        for (j, b) in pool2.iter().enumerate() {
            let gamma = costs[i][j];
            if gamma > cfg.gamma_max {
                continue;
            }
            if cfg.mutual_best && (best_for_1[i] != j || best_for_2[j] != i) {
                continue;
            }
            out.push(MatchCandidate {
                obj1: a.id,
                obj2: b.id,
                gamma,
                d_theta: wrap_half_turn(b.features.orientation_deg - a.features.orientation_deg),
                both_anisotropic: !a.features.isotropic && !b.features.isotropic,
                centroid1: a.features.centroid,
                centroid2: b.features.centroid,
            });
        }
    }
    Ok(out)
}
