//! Statistical estimation of the rigid transform from match candidates.
//!
//! Rotation is the modal bin of the orientation-difference histogram, refined
//! by the mean of the votes inside that bin. Translation repeats the same
//! procedure on centroid displacement votes from the rotation-consistent
//! candidates.

use serde::{Deserialize, Serialize};

use crate::error::{HistairError, Result};
use crate::features::wrap_half_turn;
use crate::matching::MatchCandidate;

/// Rotation about the reference-image center followed by a translation:
/// `p2 = R(θ)·(p1 − c) + c + (dx, dy)`, pixel coordinates with x right and
/// y down, θ counter-clockwise on screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub theta_deg: f64,
    pub dx: f64,
    pub dy: f64,
    /// Rotation center, `((w-1)/2, (h-1)/2)` of the reference image.
    pub center: (f64, f64),
}

impl RigidTransform {
    pub fn new(theta_deg: f64, dx: f64, dy: f64, center: (f64, f64)) -> Self {
        Self {
            theta_deg,
            dx,
            dy,
            center,
        }
    }

    pub fn identity(center: (f64, f64)) -> Self {
        Self::new(0.0, 0.0, 0.0, center)
    }

    pub fn is_finite(&self) -> bool {
        self.theta_deg.is_finite()
            && self.dx.is_finite()
            && self.dy.is_finite()
            && self.center.0.is_finite()
            && self.center.1.is_finite()
    }

    /// Maps a point of image 1 to image 2.
    #[inline]
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (rx, ry) = rotate(self.theta_deg, (p.0 - self.center.0, p.1 - self.center.1));
        (rx + self.center.0 + self.dx, ry + self.center.1 + self.dy)
    }
}

/// Rotates a vector counter-clockwise on screen (y axis pointing down).
#[inline]
pub fn rotate(theta_deg: f64, v: (f64, f64)) -> (f64, f64) {
    let (s, c) = theta_deg.to_radians().sin_cos();
    (c * v.0 + s * v.1, -s * v.0 + c * v.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub theta_bin_deg: f64,
    pub theta_consistency_deg: f64,
    pub shift_bin_px: f64,
    pub min_votes: usize,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            theta_bin_deg: 1.0,
            theta_consistency_deg: 2.0,
            shift_bin_px: 1.0,
            min_votes: 3,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.theta_bin_deg)
            || !positive(self.theta_consistency_deg)
            || !positive(self.shift_bin_px)
            || self.min_votes == 0
        {
            return Err(HistairError::InvalidConfig(format!(
                "vote parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Summary of one modal vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSummary {
    /// Non-empty bins as `(bin center, count)`, ascending by center.
    pub bins: Vec<(f64, usize)>,
    pub winning_center: f64,
    pub winning_count: usize,
    pub runner_up_count: usize,
    pub total_votes: usize,
    /// Mean of the votes in the winning bin.
    pub estimate: f64,
}

/// Modal-bin voting. `period` folds bins on a circle (orientation differences
/// repeat every 180°); it is honoured only when it holds a whole number of bins.
fn modal_vote(values: &[f64], width: f64, period: Option<f64>) -> VoteSummary {
    let bins_per_period = period.and_then(|p| {
        let n = p / width;
        ((n - n.round()).abs() < 1e-9 && n.round() >= 1.0).then(|| n.round() as i64)
    });
    let canonical = |k: i64| match bins_per_period {
        // fold into (-n/2, n/2]
        Some(n) => {
            let mut m = k.rem_euclid(n);
            if 2 * m > n {
                m -= n;
            }
            m
        }
        None => k,
    };

    let mut binned: Vec<(i64, f64)> = values
        .iter()
        .map(|&v| (canonical((v / width).round() as i64), v))
        .collect();
    binned.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut bins: Vec<(i64, usize)> = Vec::new();
    for &(k, _) in &binned {
        match bins.last_mut() {
            Some((last, count)) if *last == k => *count += 1,
            _ => bins.push((k, 1)),
        }
    }
    // highest count, then nearest zero, then the negative side
    let winner = bins
        .iter()
        .copied()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.0.abs().cmp(&b.0.abs()))
                .then(a.0.cmp(&b.0))
        })
        .map(|(k, _)| k);

    let Some(win) = winner else {
        return VoteSummary {
            bins: Vec::new(),
            winning_center: 0.0,
            winning_count: 0,
            runner_up_count: 0,
            total_votes: 0,
            estimate: f64::NAN,
        };
    };
    let center = win as f64 * width;
    let members: Vec<f64> = binned
        .iter()
        .filter(|(k, _)| *k == win)
        .map(|&(_, v)| match period {
            // unwrap each member to the copy nearest the bin center
            Some(p) if bins_per_period.is_some() => v - p * ((v - center) / p).round(),
            _ => v,
        })
        .collect();
    let mean = members.iter().sum::<f64>() / members.len() as f64;
    let winning_count = members.len();
    let runner_up_count = bins
        .iter()
        .filter(|(k, _)| *k != win)
        .map(|&(_, c)| c)
        .max()
        .unwrap_or(0);
    VoteSummary {
        bins: bins.iter().map(|&(k, c)| (k as f64 * width, c)).collect(),
        winning_center: center,
        winning_count,
        runner_up_count,
        total_votes: values.len(),
        estimate: match period {
            Some(_) if bins_per_period.is_some() => wrap_half_turn(mean),
            _ => mean,
        },
    }
}

/// Votes on the orientation differences of the anisotropic candidates.
pub fn estimate_rotation(candidates: &[MatchCandidate], cfg: &VoteConfig) -> Result<VoteSummary> {
    cfg.validate()?;
    let d_thetas: Vec<f64> = candidates
        .iter()
        .filter(|c| c.both_anisotropic)
        .map(|c| c.d_theta)
        .collect();
    rotation_vote(&d_thetas, cfg)
}

/// Rotation vote on raw orientation differences in degrees.
pub fn rotation_vote(d_thetas: &[f64], cfg: &VoteConfig) -> Result<VoteSummary> {
    if d_thetas.len() < cfg.min_votes {
        return Err(HistairError::Estimation {
            stage: "rotation",
            found: d_thetas.len(),
            needed: cfg.min_votes,
        });
    }
    let summary = modal_vote(d_thetas, cfg.theta_bin_deg, Some(180.0));
    if summary.winning_count < cfg.min_votes {
        return Err(HistairError::Estimation {
            stage: "rotation",
            found: summary.winning_count,
            needed: cfg.min_votes,
        });
    }
    Ok(summary)
}

/// Displacement votes on one axis, e.g. the x components.
pub fn shift_vote(values: &[f64], axis: &'static str, cfg: &VoteConfig) -> Result<VoteSummary> {
    if values.len() < cfg.min_votes {
        return Err(HistairError::Estimation {
            stage: axis,
            found: values.len(),
            needed: cfg.min_votes,
        });
    }
    let summary = modal_vote(values, cfg.shift_bin_px, None);
    if summary.winning_count < cfg.min_votes {
        return Err(HistairError::Estimation {
            stage: axis,
            found: summary.winning_count,
            needed: cfg.min_votes,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationEstimate {
    pub dx: VoteSummary,
    pub dy: VoteSummary,
    pub consistent_candidates: usize,
}

/// Centroid displacement votes `c2 − (R(θ)(c1 − center) + center)` over the
/// candidates whose orientation difference agrees with `theta_deg`. Isotropic
/// candidates carry no orientation and are always admitted.
pub fn estimate_translation(
    candidates: &[MatchCandidate],
    theta_deg: f64,
    image1_dims: (usize, usize),
    cfg: &VoteConfig,
) -> Result<TranslationEstimate> {
    cfg.validate()?;
    let center = (
        (image1_dims.0 as f64 - 1.0) / 2.0,
        (image1_dims.1 as f64 - 1.0) / 2.0,
    );
    let rotation_only = RigidTransform::new(theta_deg, 0.0, 0.0, center);
    let (vx, vy): (Vec<f64>, Vec<f64>) = candidates
        .iter()
        .filter(|c| {
            !c.both_anisotropic
                || wrap_half_turn(c.d_theta - theta_deg).abs() <= cfg.theta_consistency_deg
        })
        .map(|c| {
            let p = rotation_only.apply(c.centroid1);
            (c.centroid2.0 - p.0, c.centroid2.1 - p.1)
        })
        .unzip();
    if vx.len() < cfg.min_votes {
        return Err(HistairError::Estimation {
            stage: "translation",
            found: vx.len(),
            needed: cfg.min_votes,
        });
    }
    Ok(TranslationEstimate {
        dx: shift_vote(&vx, "translation-x", cfg)?,
        dy: shift_vote(&vy, "translation-y", cfg)?,
        consistent_candidates: vx.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformEstimate {
    pub transform: RigidTransform,
    pub rotation: VoteSummary,
    pub translation: TranslationEstimate,
    pub anisotropic_candidates: usize,
}

pub fn estimate_transform(
    candidates: &[MatchCandidate],
    image1_dims: (usize, usize),
    cfg: &VoteConfig,
) -> Result<TransformEstimate> {
    let rotation = estimate_rotation(candidates, cfg)?;
    let theta = rotation.estimate;
    let translation = estimate_translation(candidates, theta, image1_dims, cfg)?;
    let center = (
        (image1_dims.0 as f64 - 1.0) / 2.0,
        (image1_dims.1 as f64 - 1.0) / 2.0,
    );
    Ok(TransformEstimate {
        transform: RigidTransform::new(
            theta,
            translation.dx.estimate,
            translation.dy.estimate,
            center,
        ),
        anisotropic_candidates: candidates.iter().filter(|c| c.both_anisotropic).count(),
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::RegionRef;
    use proptest::prelude::*;

    fn cand(d_theta: f64, c1: (f64, f64), c2: (f64, f64)) -> MatchCandidate {
        let id = RegionRef {
            level: 0,
            alpha: 0.1,
            label: 1,
        };
        MatchCandidate {
            obj1: id,
            obj2: id,
            gamma: 0.0,
            d_theta,
            both_anisotropic: true,
            centroid1: c1,
            centroid2: c2,
        }
    }

    #[test]
    fn rotation_example() {
        let v = rotation_vote(&[30.2, 29.8, 30.1, -12.0, 30.0], &VoteConfig::default()).unwrap();
        assert_eq!(v.winning_center, 30.0);
        assert_eq!(v.winning_count, 4);
        assert!((v.estimate - 30.025).abs() < 1e-12);
    }

    #[test]
    fn zero_rotation() {
        let v = rotation_vote(&[0.0; 5], &VoteConfig::default()).unwrap();
        assert_eq!(v.estimate, 0.0);
    }

    #[test]
    fn rotation_wraps_at_right_angle() {
        let v = rotation_vote(&[89.9, -89.9, 89.8, -89.7, 10.0], &VoteConfig::default()).unwrap();
        assert_eq!(v.winning_count, 4);
        assert!(
            wrap_half_turn(v.estimate - 90.025).abs() < 1e-9,
            "{}",
            v.estimate
        );
    }

    #[test]
    fn tie_prefers_bin_nearer_zero_then_negative() {
        let v = rotation_vote(&[5.0, 5.0, 5.0, -3.0, -3.0, -3.0], &VoteConfig::default()).unwrap();
        assert_eq!(v.winning_center, -3.0);
        let v = rotation_vote(&[3.0, 3.0, 3.0, -3.0, -3.0, -3.0], &VoteConfig::default()).unwrap();
        assert_eq!(v.winning_center, -3.0);
    }

    #[test]
    fn too_few_votes() {
        let err = rotation_vote(&[1.0, 1.0], &VoteConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            HistairError::Estimation {
                found: 2,
                needed: 3,
                ..
            }
        ));
        // scattered votes never reach the floor
        assert!(rotation_vote(&[1.0, 20.0, 40.0, 60.0], &VoteConfig::default()).is_err());
    }

    #[test]
    fn isotropic_candidates_do_not_vote_on_rotation() {
        let mut cs: Vec<_> = (0..4).map(|_| cand(10.0, (0.0, 0.0), (0.0, 0.0))).collect();
        for c in cs.iter_mut().take(2) {
            c.both_anisotropic = false;
        }
        assert!(estimate_rotation(&cs, &VoteConfig::default()).is_err());
    }

    #[test]
    fn shift_example() {
        let v = shift_vote(&[60.1, 59.9, 60.0, 12.0], "x", &VoteConfig::default()).unwrap();
        assert!((v.estimate - 60.0).abs() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let cs: Vec<_> = [(10.0, 20.0), (50.5, 3.0), (70.0, 80.0), (33.0, 41.0)]
            .iter()
            .map(|&(x, y)| cand(0.0, (x, y), (x + 7.0, y - 3.0)))
            .collect();
        let t = estimate_transform(&cs, (100, 100), &VoteConfig::default()).unwrap();
        assert_eq!(t.transform.theta_deg, 0.0);
        assert!((t.transform.dx - 7.0).abs() < 1e-12);
        assert!((t.transform.dy + 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_then_translation() {
        let truth = RigidTransform::new(30.0, 60.0, 40.0, (199.5, 149.5));
        let cs: Vec<_> = [
            (100.0, 100.0),
            (250.0, 80.0),
            (180.0, 200.0),
            (300.0, 220.0),
        ]
        .iter()
        .map(|&p| cand(30.0, p, truth.apply(p)))
        .chain(std::iter::once(cand(-40.0, (10.0, 10.0), (300.0, 5.0))))
        .collect();
        let t = estimate_transform(&cs, (400, 300), &VoteConfig::default()).unwrap();
        assert!((t.transform.theta_deg - 30.0).abs() < 1e-9);
        assert!((t.transform.dx - 60.0).abs() < 1e-9);
        assert!((t.transform.dy - 40.0).abs() < 1e-9);
        assert_eq!(t.translation.consistent_candidates, 4);
    }

    #[test]
    fn rotation_is_counter_clockwise_on_screen() {
        // +x rotated by 90° points up, i.e. toward -y
        let (x, y) = rotate(90.0, (1.0, 0.0));
        assert!(x.abs() < 1e-12 && (y + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn duplicating_votes_is_neutral(votes in proptest::collection::vec(-60.0f64..60.0, 3..40)) {
            let mut doubled = votes.clone();
            doubled.extend_from_slice(&votes);
            let cfg = VoteConfig { min_votes: 1, ..Default::default() };
            let a = rotation_vote(&votes, &cfg).unwrap();
            let b = rotation_vote(&doubled, &cfg).unwrap();
            prop_assert_eq!(a.winning_center, b.winning_center);
            prop_assert!((a.estimate - b.estimate).abs() < 1e-9);
        }

        #[test]
        fn outliers_below_margin_keep_winner(
            clean in proptest::collection::vec(29.6f64..30.4, 8..20),
            noise in proptest::collection::vec(-80.0f64..80.0, 0..6),
            bin in -80i64..80,
        ) {
            let cfg = VoteConfig { min_votes: 1, ..Default::default() };
            let mut votes = clean.clone();
            votes.extend_from_slice(&noise);
            let base = rotation_vote(&votes, &cfg).unwrap();
            let margin = base.winning_count - base.runner_up_count;
            let mut attacked = votes.clone();
            for _ in 0..margin.saturating_sub(1) {
                attacked.push(bin as f64);
            }
            let after = rotation_vote(&attacked, &cfg).unwrap();
            if bin as f64 != base.winning_center {
                prop_assert_eq!(after.winning_center, base.winning_center);
            }
        }

        #[test]
        fn shift_equivariance(
            votes in proptest::collection::vec(-0.45f64..0.45, 3..30),
            phi in -40.0f64..40.0,
        ) {
            let cfg = VoteConfig { min_votes: 1, ..Default::default() };
            let a = rotation_vote(&votes, &cfg).unwrap();
            let shifted: Vec<f64> = votes.iter().map(|v| v + phi).collect();
            let b = rotation_vote(&shifted, &cfg).unwrap();
            // clustered votes may straddle a bin edge after shifting
            prop_assert!((b.estimate - (a.estimate + phi)).abs() <= cfg.theta_bin_deg);
        }
    }
}
