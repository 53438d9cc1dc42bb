//! The JSON registration report and the evaluation against ground truth.

use histair::estimate::VoteSummary;
use histair::pipeline::{LevelCounts, Registration, Stage};
use histair::{PipelineConfig, RigidTransform};
use serde::{Deserialize, Serialize};

use crate::synth::{Truth, CENTER_CONVENTION};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
}

/// Absolute differences between an estimate and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformErrors {
    pub theta_deg: f64,
    pub dx: f64,
    pub dy: f64,
}

impl TransformErrors {
    pub fn between(estimated: &RigidTransform, truth: &RigidTransform) -> Self {
        let dt = (estimated.theta_deg - truth.theta_deg).rem_euclid(360.0);
        Self {
            theta_deg: dt.min(360.0 - dt),
            dx: (estimated.dx - truth.dx).abs(),
            dy: (estimated.dy - truth.dy).abs(),
        }
    }

    pub fn within(&self, tol_theta: f64, tol_shift: f64) -> bool {
        self.theta_deg <= tol_theta && self.dx <= tol_shift && self.dy <= tol_shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDiagnostics {
    pub rotation: VoteSummary,
    pub translation_x: VoteSummary,
    pub translation_y: VoteSummary,
    pub anisotropic_candidates: usize,
    pub consistent_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub enhance: f64,
    pub segment: f64,
    pub features: f64,
    pub matching: f64,
    pub estimate: f64,
    pub warp: f64,
}

impl StageTimings {
    pub fn from_pairs(pairs: &[(Stage, f64)]) -> Self {
        let get = |s: Stage| pairs.iter().find(|(k, _)| *k == s).map_or(0.0, |p| p.1);
        Self {
            enhance: get(Stage::Enhance),
            segment: get(Stage::Segment),
            features: get(Stage::Features),
            matching: get(Stage::Matching),
            estimate: get(Stage::Estimate),
            warp: get(Stage::Warp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub schema_version: u32,
    pub reference: ImageInfo,
    pub moving: ImageInfo,
    pub estimated: RigidTransform,
    pub truth: Option<RigidTransform>,
    pub errors: Option<TransformErrors>,
    pub object_counts: Vec<LevelCounts>,
    pub candidate_count: usize,
    pub vote_diagnostics: VoteDiagnostics,
    /// `None` when timings are suppressed for reproducible output.
    pub stage_timings_ms: Option<StageTimings>,
    pub config_echo: PipelineConfig,
}

impl RegistrationReport {
    pub fn new(
        reference: ImageInfo,
        moving: ImageInfo,
        reg: &Registration,
        truth: Option<RigidTransform>,
        with_timings: bool,
        config: &PipelineConfig,
    ) -> Self {
        let est = &reg.estimate;
        Self {
            schema_version: SCHEMA_VERSION,
            reference,
            moving,
            estimated: reg.transform,
            errors: truth.map(|t| TransformErrors::between(&reg.transform, &t)),
            truth,
            object_counts: reg.level_counts.clone(),
            candidate_count: reg.candidates.len(),
            vote_diagnostics: VoteDiagnostics {
                rotation: est.rotation.clone(),
                translation_x: est.translation.dx.clone(),
                translation_y: est.translation.dy.clone(),
                anisotropic_candidates: est.anisotropic_candidates,
                consistent_candidates: est.translation.consistent_candidates,
            },
            stage_timings_ms: with_timings.then(|| StageTimings::from_pairs(&reg.timings_ms)),
            config_echo: config.clone(),
        }
    }
}

/// The part of a report that evaluation needs; other fields are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct ReportEstimate {
    pub schema_version: u32,
    pub estimated: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub errors: TransformErrors,
    pub tol_theta: f64,
    pub tol_shift: f64,
    pub pass: bool,
}

impl Evaluation {
    pub fn summary(&self) -> String {
        format!(
            "|dtheta| = {:.4} deg  |ddx| = {:.4} px  |ddy| = {:.4} px  (tolerances {} deg, {} px)  {}",
            self.errors.theta_deg,
            self.errors.dx,
            self.errors.dy,
            self.tol_theta,
            self.tol_shift,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

pub fn evaluate(
    estimated: &RigidTransform,
    truth: &Truth,
    tol_theta: f64,
    tol_shift: f64,
) -> Evaluation {
    let truth = RigidTransform::new(truth.theta_deg, truth.dx, truth.dy, estimated.center);
    let errors = TransformErrors::between(estimated, &truth);
    Evaluation {
        errors,
        tol_theta,
        tol_shift,
        pass: errors.within(tol_theta, tol_shift),
    }
}

pub fn check_truth(truth: &Truth) -> Result<(), String> {
    if truth.center_convention != CENTER_CONVENTION {
        return Err(format!(
            "center_convention {:?} is not supported (expected {CENTER_CONVENTION:?})",
            truth.center_convention
        ));
    }
    Ok(())
}
