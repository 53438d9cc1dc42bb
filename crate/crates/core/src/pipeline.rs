//! End-to-end registration: enhance → segment → features → matching →
//! estimate → warp.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enhance::{preprocess_pair, EnhanceConfig};
use crate::error::HistairError;
use crate::estimate::{estimate_transform, RigidTransform, TransformEstimate, VoteConfig};
use crate::matching::{
    build_candidates, pool_regions, MatchCandidate, MatchingConfig, PooledObject,
};
use crate::raster::GrayImage;
use crate::segment::{segment_multilevel, LabeledRegions, SegmentationConfig};
use crate::warp::{apply_transform, ResampleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Enhance,
    Segment,
    Features,
    Matching,
    Estimate,
    Warp,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Enhance,
        Stage::Segment,
        Stage::Features,
        Stage::Matching,
        Stage::Estimate,
        Stage::Warp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Enhance => "enhance",
            Stage::Segment => "segment",
            Stage::Features => "features",
            Stage::Matching => "matching",
            Stage::Estimate => "estimate",
            Stage::Warp => "warp",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: HistairError,
}

fn at(stage: Stage) -> impl FnOnce(HistairError) -> PipelineError {
    move |source| PipelineError { stage, source }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub enhance: EnhanceConfig,
    pub segmentation: SegmentationConfig,
    pub matching: MatchingConfig,
    pub votes: VoteConfig,
    pub resample: ResampleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub alpha: f64,
    pub image1: usize,
    pub image2: usize,
    pub modes1: usize,
    pub modes2: usize,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: RigidTransform,
    /// Moving image resampled onto the reference grid.
    pub registered: GrayImage,
    pub estimate: TransformEstimate,
    pub level_counts: Vec<LevelCounts>,
    pub pool1: Vec<PooledObject>,
    pub pool2: Vec<PooledObject>,
    pub candidates: Vec<MatchCandidate>,
    /// Wall-clock milliseconds per stage, in pipeline order.
    pub timings_ms: Vec<(Stage, f64)>,
}

fn timed<T>(timings: &mut Vec<(Stage, f64)>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((stage, start.elapsed().as_secs_f64() * 1e3));
    out
}

fn total_regions(levels: &[LabeledRegions]) -> usize {
    levels.iter().map(|l| l.regions.len()).sum()
}

/// Registers `moving` (image 2) onto `reference` (image 1).
///
/// The returned transform maps reference coordinates to moving coordinates;
/// the registered image samples the moving image through it on the
/// reference grid.
pub fn register_pair(
    reference: &GrayImage,
    moving: &GrayImage,
    cfg: &PipelineConfig,
) -> Result<Registration, PipelineError> {
    let mut timings = Vec::with_capacity(6);

    let (pre1, pre2) = timed(&mut timings, Stage::Enhance, || {
        preprocess_pair(reference, moving, &cfg.enhance)
    })
    .map_err(at(Stage::Enhance))?;

    let (levels1, levels2) = timed(&mut timings, Stage::Segment, || {
        rayon::join(
            || segment_multilevel(&pre1, &cfg.segmentation),
            || segment_multilevel(&pre2, &cfg.segmentation),
        )
    });
    let levels1 = levels1.map_err(at(Stage::Segment))?;
    let levels2 = levels2.map_err(at(Stage::Segment))?;
    if total_regions(&levels1) == 0 || total_regions(&levels2) == 0 {
        return Err(PipelineError {
            stage: Stage::Segment,
            source: HistairError::NoObjects(format!(
                "{} regions in image 1, {} in image 2",
                total_regions(&levels1),
                total_regions(&levels2)
            )),
        });
    }
    let level_counts = levels1
        .iter()
        .zip(&levels2)
        .map(|(a, b)| LevelCounts {
            alpha: a.source_alpha,
            image1: a.regions.len(),
            image2: b.regions.len(),
            modes1: a.modes.modes.len(),
            modes2: b.modes.modes.len(),
        })
        .collect();

    let (pool1, pool2) = timed(&mut timings, Stage::Features, || {
        rayon::join(|| pool_regions(&levels1), || pool_regions(&levels2))
    });

    let candidates = timed(&mut timings, Stage::Matching, || {
        build_candidates(&pool1, &pool2, &cfg.matching)
    })
    .map_err(at(Stage::Matching))?;
    if candidates.is_empty() {
        return Err(PipelineError {
            stage: Stage::Matching,
            source: HistairError::NoCandidates,
        });
    }

    let estimate = timed(&mut timings, Stage::Estimate, || {
        estimate_transform(&candidates, reference.dims(), &cfg.votes)
    })
    .map_err(at(Stage::Estimate))?;
    let transform = estimate.transform;

    let registered = timed(&mut timings, Stage::Warp, || {
        apply_transform(moving, &transform, reference.dims(), &cfg.resample)
    })
    .map_err(at(Stage::Warp))?;

    Ok(Registration {
        transform,
        registered,
        estimate,
        level_counts,
        pool1,
        pool2,
        candidates,
        timings_ms: timings,
    })
}
