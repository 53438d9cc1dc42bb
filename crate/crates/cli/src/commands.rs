//! Subcommand implementations. Every command computes all of its outputs in
//! memory first and only then writes them, so a failure leaves no files behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use histair::enhance::{wiener_filter, EnhanceConfig};
use histair::features::compute_features;
use histair::matching::MatchCandidate;
use histair::raster::{encode_pgm, encode_png};
use histair::segment::{segment_multilevel, LabeledRegions, SegmentationConfig};
use histair::{load_image, register_pair, GrayImage, HistairError, PipelineConfig, RigidTransform};

use crate::error::CliError;
use crate::oracle::{oracle_search, OracleGrid, OracleResult};
use crate::report::{
    check_truth, evaluate, Evaluation, ImageInfo, RegistrationReport, ReportEstimate,
};
use crate::scene::test_scene;
use crate::synth::{synthesize, Truth};

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Histair(HistairError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn staging_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes every file or none: contents go to sibling staging files that are
/// renamed into place once all of them were written.
pub fn write_outputs(files: &[(PathBuf, Vec<u8>)]) -> CliResult<()> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[PathBuf]| {
        for p in staged {
            let _ = fs::remove_file(p);
        }
    };
    for (path, bytes) in files {
        let tmp = staging_path(path);
        if let Err(e) = fs::write(&tmp, bytes) {
            cleanup(&staged);
            return Err(io_err(path, e));
        }
        staged.push(tmp);
    }
    for ((path, _), tmp) in files.iter().zip(&staged) {
        if let Err(e) = fs::rename(tmp, path) {
            cleanup(&staged);
            return Err(io_err(path, e));
        }
    }
    Ok(())
}

/// PGM for a `.pgm` extension, PNG otherwise.
pub fn encode_image(img: &GrayImage, path: &Path) -> CliResult<Vec<u8>> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        Ok(encode_pgm(img))
    } else {
        encode_png(img).map_err(|reason| {
            CliError::Histair(HistairError::Decode {
                path: path.to_path_buf(),
                reason,
            })
        })
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s.into_bytes()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn image_info(path: &Path, img: &GrayImage) -> ImageInfo {
    ImageInfo {
        path: path.display().to_string(),
        width: img.width(),
        height: img.height(),
        bit_depth: 8,
    }
}

pub fn cmd_scene(out: &Path) -> CliResult<()> {
    let scene = test_scene()?;
    write_outputs(&[(out.to_path_buf(), encode_image(&scene, out)?)])
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub input: PathBuf,
    pub theta_deg: f64,
    pub dx: f64,
    pub dy: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub truth_out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<Truth> {
    for (name, v) in [("theta", args.theta_deg), ("dx", args.dx), ("dy", args.dy)] {
        if !v.is_finite() {
            return Err(CliError::Usage(format!("{name} must be finite")));
        }
    }
    if !(args.noise_sigma >= 0.0 && args.noise_sigma.is_finite()) {
        return Err(CliError::Usage(format!(
            "noise sigma must be >= 0, got {}",
            args.noise_sigma
        )));
    }
    let input = load_image(&args.input)?;
    let moved = synthesize(
        &input,
        args.theta_deg,
        args.dx,
        args.dy,
        args.noise_sigma,
        args.seed,
    )?;
    let truth = Truth::new(args.theta_deg, args.dx, args.dy);
    write_outputs(&[
        (args.out.clone(), encode_image(&moved, &args.out)?),
        (args.truth_out.clone(), to_json(&truth)),
    ])?;
    Ok(truth)
}

#[derive(Debug, Clone)]
pub struct RegisterArgs {
    pub reference: PathBuf,
    pub moving: PathBuf,
    pub config: PipelineConfig,
    pub truth: Option<PathBuf>,
    pub out_report: PathBuf,
    pub out_image: Option<PathBuf>,
    pub dump_candidates: Option<PathBuf>,
    pub no_timings: bool,
}

pub fn candidates_csv(candidates: &[MatchCandidate]) -> String {
    let mut s = String::from("label1,alpha1,label2,alpha2,gamma,d_theta_deg\n");
    for c in candidates {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.obj1.label, c.obj1.alpha, c.obj2.label, c.obj2.alpha, c.gamma, c.d_theta
        );
    }
    s
}

pub fn cmd_register(args: &RegisterArgs) -> CliResult<RegistrationReport> {
    let reference = load_image(&args.reference)?;
    let moving = load_image(&args.moving)?;
    let truth = match &args.truth {
        Some(path) => {
            let t: Truth = read_json(path)?;
            check_truth(&t).map_err(|reason| CliError::Schema {
                path: path.display().to_string(),
                reason,
            })?;
            Some(RigidTransform::new(
                t.theta_deg,
                t.dx,
                t.dy,
                reference.center(),
            ))
        }
        None => None,
    };
    let reg = register_pair(&reference, &moving, &args.config)?;
    let report = RegistrationReport::new(
        image_info(&args.reference, &reference),
        image_info(&args.moving, &moving),
        &reg,
        truth,
        !args.no_timings,
        &args.config,
    );

    let mut files = vec![(args.out_report.clone(), to_json(&report))];
    if let Some(path) = &args.out_image {
        files.push((path.clone(), encode_image(&reg.registered, path)?));
    }
    if let Some(path) = &args.dump_candidates {
        files.push((path.clone(), candidates_csv(&reg.candidates).into_bytes()));
    }
    write_outputs(&files)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SegmentArgs {
    pub image: PathBuf,
    pub segmentation: SegmentationConfig,
    /// Wiener pre-filter as in the pipeline; `None` segments the raw image.
    pub enhance: Option<EnhanceConfig>,
    /// Label map path; with several α levels each gets a `-a<alpha>` suffix.
    pub out_labels: PathBuf,
    pub out_csv: PathBuf,
    pub features: Option<PathBuf>,
}

/// 256-entry RGB palette: black background, then a spread of hues. Labels
/// beyond 255 reuse colors.
fn label_palette() -> Vec<u8> {
    let mut pal = vec![0u8; 3];
    for i in 1..256u32 {
        // golden-angle hue walk, fixed saturation/value
        let h = (i as f64 * 137.507_764) % 360.0 / 60.0;
        let x = 1.0 - (h % 2.0 - 1.0).abs();
        let (r, g, b) = match h as u32 {
            0 => (1.0, x, 0.0),
            1 => (x, 1.0, 0.0),
            2 => (0.0, 1.0, x),
            3 => (0.0, x, 1.0),
            4 => (x, 0.0, 1.0),
            _ => (1.0, 0.0, x),
        };
        let scale = |c: f64| (40.0 + 215.0 * c).round() as u8;
        pal.extend_from_slice(&[scale(r), scale(g), scale(b)]);
    }
    pal
}

pub fn encode_label_png(level: &LabeledRegions) -> Vec<u8> {
    let indices: Vec<u8> = level
        .labels
        .iter()
        .map(|&l| if l == 0 { 0 } else { ((l - 1) % 255 + 1) as u8 })
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, level.width as u32, level.height as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(label_palette());
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&indices).expect("in-memory PNG data");
    }
    out
}

fn labels_path(base: &Path, alpha: f64, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base
        .extension()
        .map_or_else(|| "png".to_string(), |e| e.to_string_lossy().into_owned());
    base.with_file_name(format!("{stem}-a{alpha:.2}.{ext}"))
}

pub fn regions_csv(levels: &[LabeledRegions]) -> String {
    let mut s = String::from("alpha,label,mode,area\n");
    for lr in levels {
        for r in &lr.regions {
            let _ = writeln!(s, "{},{},{},{}", lr.source_alpha, r.label, r.mode, r.area());
        }
    }
    s
}

pub fn features_csv(levels: &[LabeledRegions]) -> String {
    let mut s = String::from(
        "label,alpha,area,perimeter,axis_ratio,fractal_dim,centroid_x,centroid_y,orientation_deg,isotropic_flag\n",
    );
    for lr in levels {
        for r in &lr.regions {
            let f = compute_features(&r.pixels);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                lr.source_alpha,
                f.area,
                f.perimeter,
                f.axis_ratio,
                f.fractal_dim,
                f.centroid.0,
                f.centroid.1,
                f.orientation_deg,
                u8::from(f.isotropic)
            );
        }
    }
    s
}

pub fn cmd_segment(args: &SegmentArgs) -> CliResult<Vec<LabeledRegions>> {
    let img = load_image(&args.image)?;
    let img = match &args.enhance {
        Some(cfg) => wiener_filter(&img, cfg)?,
        None => img,
    };
    let levels = segment_multilevel(&img, &args.segmentation)?;
    let several = levels.len() > 1;
    let mut files: Vec<(PathBuf, Vec<u8>)> = levels
        .iter()
        .map(|lr| {
            (
                labels_path(&args.out_labels, lr.source_alpha, several),
                encode_label_png(lr),
            )
        })
        .collect();
    files.push((args.out_csv.clone(), regions_csv(&levels).into_bytes()));
    if let Some(path) = &args.features {
        files.push((path.clone(), features_csv(&levels).into_bytes()));
    }
    write_outputs(&files)?;
    Ok(levels)
}

pub fn cmd_eval(
    report: &Path,
    truth: &Path,
    tol_theta: f64,
    tol_shift: f64,
) -> CliResult<Evaluation> {
    if !(tol_theta >= 0.0 && tol_shift >= 0.0) {
        return Err(CliError::Usage("tolerances must be >= 0".into()));
    }
    let rep: ReportEstimate = read_json(report)?;
    if rep.schema_version != crate::report::SCHEMA_VERSION {
        return Err(CliError::Schema {
            path: report.display().to_string(),
            reason: format!("unsupported schema_version {}", rep.schema_version),
        });
    }
    let t: Truth = read_json(truth)?;
    check_truth(&t).map_err(|reason| CliError::Schema {
        path: truth.display().to_string(),
        reason,
    })?;
    Ok(evaluate(&rep.estimated, &t, tol_theta, tol_shift))
}

pub fn cmd_oracle(
    reference: &Path,
    moving: &Path,
    grid: &OracleGrid,
    out: Option<&Path>,
) -> CliResult<OracleResult> {
    let r = load_image(reference)?;
    let m = load_image(moving)?;
    let result = oracle_search(&r, &m, grid).map_err(|e| match e {
        HistairError::InvalidConfig(msg) => CliError::Usage(msg),
        other => CliError::Histair(other),
    })?;
    if let Some(path) = out {
        write_outputs(&[(path.to_path_buf(), to_json(&result))])?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_has_256_entries_and_black_background() {
        let p = label_palette();
        assert_eq!(p.len(), 768);
        assert_eq!(&p[..3], &[0, 0, 0]);
        assert!(p[3..].chunks(3).all(|c| c.iter().any(|&v| v > 0)));
    }

    #[test]
    fn labels_path_suffixes_only_for_several_levels() {
        let base = Path::new("/tmp/x/labels.png");
        assert_eq!(labels_path(base, 0.1, false), base);
        assert_eq!(
            labels_path(base, 0.1, true),
            Path::new("/tmp/x/labels-a0.10.png")
        );
    }

    #[test]
    fn staged_writes_leave_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.json");
        let bad = dir.path().join("missing-dir").join("b.json");
        assert!(write_outputs(&[(good.clone(), b"{}".to_vec()), (bad, b"{}".to_vec())]).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
