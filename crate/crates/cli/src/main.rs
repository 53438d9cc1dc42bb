use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histair::enhance::EnhanceConfig;
use histair::estimate::VoteConfig;
use histair::matching::MatchingConfig;
use histair::segment::{Connectivity, SegmentationConfig};
use histair::warp::{Interpolation, ResampleConfig};
use histair::PipelineConfig;
use histair_cli::commands::{self, RegisterArgs, SegmentArgs, SynthArgs};
use histair_cli::error::{CliError, EXIT_EVAL_FAIL, EXIT_OK, EXIT_USAGE};
use histair_cli::oracle::OracleGrid;

#[derive(Parser)]
#[command(
    name = "histair",
    version,
    about = "Histogram-based rigid image registration"
)]
struct Cli {
    /// Worker threads (default: HISTAIR_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in synthetic test scene.
    Scene {
        #[arg(long)]
        out: PathBuf,
    },
    /// Move an image by a known rigid transform and write the truth JSON.
    Synth {
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true)]
        dx: f64,
        #[arg(long, allow_hyphen_values = true)]
        dy: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth_out: PathBuf,
    },
    /// Register MOVING onto REFERENCE.
    Register {
        reference: PathBuf,
        moving: PathBuf,
        #[command(flatten)]
        pipeline: PipelineFlags,
        /// Truth JSON from `synth`; adds errors to the report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        out_image: Option<PathBuf>,
        #[arg(long)]
        dump_candidates: Option<PathBuf>,
        /// Omit stage timings so reports are reproducible byte for byte.
        #[arg(long)]
        no_timings: bool,
    },
    /// Dump the multilevel segmentation of one image.
    Segment {
        image: PathBuf,
        #[command(flatten)]
        segmentation: SegmentationFlags,
        #[arg(long, default_value_t = 5)]
        wiener_window: usize,
        /// Segment the image as loaded, without the Wiener pre-filter.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        /// Also write per-region features to this CSV.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Compare a report's estimate with a truth JSON.
    Eval {
        report: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tol_theta: f64,
        #[arg(long, default_value_t = 1.5)]
        tol_shift: f64,
    },
    /// Exhaustive correlation search over a (theta, dx, dy) grid.
    Oracle {
        reference: PathBuf,
        moving: PathBuf,
        #[arg(long, default_value_t = -45.0, allow_hyphen_values = true)]
        theta_min: f64,
        #[arg(long, default_value_t = 45.0, allow_hyphen_values = true)]
        theta_max: f64,
        #[arg(long, default_value_t = 1.0)]
        theta_step: f64,
        #[arg(long, default_value_t = 80)]
        shift_range: usize,
        #[arg(long, default_value_t = 1)]
        shift_step: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnectivityArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpolationArg {
    Nearest,
    Bilinear,
}

#[derive(Args)]
struct SegmentationFlags {
    /// Comma-separated α levels for mode detection.
    #[arg(long, value_delimiter = ',', default_values_t = [0.20, 0.10, 0.05])]
    alpha_levels: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    smoothing_radius: usize,
    #[arg(long, default_value_t = 16)]
    min_area: usize,
    #[arg(long, default_value_t = 200)]
    max_objects: usize,
    #[arg(long, value_enum, default_value = "8")]
    connectivity: ConnectivityArg,
}

impl SegmentationFlags {
    fn config(&self) -> SegmentationConfig {
        SegmentationConfig {
            alpha_levels: self.alpha_levels.clone(),
            smoothing_radius: self.smoothing_radius,
            min_object_area: self.min_area,
            max_objects_per_level: self.max_objects,
            connectivity: match self.connectivity {
                ConnectivityArg::Four => Connectivity::Four,
                ConnectivityArg::Eight => Connectivity::Eight,
            },
        }
    }
}

#[derive(Args)]
struct PipelineFlags {
    #[command(flatten)]
    segmentation: SegmentationFlags,
    #[arg(long, default_value_t = 5)]
    wiener_window: usize,
    /// Fixed Wiener noise variance (default: mean local variance).
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    gamma_max: f64,
    /// Keep every pair under gamma_max instead of mutual best matches only.
    #[arg(long)]
    all_pairs: bool,
    #[arg(long, default_value_t = 1.0)]
    theta_bin: f64,
    #[arg(long, default_value_t = 2.0)]
    theta_consistency: f64,
    #[arg(long, default_value_t = 1.0)]
    shift_bin: f64,
    #[arg(long, default_value_t = 3)]
    min_votes: usize,
    #[arg(long, value_enum, default_value = "bilinear")]
    interpolation: InterpolationArg,
    #[arg(long, default_value_t = 0)]
    fill: u8,
}

impl PipelineFlags {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            enhance: EnhanceConfig {
                wiener_window: self.wiener_window,
                noise_variance: self.noise_variance,
            },
            segmentation: self.segmentation.config(),
            matching: MatchingConfig {
                gamma_max: self.gamma_max,
                mutual_best: !self.all_pairs,
            },
            votes: VoteConfig {
                theta_bin_deg: self.theta_bin,
                theta_consistency_deg: self.theta_consistency,
                shift_bin_px: self.shift_bin,
                min_votes: self.min_votes,
            },
            resample: ResampleConfig {
                interpolation: match self.interpolation {
                    InterpolationArg::Nearest => Interpolation::Nearest,
                    InterpolationArg::Bilinear => Interpolation::Bilinear,
                },
                fill_value: self.fill,
            },
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    histair_cli::configure_threads(cli.threads)?;
    match cli.command {
        Command::Scene { out } => commands::cmd_scene(&out)?,
        Command::Synth {
            input,
            theta,
            dx,
            dy,
            noise_sigma,
            seed,
            out,
            truth_out,
        } => {
            commands::cmd_synth(&SynthArgs {
                input,
                theta_deg: theta,
                dx,
                dy,
                noise_sigma,
                seed,
                out,
                truth_out,
            })?;
        }
        Command::Register {
            reference,
            moving,
            pipeline,
            truth,
            out_report,
            out_image,
            dump_candidates,
            no_timings,
        } => {
            let report = commands::cmd_register(&RegisterArgs {
                reference,
                moving,
                config: pipeline.config(),
                truth,
                out_report,
                out_image,
                dump_candidates,
                no_timings,
            })?;
            let t = report.estimated;
            println!(
                "theta = {:.4} deg  dx = {:.4} px  dy = {:.4} px",
                t.theta_deg, t.dx, t.dy
            );
        }
        Command::Segment {
            image,
            segmentation,
            wiener_window,
            raw,
            out_labels,
            out_csv,
            features,
        } => {
            let levels = commands::cmd_segment(&SegmentArgs {
                image,
                segmentation: segmentation.config(),
                enhance: (!raw).then_some(EnhanceConfig {
                    wiener_window,
                    noise_variance: None,
                }),
                out_labels,
                out_csv,
                features,
            })?;
            for lr in &levels {
                println!(
                    "alpha {}: {} modes, {} regions",
                    lr.source_alpha,
                    lr.modes.modes.len(),
                    lr.regions.len()
                );
            }
        }
        Command::Eval {
            report,
            truth,
            tol_theta,
            tol_shift,
        } => {
            let e = commands::cmd_eval(&report, &truth, tol_theta, tol_shift)?;
            println!("{}", e.summary());
            return Ok(if e.pass { EXIT_OK } else { EXIT_EVAL_FAIL });
        }
        Command::Oracle {
            reference,
            moving,
            theta_min,
            theta_max,
            theta_step,
            shift_range,
            shift_step,
            out,
        } => {
            let grid = OracleGrid {
                theta_min,
                theta_max,
                theta_step,
                shift_range,
                shift_step,
            };
            let r = commands::cmd_oracle(&reference, &moving, &grid, out.as_deref())?;
            let t = r.transform;
            println!(
                "theta = {} deg  dx = {} px  dy = {} px  ncc = {:.6}",
                t.theta_deg, t.dx, t.dy, r.ncc
            );
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
