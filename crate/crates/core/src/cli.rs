//! Command-line front end: argument parsing, file layout and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::axis_recovery::{filter_tracks, load_track_file, recover_axis, Stage1Config, TrackFile};
use crate::error::{Error, Result};
use crate::geometry::{Line2D, PinholeCamera, Pose6};
use crate::io;
use crate::kinematics::{load_chain, KinematicChain};
use crate::pose_estimation::{
    estimate_pose, validate_joint_sets, CalibrationResult, Measurement, Stage2Config, ValidationReport,
};
use crate::sim::{self, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

/// Noise levels used when none are given, in px².
pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.1, 0.5, 1.0, 1.5];

#[derive(Debug, Parser)]
#[command(name = "arccal", version, about = "Camera-to-arm extrinsic calibration from wrist-rotation feature arcs")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic track files and ground truth for a scenario.
    Simulate(SimulateArgs),
    /// Estimate the camera pose from track files.
    Calibrate(CalibrateArgs),
    /// Run the Monte Carlo noise study.
    Montecarlo(MonteCarloArgs),
    /// Check whether a measurement set can determine the camera pose.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Tracking noise variance in px² (overrides the scenario).
    #[arg(long = "noise-var")]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// A directory (all `measurement_*.json` inside) or explicit track files.
    #[arg(long, num_args = 1.., required = true)]
    pub tracks: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub camera: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Directory for `calibration.json`; the report is printed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stage-2 restart count.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long = "stage1-restarts", default_value_t = 10)]
    pub stage1_restarts: usize,
    /// Calibrate even if the measurement set fails validation.
    #[arg(long)]
    pub force: bool,
    #[arg(long = "min-track-len", default_value_t = 10)]
    pub min_track_len: usize,
    #[arg(long = "min-motion-px", default_value_t = 5.0)]
    pub min_motion_px: f64,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise variances in px²; defaults to 0.1, 0.5, 1.0 and 1.5.
    #[arg(long = "noise-var", num_args = 1..)]
    pub noise_var: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stage-2 restart count (overrides the scenario).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "min-track-len")]
    pub min_track_len: Option<usize>,
    #[arg(long = "min-motion-px")]
    pub min_motion_px: Option<f64>,
    #[arg(long)]
    pub force: bool,
    /// Worker threads; 1 runs serially. Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Coincidence threshold for wrist centers, meters.
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
}

/// Everything a run reads, loaded and parsed up front.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub camera: Option<PinholeCamera>,
    pub chain: KinematicChain,
    pub track_files: Vec<(PathBuf, TrackFile)>,
}

impl RunManifest {
    pub fn load(camera: Option<&Path>, input: &InputArgs) -> Result<Self> {
        let camera = camera
            .map(|p| {
                let c: PinholeCamera = io::read_json(p)?;
                c.validate()?;
                Ok::<_, Error>(c)
            })
            .transpose()?;
        let chain = load_chain(&input.chain)?;
        let paths = expand_track_paths(&input.tracks)?;
        let track_files = paths
            .into_iter()
            .map(|p| load_track_file(&p).map(|t| (p, t)))
            .collect::<Result<_>>()?;
        Ok(RunManifest {
            camera,
            chain,
            track_files,
        })
    }
}

fn is_track_file_name(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("measurement_") && n.ends_with(".json"))
}

pub fn expand_track_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_track_file_name(p))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub camera_pose: Pose6,
    pub lines: Vec<TruthLine>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthLine {
    pub line: Line2D,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSummary {
    pub file: String,
    pub line: Line2D,
    pub stage1_residual: f64,
    pub tracks_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(flatten)]
    pub result: CalibrationResult,
    pub measurements: Vec<MeasurementSummary>,
    pub excluded: Vec<String>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&args.scenario)?;
    if let Some(v) = args.noise_var {
        cfg.noise_var = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let synthetic = sim::synthesize_all(&cfg)?;
    create_dir(&args.out)?;
    let mut lines = Vec::with_capacity(synthetic.len());
    for (k, syn) in synthetic.iter().enumerate() {
        let mut file = syn.track_file.clone();
        if cfg.noise_var > 0.0 {
            file.tracks = sim::add_noise(&file.tracks, cfg.noise_var, sim::derive_seed(cfg.seed, &[k as u64]))?;
        }
        io::write_json(args.out.join(format!("measurement_{k:03}.json")), &file)?;
        let si = syn.true_line.slope_intercept().ok();
        lines.push(TruthLine {
            line: syn.true_line,
            slope: si.map(|s| s.0),
            intercept: si.map(|s| s.1),
        });
    }
    io::write_json(
        args.out.join("ground_truth.json"),
        &GroundTruth {
            camera_pose: cfg.camera_pose,
            lines,
        },
    )?;
    io::write_json(args.out.join("camera.json"), &cfg.intrinsics)?;
    io::write_json(args.out.join("chain.json"), &cfg.chain)?;
    eprintln!("wrote {} track files to {}", synthetic.len(), args.out.display());
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<CalibrationReport> {
    let manifest = RunManifest::load(Some(&args.camera), &args.input)?;
    let camera = manifest.camera.expect("camera was requested");
    let stage1 = Stage1Config {
        restarts: args.stage1_restarts,
        seed: args.seed,
        min_track_len: args.min_track_len,
        min_motion_px: args.min_motion_px,
        ..Stage1Config::default()
    };
    let mut measurements = Vec::new();
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    for (k, (path, file)) in manifest.track_files.iter().enumerate() {
        let name = path.display().to_string();
        let kept = filter_tracks(&file.tracks, args.min_track_len, args.min_motion_px);
        let cfg = Stage1Config {
            seed: sim::derive_seed(args.seed, &[k as u64]),
            ..stage1
        };
        match recover_axis(&kept, &camera, &cfg) {
            Ok(obs) => {
                eprintln!("{name}: axis recovered (residual {:.3e})", obs.residual);
                let mut m = Measurement::new(file.joint_angles.clone(), obs.line);
                if let Some(w) = file.weight {
                    m = m.with_weight(w)?;
                }
                m.stage1_residual = Some(obs.residual);
                measurements.push(m);
                summaries.push(MeasurementSummary {
                    file: name,
                    line: obs.line,
                    stage1_residual: obs.residual,
                    tracks_used: kept.len(),
                });
            }
            Err(e) => {
                warn!("{name}: excluded ({e})");
                eprintln!("warning: {name} excluded: {e}");
                excluded.push(format!("{name}: {e}"));
            }
        }
    }
    let stage2 = Stage2Config {
        restarts: args.restarts,
        seed: args.seed,
        force: args.force,
        ..Stage2Config::default()
    };
    let result = estimate_pose(&measurements, &manifest.chain, &camera, &stage2).map_err(|e| match e {
        Error::Degenerate(mut report) => {
            report.reasons.extend(excluded.iter().map(|x| format!("excluded {x}")));
            Error::Degenerate(report)
        }
        other => other,
    })?;
    info!("calibration residual {:.3e}", result.residual_norm);
    Ok(CalibrationReport {
        result,
        measurements: summaries,
        excluded,
    })
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidationReport> {
    let manifest = RunManifest::load(None, &args.input)?;
    let angles: Vec<_> = manifest.track_files.iter().map(|(_, f)| f.joint_angles.clone()).collect();
    Ok(validate_joint_sets(&angles, &manifest.chain, args.threshold))
}

fn noise_label(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<Vec<sim::MonteCarloSummary>> {
    let mut cfg = ScenarioConfig::load(&args.scenario)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.restarts {
        cfg.stage2.restarts = r;
    }
    if let Some(n) = args.min_track_len {
        cfg.stage1.min_track_len = n;
    }
    if let Some(m) = args.min_motion_px {
        cfg.stage1.min_motion_px = m;
    }
    cfg.stage2.force |= args.force;
    let levels: Vec<f64> = if args.noise_var.is_empty() {
        DEFAULT_NOISE_LEVELS.to_vec()
    } else {
        args.noise_var.clone()
    };
    create_dir(&args.out)?;
    let mut summaries = Vec::with_capacity(levels.len());
    for &var in &levels {
        let total = cfg.trials;
        let progress = move |t: usize, r: &Result<sim::ErrorSample>| match r {
            Ok(_) => eprintln!("noise {var} px²: trial {}/{total} done", t + 1),
            Err(e) => eprintln!("noise {var} px²: trial {}/{total} failed: {e}", t + 1),
        };
        let run = sim::monte_carlo_at(&cfg, var, args.threads, &progress)?;
        let csv = args.out.join(format!("montecarlo_{}.csv", noise_label(var)));
        sim::write_samples_csv(&csv, &run.samples, cfg.arm_poses.len())?;
        eprintln!(
            "noise {var} px²: {} ok, {} failed, position std [{:.4}, {:.4}, {:.4}] m",
            run.summary.succeeded,
            run.summary.failed,
            run.summary.pose_error_std[0],
            run.summary.pose_error_std[1],
            run.summary.pose_error_std[2]
        );
        summaries.push(run.summary);
    }
    let mut text = serde_json::to_string_pretty(&summaries)?;
    text.push('\n');
    write_file(&args.out.join("summary.json"), &text)?;
    Ok(summaries)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Degenerate(_) => EXIT_INVALID,
        _ => EXIT_ERROR,
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome: Result<i32> = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| EXIT_OK),
        Command::Calibrate(a) => cmd_calibrate(a).and_then(|report| {
            match &a.out {
                Some(dir) => {
                    create_dir(dir)?;
                    let path = dir.join("calibration.json");
                    io::write_json(&path, &report)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print_json(&report)?,
            }
            Ok(EXIT_OK)
        }),
        Command::Montecarlo(a) => cmd_montecarlo(a).map(|_| EXIT_OK),
        Command::Validate(a) => cmd_validate(a).and_then(|report| {
            print_json(&report)?;
            if report.passed {
                eprintln!("validation passed");
                Ok(EXIT_OK)
            } else {
                for r in &report.reasons {
                    eprintln!("validation failed: {r}");
                }
                Ok(EXIT_INVALID)
            }
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            if let Error::Degenerate(report) = &e {
                let _ = print_json(report);
            }
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn arguments_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_calibrate_flags() {
        let cli = Cli::try_parse_from([
            "arccal", "calibrate", "--camera", "c.json", "--chain", "k.json", "--tracks", "a.json", "b.json",
            "--seed", "4", "--restarts", "3", "--force", "--min-track-len", "8", "--min-motion-px", "2.5",
        ])
        .unwrap();
        match cli.command {
            Command::Calibrate(a) => {
                assert_eq!(a.input.tracks.len(), 2);
                assert_eq!((a.seed, a.restarts, a.force, a.min_track_len), (4, 3, true, 8));
                assert_eq!(a.min_motion_px, 2.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_labels() {
        assert_eq!(noise_label(0.1), "0p1");
        assert_eq!(noise_label(1.0), "1");
        assert_eq!(noise_label(1.5), "1p5");
    }
}
