//! Synthetic wrist-rotation data and the Monte Carlo error study.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axis_recovery::{filter_tracks, recover_axis, FeatureTrack, Stage1Config, TrackFile};
use crate::error::{Error, Result};
use crate::geometry::{fit_line_2d, pose_to_transform, wrap_angle, Line2D, PinholeCamera, Pose6};
use crate::io;
use crate::kinematics::{forward_kinematics, ChainConfig, JointAngles, KinematicChain};
use crate::pose_estimation::{estimate_pose, validate_measurement_set, Measurement, Stage2Config};

/// A feature rigidly attached to the end effector: a point at `radius` from
/// the final joint axis, `offset` along it, starting at angle `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub radius: f64,
    pub offset: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub camera_pose: Pose6,
    pub intrinsics: PinholeCamera,
    pub chain: ChainConfig,
    pub arm_poses: Vec<JointAngles>,
    pub features: Vec<FeatureSpec>,
    /// Frames per wrist rotation.
    pub frames: usize,
    /// Wrist sweep per rotation, radians.
    pub sweep: f64,
    /// Tracking noise variance in px².
    #[serde(default)]
    pub noise_var: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stage1: Stage1Config,
    #[serde(default)]
    pub stage2: Stage2Config,
}

fn default_trials() -> usize {
    100
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: ScenarioConfig = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(label: &str, text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = io::parse_json(label, text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        KinematicChain::from_config(&self.chain)?;
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::InvalidInput("noise variance must be non-negative".into()));
        }
        if self.arm_poses.is_empty() || self.features.is_empty() {
            return Err(Error::InvalidInput("scenario needs arm poses and features".into()));
        }
        if self.frames < 2 {
            return Err(Error::InvalidInput("need at least two frames per rotation".into()));
        }
        if !self.camera_pose.is_finite() || !self.sweep.is_finite() {
            return Err(Error::InvalidInput("scenario values must be finite".into()));
        }
        Ok(())
    }

    pub fn kinematic_chain(&self) -> Result<KinematicChain> {
        KinematicChain::from_config(&self.chain)
    }
}

/// Noiseless tracks for one arm pose plus the true image of its axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeasurement {
    pub track_file: TrackFile,
    pub true_line: Line2D,
}

pub fn synthesize_measurement(config: &ScenarioConfig, arm_pose: usize) -> Result<SyntheticMeasurement> {
    let chain = config.kinematic_chain()?;
    let angles = config
        .arm_poses
        .get(arm_pose)
        .ok_or_else(|| Error::InvalidInput(format!("no arm pose {arm_pose}")))?;
    let cam = &config.intrinsics;
    let cam_from_arm = pose_to_transform(&config.camera_pose).inverse();
    let visible = |p: &Vector3<f64>| -> Result<(f64, f64)> {
        let uv = cam
            .project_camera_point(&cam_from_arm.transform_point(p))
            .map_err(|_| Error::OutOfFrustum { arm_pose })?;
        if cam.contains(uv.0, uv.1) {
            Ok(uv)
        } else {
            Err(Error::OutOfFrustum { arm_pose })
        }
    };

    let last = angles.len().saturating_sub(1);
    let mut swept = angles.clone();
    let mut tracks = Vec::with_capacity(config.features.len());
    for (id, f) in config.features.iter().enumerate() {
        let mut points = Vec::with_capacity(config.frames);
        for k in 0..config.frames {
            let a = f.phase + config.sweep * k as f64 / (config.frames - 1) as f64;
            swept.0[last] = angles.0[last] + a;
            let p = forward_kinematics(&chain, &swept)?.transform_point(&Vector3::new(f.radius, 0.0, f.offset));
            let (u, v) = visible(&p)?;
            points.push((k as u64, u, v));
        }
        tracks.push(FeatureTrack::new(id as u64, points)?);
    }

    let fk = forward_kinematics(&chain, angles)?;
    let lo = config.features.iter().map(|f| f.offset).fold(f64::INFINITY, f64::min) - 0.05;
    let hi = config.features.iter().map(|f| f.offset).fold(f64::NEG_INFINITY, f64::max) + 0.05;
    let axis: Vec<(f64, f64)> = (0..11)
        .map(|k| {
            let z = lo + (hi - lo) * k as f64 / 10.0;
            cam.project_camera_point(&cam_from_arm.transform_point(&fk.transform_point(&Vector3::new(0.0, 0.0, z))))
                .map_err(|_| Error::OutOfFrustum { arm_pose })
        })
        .collect::<Result<_>>()?;
    Ok(SyntheticMeasurement {
        track_file: TrackFile {
            joint_angles: angles.clone(),
            tracks,
            weight: None,
        },
        true_line: fit_line_2d(&axis)?,
    })
}

pub fn synthesize_all(config: &ScenarioConfig) -> Result<Vec<SyntheticMeasurement>> {
    (0..config.arm_poses.len())
        .map(|k| synthesize_measurement(config, k))
        .collect()
}

/// Adds `sigma · N(0, 1)` to every coordinate, drawing u then v per point.
pub fn add_noise_with(tracks: &[FeatureTrack], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<FeatureTrack> {
    tracks
        .iter()
        .map(|t| FeatureTrack {
            id: t.id,
            points: t
                .points
                .iter()
                .map(|&(f, u, v)| {
                    let du: f64 = rng.sample(StandardNormal);
                    let dv: f64 = rng.sample(StandardNormal);
                    (f, u + sigma * du, v + sigma * dv)
                })
                .collect(),
        })
        .collect()
}

pub fn add_noise(tracks: &[FeatureTrack], noise_var: f64, seed: u64) -> Result<Vec<FeatureTrack>> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidInput("noise variance must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(add_noise_with(tracks, noise_var.sqrt(), &mut rng))
}

/// Deterministic child seed from a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Errors of one trial: estimated minus true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub trial: usize,
    pub noise_var: f64,
    /// `(Δslope, Δintercept px)` per measurement.
    pub line_errors: Vec<(f64, f64)>,
    /// `[Δx, Δy, Δz, Δphi, Δtheta, Δpsi]`.
    pub pose_error: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub noise_var: f64,
    pub trials: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub pose_error_mean: [f64; 6],
    pub pose_error_std: [f64; 6],
    pub slope_error_std: Vec<f64>,
    pub intercept_error_std: Vec<f64>,
    /// Pearson correlation of slope and intercept errors, per measurement.
    pub line_error_correlation: Vec<f64>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub samples: Vec<ErrorSample>,
    pub summary: MonteCarloSummary,
}

/// Runs one trial. Noise draws depend on the master seed and trial index
/// only, so trial `t` sees the same standardized noise at every noise level.
pub fn run_trial(
    config: &ScenarioConfig,
    synthetic: &[SyntheticMeasurement],
    chain: &KinematicChain,
    noise_var: f64,
    trial: usize,
) -> Result<ErrorSample> {
    let sigma = noise_var.sqrt();
    let t = trial as u64;
    let mut measurements = Vec::with_capacity(synthetic.len());
    let mut line_errors = Vec::with_capacity(synthetic.len());
    for (k, syn) in synthetic.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[t, k as u64, 0]));
        let noisy = add_noise_with(&syn.track_file.tracks, sigma, &mut rng);
        let kept = filter_tracks(&noisy, config.stage1.min_track_len, config.stage1.min_motion_px);
        let stage1 = Stage1Config {
            seed: derive_seed(config.seed, &[t, k as u64, 1]),
            ..config.stage1
        };
        let obs = recover_axis(&kept, &config.intrinsics, &stage1)?;
        let (m_est, b_est) = obs.line.slope_intercept()?;
        let (m_true, b_true) = syn.true_line.slope_intercept()?;
        line_errors.push((m_est - m_true, b_est - b_true));
        measurements.push(Measurement {
            stage1_residual: Some(obs.residual),
            ..Measurement::new(syn.track_file.joint_angles.clone(), obs.line)
        });
    }
    let stage2 = Stage2Config {
        seed: derive_seed(config.seed, &[t, u64::MAX]),
        ..config.stage2.clone()
    };
    let result = estimate_pose(&measurements, chain, &config.intrinsics, &stage2)?;
    Ok(ErrorSample {
        trial,
        noise_var,
        line_errors,
        pose_error: pose_difference(&result.pose, &config.camera_pose),
    })
}

/// Component-wise `a − b` with angle differences wrapped.
pub fn pose_difference(a: &Pose6, b: &Pose6) -> [f64; 6] {
    let (a, b) = (a.to_array(), b.to_array());
    let mut d = [0.0; 6];
    for i in 0..6 {
        d[i] = a[i] - b[i];
        if i >= 3 {
            d[i] = wrap_angle(d[i]);
        }
    }
    d
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn summarize(noise_var: f64, trials: usize, samples: &[ErrorSample], failures: Vec<TrialFailure>) -> MonteCarloSummary {
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for i in 0..6 {
        (mean[i], std[i]) = mean_std(samples.iter().map(|s| s.pose_error[i]));
    }
    let n_meas = samples.first().map_or(0, |s| s.line_errors.len());
    let mut slope_std = Vec::with_capacity(n_meas);
    let mut intercept_std = Vec::with_capacity(n_meas);
    let mut corr = Vec::with_capacity(n_meas);
    for k in 0..n_meas {
        let dm: Vec<f64> = samples.iter().map(|s| s.line_errors[k].0).collect();
        let db: Vec<f64> = samples.iter().map(|s| s.line_errors[k].1).collect();
        slope_std.push(mean_std(dm.iter().copied()).1);
        intercept_std.push(mean_std(db.iter().copied()).1);
        corr.push(pearson(&dm, &db));
    }
    MonteCarloSummary {
        noise_var,
        trials,
        succeeded: samples.len(),
        failed: failures.len(),
        pose_error_mean: mean,
        pose_error_std: std,
        slope_error_std: slope_std,
        intercept_error_std: intercept_std,
        line_error_correlation: corr,
        failures,
    }
}

/// Runs `config.trials` trials at the given noise level on `threads`
/// workers (`None` uses the global pool). Results are ordered by trial and
/// identical for any thread count.
pub fn monte_carlo_at(
    config: &ScenarioConfig,
    noise_var: f64,
    threads: Option<usize>,
    progress: &(dyn Fn(usize, &Result<ErrorSample>) + Sync),
) -> Result<MonteCarloRun> {
    config.validate()?;
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidInput("noise variance must be non-negative".into()));
    }
    let chain = config.kinematic_chain()?;
    let synthetic = synthesize_all(config)?;
    let probe: Vec<Measurement> = synthetic
        .iter()
        .map(|s| Measurement::new(s.track_file.joint_angles.clone(), s.true_line))
        .collect();
    let report = validate_measurement_set(&probe, &chain, config.stage2.coincidence_threshold);
    if !report.passed && !config.stage2.force {
        return Err(Error::Degenerate(report));
    }

    let work = || -> Vec<Result<ErrorSample>> {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let r = run_trial(config, &synthetic, &chain, noise_var, t);
                progress(t, &r);
                r
            })
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (trial, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => failures.push(TrialFailure {
                trial,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() * 2 > config.trials {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.trials,
        });
    }
    let summary = summarize(noise_var, config.trials, &samples, failures);
    Ok(MonteCarloRun { samples, summary })
}

/// Monte Carlo at the scenario's own noise level.
pub fn monte_carlo(config: &ScenarioConfig) -> Result<MonteCarloRun> {
    monte_carlo_at(config, config.noise_var, None, &|_, _| {})
}

pub fn write_samples_csv(path: impl AsRef<Path>, samples: &[ErrorSample], measurements: usize) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["trial".to_string(), "noise_var".to_string()];
    for k in 0..measurements {
        header.push(format!("dm_{k}"));
        header.push(format!("db_{k}"));
    }
    header.extend(["dx", "dy", "dz", "dphi", "dtheta", "dpsi"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.trial.to_string(), s.noise_var.to_string()];
        for (dm, db) in &s.line_errors {
            row.push(dm.to_string());
            row.push(db.to_string());
        }
        row.extend(s.pose_error.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
