//! First optimization stage: fit coaxial 3-D circles to the feature arcs of
//! one wrist rotation and report the image of the rotation axis as a line.
//!
//! The reconstruction lives in a normalized scene with the camera fixed at
//! `(0, 0, −1)` looking along +z, so it is defined only up to scale. The
//! exported image line does not depend on that scale.

use std::path::Path;

use nalgebra::{DVector, Vector3};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::conics::{self, Conic, EllipseParams, MIN_FIT_POINTS};
use crate::error::{Error, Result};
use crate::geometry::{fit_line_2d, Line2D, PinholeCamera};
use crate::io;
use crate::kinematics::JointAngles;
use crate::optim::{self, FnProblem, LMOptions, LMReport, RestartStats};

/// Depth at which image-derived initial guesses are placed.
const SEED_DEPTH: f64 = 2.0;
/// Offset from the model origin to the fixed camera center.
const CAMERA_OFFSET: f64 = 1.0;
/// Number of points sampled along the recovered axis for the line fit.
const AXIS_EXPORT_POINTS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrack")]
pub struct FeatureTrack {
    pub id: u64,
    /// `(frame, u, v)` with strictly increasing frame indices.
    pub points: Vec<(u64, f64, f64)>,
}

#[derive(Deserialize)]
struct RawTrack {
    id: u64,
    points: Vec<(u64, f64, f64)>,
}

impl TryFrom<RawTrack> for FeatureTrack {
    type Error = Error;

    fn try_from(r: RawTrack) -> Result<Self> {
        FeatureTrack::new(r.id, r.points)
    }
}

impl FeatureTrack {
    pub fn new(id: u64, points: Vec<(u64, f64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(format!(
                "track {id}: frame indices must be strictly increasing"
            )));
        }
        if points.iter().any(|p| !p.1.is_finite() || !p.2.is_finite()) {
            return Err(Error::InvalidInput(format!("track {id}: non-finite pixel")));
        }
        Ok(FeatureTrack { id, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn pixels(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.1, p.2)).collect()
    }

    /// Total polyline length in pixels.
    pub fn path_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).hypot(w[1].2 - w[0].2))
            .sum()
    }
}

/// One wrist rotation as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub joint_angles: JointAngles,
    pub tracks: Vec<FeatureTrack>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

pub fn parse_track_file(label: &str, text: &str) -> Result<TrackFile> {
    io::parse_json(label, text)
}

pub fn load_track_file(path: impl AsRef<Path>) -> Result<TrackFile> {
    io::read_json(path)
}

pub fn filter_tracks(tracks: &[FeatureTrack], min_length: usize, min_motion_px: f64) -> Vec<FeatureTrack> {
    tracks
        .iter()
        .filter(|t| t.len() >= min_length && t.path_length() >= min_motion_px)
        .cloned()
        .collect()
}

/// Unit direction `Rx(phi) · Rz(theta) · (0, 1, 0)`.
pub fn axis_direction(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(-st, ct * cp, ct * sp)
}

/// Inverse of [`axis_direction`] for a unit vector.
pub fn direction_angles(d: &Vector3<f64>) -> (f64, f64) {
    let d = d.normalize();
    ((-d.x).clamp(-1.0, 1.0).asin(), d.z.atan2(d.y))
}

/// Coaxial circles sharing one rotation axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaxialAxisModel {
    pub axis_point: Vector3<f64>,
    pub theta: f64,
    pub phi: f64,
    pub radii: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl CoaxialAxisModel {
    pub fn new(
        axis_point: Vector3<f64>,
        theta: f64,
        phi: f64,
        radii: Vec<f64>,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        if radii.len() != offsets.len() || radii.is_empty() {
            return Err(Error::InvalidInput(
                "need one radius and one offset per circle".into(),
            ));
        }
        if radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidInput("circle radii must be positive".into()));
        }
        Ok(CoaxialAxisModel {
            axis_point,
            theta,
            phi,
            radii,
            offsets,
        })
    }

    pub fn circle_count(&self) -> usize {
        self.radii.len()
    }

    pub fn direction(&self) -> Vector3<f64> {
        axis_direction(self.theta, self.phi)
    }

    /// Layout: `[p₀ (3), theta, phi, r₁..r_m, s₁..s_m]`.
    pub fn to_params(&self) -> DVector<f64> {
        let mut v = vec![
            self.axis_point.x,
            self.axis_point.y,
            self.axis_point.z,
            self.theta,
            self.phi,
        ];
        v.extend(&self.radii);
        v.extend(&self.offsets);
        DVector::from_vec(v)
    }

    /// Rebuilds a model; radii are taken by magnitude since a circle of
    /// radius −r traces the same set as one of radius r.
    pub fn from_params(params: &DVector<f64>) -> Result<Self> {
        let m = circle_count_for(params.len())?;
        CoaxialAxisModel::new(
            Vector3::new(params[0], params[1], params[2]),
            params[3],
            params[4],
            params.rows(5, m).iter().map(|r| r.abs()).collect(),
            params.rows(5 + m, m).iter().copied().collect(),
        )
    }

    pub fn circle_center(&self, j: usize) -> Vector3<f64> {
        self.axis_point + self.offsets[j] * self.direction()
    }

    /// Samples on circle `j` (0-based).
    pub fn circle_points(&self, j: usize, n_samples: usize) -> Vec<Vector3<f64>> {
        let p = self.to_params();
        raw_circle_points(&p, self.circle_count(), j, n_samples)
    }
}

fn circle_count_for(len: usize) -> Result<usize> {
    if len < 7 || (len - 5) % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "parameter vector of length {len} is not 5 + 2m"
        )));
    }
    Ok((len - 5) / 2)
}

/// Orthonormal basis of the plane normal to `axis_direction(theta, phi)`.
fn circle_basis(theta: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vector3::new(ct, st * cp, st * sp), Vector3::new(0.0, -sp, cp))
}

fn raw_circle_points(p: &DVector<f64>, m: usize, j: usize, n: usize) -> Vec<Vector3<f64>> {
    let (theta, phi) = (p[3], p[4]);
    let d = axis_direction(theta, phi);
    let (e1, e2) = circle_basis(theta, phi);
    let r = p[5 + j];
    let center = Vector3::new(p[0], p[1], p[2]) + p[5 + m + j] * d;
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            center + r * (a.cos() * e1 + a.sin() * e2)
        })
        .collect()
}

fn project_model_point(camera: &PinholeCamera, p: &Vector3<f64>) -> Result<(f64, f64)> {
    camera.project_camera_point(&Vector3::new(p.x, p.y, p.z + CAMERA_OFFSET))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub n_samples: usize,
    pub restarts: usize,
    pub seed: u64,
    pub min_track_len: usize,
    pub min_motion_px: f64,
    /// Residual entry for every point of a track whose candidate ellipse
    /// cannot be formed.
    pub penalty_px: f64,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    pub lm: LMOptions,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            n_samples: 64,
            restarts: 10,
            seed: 0,
            min_track_len: 10,
            min_motion_px: 5.0,
            penalty_px: 1e3,
            fd_step: 1e-6,
            lm: LMOptions {
                max_iterations: 200,
                step_tol: 1e-10,
                reduction_tol: 1e-10,
                ..LMOptions::default()
            },
        }
    }
}

/// Residual vector for raw parameters; one entry per observed track point.
fn residual_raw(
    params: &DVector<f64>,
    tracks: &[Vec<(f64, f64)>],
    camera: &PinholeCamera,
    n_samples: usize,
    penalty: f64,
) -> DVector<f64> {
    let m = tracks.len();
    let total: usize = tracks.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut projected = Vec::with_capacity(n_samples);
    for (j, obs) in tracks.iter().enumerate() {
        projected.clear();
        let conic = raw_circle_points(params, m, j, n_samples)
            .iter()
            .map(|p| project_model_point(camera, p))
            .try_for_each(|uv| uv.map(|uv| projected.push(uv)))
            .and_then(|_| conics::fit_ellipse_direct(&projected));
        match conic {
            Ok(c) => out.extend(
                obs.iter()
                    .map(|&uv| conics::signed_sampson_distance(&c, uv).unwrap_or(penalty)),
            ),
            Err(_) => out.extend(std::iter::repeat_n(penalty, obs.len())),
        }
    }
    DVector::from_vec(out)
}

/// Stage-1 residual: Sampson distance of every observed point to the
/// projection of its model circle.
pub fn stage1_residual(
    model: &CoaxialAxisModel,
    tracks: &[FeatureTrack],
    camera: &PinholeCamera,
    config: &Stage1Config,
) -> Result<DVector<f64>> {
    if model.circle_count() != tracks.len() {
        return Err(Error::InvalidInput(format!(
            "model has {} circles for {} tracks",
            model.circle_count(),
            tracks.len()
        )));
    }
    let obs: Vec<_> = tracks.iter().map(FeatureTrack::pixels).collect();
    Ok(residual_raw(
        &model.to_params(),
        &obs,
        camera,
        config.n_samples,
        config.penalty_px,
    ))
}

/// Image line through the projection of the model's axis.
pub fn project_axis(model: &CoaxialAxisModel, camera: &PinholeCamera) -> Result<Line2D> {
    let lo = model.offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = model.offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_r = model.radii.iter().sum::<f64>() / model.circle_count() as f64;
    let (lo, hi) = if hi - lo < mean_r {
        let mid = 0.5 * (lo + hi);
        (mid - 0.5 * mean_r, mid + 0.5 * mean_r)
    } else {
        (lo, hi)
    };
    let d = model.direction();
    let pts: Vec<(f64, f64)> = (0..AXIS_EXPORT_POINTS)
        .filter_map(|k| {
            let s = lo + (hi - lo) * k as f64 / (AXIS_EXPORT_POINTS - 1) as f64;
            project_model_point(camera, &(model.axis_point + s * d)).ok()
        })
        .collect();
    fit_line_2d(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDiagnostic {
    pub id: u64,
    pub points: usize,
    /// Ellipse fitted directly to the observed points.
    pub observed_ellipse: Option<EllipseParams>,
    /// RMS Sampson distance to the final model ellipse, in pixels.
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisObservation {
    pub line: Line2D,
    /// Final stage-1 residual norm in pixels.
    pub residual: f64,
    pub tracks: Vec<TrackDiagnostic>,
    pub model: CoaxialAxisModel,
    pub restarts: RestartStats,
}

struct TrackSeed {
    ray: Vector3<f64>,
    ellipse: EllipseParams,
}

fn observed_ellipse(points: &[(f64, f64)]) -> Option<EllipseParams> {
    conics::fit_ellipse_direct(points)
        .and_then(|c: Conic| conics::conic_params(&c))
        .ok()
}

/// Starting points derived from the observed ellipses.
struct Seeder {
    seeds: Vec<Option<TrackSeed>>,
    focal: f64,
    axis_point: Vector3<f64>,
    normals: [Vector3<f64>; 2],
}

impl Seeder {
    fn new(tracks: &[Vec<(f64, f64)>], camera: &PinholeCamera) -> Self {
        let focal = 0.5 * (camera.fx + camera.fy);
        let seeds: Vec<Option<TrackSeed>> = tracks
            .iter()
            .map(|pts| {
                observed_ellipse(pts).map(|ellipse| TrackSeed {
                    ray: camera.back_project(ellipse.center.0, ellipse.center.1),
                    ellipse,
                })
            })
            .collect();
        let cam = Vector3::new(0.0, 0.0, -CAMERA_OFFSET);
        let valid: Vec<&TrackSeed> = seeds.iter().flatten().collect();
        let axis_point = if valid.is_empty() {
            let all: Vec<_> = tracks.iter().flatten().collect();
            let n = all.len().max(1) as f64;
            let (u, v) = all.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
            cam + SEED_DEPTH * camera.back_project(u / n, v / n)
        } else {
            valid
                .iter()
                .map(|s| cam + SEED_DEPTH * s.ray)
                .sum::<Vector3<f64>>()
                / valid.len() as f64
        };

        // A circle whose image has axes a ≥ b is tilted from the view ray by
        // acos(b/a) about the image major axis.
        let mut normals = [Vector3::zeros(); 2];
        for (sign, normal) in [1.0, -1.0].iter().zip(normals.iter_mut()) {
            let mut acc = Vector3::zeros();
            for s in &valid {
                let view = s.ray.normalize();
                let (sa, ca) = s.ellipse.angle.sin_cos();
                let minor = Vector3::new(-sa, ca, 0.0);
                let minor = (minor - minor.dot(&view) * view).normalize();
                let cos_t = (s.ellipse.semi_minor / s.ellipse.semi_major).clamp(0.0, 1.0);
                let sin_t = (1.0 - cos_t * cos_t).sqrt();
                let n = cos_t * view + sign * sin_t * minor;
                acc += if acc.dot(&n) < 0.0 { -n } else { n };
            }
            *normal = if acc.norm() > 0.0 {
                acc.normalize()
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            };
        }
        Seeder {
            seeds,
            focal,
            axis_point,
            normals,
        }
    }

    /// Parameters for the given axis direction: offsets where each track's
    /// center ray passes closest to the axis, radii scaled by that depth.
    fn params_for(&self, d: &Vector3<f64>) -> DVector<f64> {
        let m = self.seeds.len();
        let cam = Vector3::new(0.0, 0.0, -CAMERA_OFFSET);
        let (theta, phi) = direction_angles(d);
        let d = axis_direction(theta, phi);
        let mut radii = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(m);
        for (j, seed) in self.seeds.iter().enumerate() {
            let Some(seed) = seed else {
                radii.push(0.1 * SEED_DEPTH);
                offsets.push(0.05 * (j as f64 + 1.0));
                continue;
            };
            let w = seed.ray.normalize();
            let w0 = self.axis_point - cam;
            let b = d.dot(&w);
            let denom = 1.0 - b * b;
            let s = if denom > 1e-9 {
                (b * w.dot(&w0) - d.dot(&w0)) / denom
            } else {
                d.dot(&(cam + SEED_DEPTH * seed.ray - self.axis_point))
            };
            let depth = (self.axis_point + s * d - cam).z;
            let depth = if depth > 0.1 { depth } else { SEED_DEPTH };
            radii.push(seed.ellipse.semi_major * depth / self.focal);
            offsets.push(s);
        }
        let mut v = vec![self.axis_point.x, self.axis_point.y, self.axis_point.z, theta, phi];
        v.extend(radii);
        v.extend(offsets);
        DVector::from_vec(v)
    }
}

/// The literal starting point: axis through the origin along +y, unit
/// radii, offsets stepping by 0.1.
fn canonical_start(m: usize) -> DVector<f64> {
    let mut v = vec![0.0; 5];
    v.extend(std::iter::repeat_n(1.0, m));
    v.extend((1..=m).map(|j| 0.1 * j as f64));
    DVector::from_vec(v)
}

/// Runs the stage-1 fit on one measurement's tracks.
pub fn recover_axis(
    tracks: &[FeatureTrack],
    camera: &PinholeCamera,
    config: &Stage1Config,
) -> Result<AxisObservation> {
    camera.validate()?;
    let usable: Vec<&FeatureTrack> = tracks.iter().filter(|t| t.len() >= MIN_FIT_POINTS).collect();
    if usable.is_empty() {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: tracks.iter().map(FeatureTrack::len).max().unwrap_or(0),
        });
    }
    let obs: Vec<Vec<(f64, f64)>> = usable.iter().map(|t| t.pixels()).collect();
    let m = obs.len();
    let seeder = Seeder::new(&obs, camera);
    let (n_samples, penalty) = (config.n_samples, config.penalty_px);

    let residuals = |p: &DVector<f64>| Ok(residual_raw(p, &obs, camera, n_samples, penalty));
    let problem = FnProblem {
        residuals,
        jacobian: |p: &DVector<f64>| optim::central_difference_jacobian(residuals, p, config.fd_step),
    };
    let sampler = |rng: &mut ChaCha8Rng, i: usize| match i {
        0 => canonical_start(m),
        1 | 2 => seeder.params_for(&seeder.normals[i - 1]),
        _ => {
            let d: [f64; 3] = UnitSphere.sample(rng);
            seeder.params_for(&Vector3::from(d))
        }
    };
    let outcome = optim::with_restarts(config.restarts, config.seed, sampler, |x0| {
        optim::levenberg_marquardt(&problem, x0, &config.lm)
    })?;
    let best: &LMReport = &outcome.best;
    if outcome.converged == 0 {
        return Err(Error::NotConverged {
            best_residual: best.residual_norm,
        });
    }
    let model = CoaxialAxisModel::from_params(&best.params)?;
    let line = project_axis(&model, camera)?;
    let final_res = residual_raw(&best.params, &obs, camera, n_samples, penalty);
    let mut offset = 0;
    let diagnostics = usable
        .iter()
        .zip(&obs)
        .map(|(t, pts)| {
            let block = final_res.rows(offset, pts.len());
            offset += pts.len();
            TrackDiagnostic {
                id: t.id,
                points: pts.len(),
                observed_ellipse: observed_ellipse(pts),
                rms_residual: (block.norm_squared() / pts.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(AxisObservation {
        line,
        residual: best.residual_norm,
        tracks: diagnostics,
        model,
        restarts: outcome.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn camera() -> PinholeCamera {
        PinholeCamera::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn truth_model() -> CoaxialAxisModel {
        CoaxialAxisModel::new(
            Vector3::new(0.05, -0.02, 0.4),
            0.5,
            -0.9,
            vec![0.05, 0.07, 0.09],
            vec![0.0, 0.04, 0.08],
        )
        .unwrap()
    }

    /// Tracks sampled from a model's circles through the fixed camera.
    fn tracks_from(model: &CoaxialAxisModel, frames: usize, sweep: f64) -> Vec<FeatureTrack> {
        let d = model.direction();
        let (e1, e2) = circle_basis(model.theta, model.phi);
        (0..model.circle_count())
            .map(|j| {
                let c = model.circle_center(j);
                let phase = 1.3 * j as f64;
                let pts = (0..frames)
                    .map(|k| {
                        let a = phase + sweep * k as f64 / (frames - 1) as f64;
                        let p = c + model.radii[j] * (a.cos() * e1 + a.sin() * e2);
                        assert!(((p - c).dot(&d)).abs() < 1e-12);
                        let (u, v) = project_model_point(&camera(), &p).unwrap();
                        (k as u64, u, v)
                    })
                    .collect();
                FeatureTrack::new(j as u64, pts).unwrap()
            })
            .collect()
    }

    fn truth_line(model: &CoaxialAxisModel) -> Line2D {
        let d = model.direction();
        let pts: Vec<_> = [-0.2, 0.3]
            .iter()
            .map(|s| project_model_point(&camera(), &(model.axis_point + *s * d)).unwrap())
            .collect();
        fit_line_2d(&pts).unwrap()
    }

    #[test]
    fn direction_examples() {
        assert!((axis_direction(0.0, 0.0) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        // Rz(π/2) maps +y to −x
        assert!((axis_direction(FRAC_PI_2, 0.0) - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        let d = axis_direction(0.3, -1.1);
        let (t, p) = direction_angles(&d);
        assert!((axis_direction(t, p) - d).norm() < 1e-14);
    }

    #[test]
    fn filter_examples() {
        let short = FeatureTrack::new(0, vec![(0, 1.0, 1.0), (1, 2.0, 2.0)]).unwrap();
        let still = FeatureTrack::new(1, (0..50).map(|k| (k, 100.0, 100.0)).collect()).unwrap();
        // quarter arc of radius 30 px: arc length ≈ 47 px
        let arc = FeatureTrack::new(
            2,
            (0..40)
                .map(|k| {
                    let a = FRAC_PI_2 * k as f64 / 39.0;
                    (k, 300.0 + 30.0 * a.cos(), 200.0 + 30.0 * a.sin())
                })
                .collect(),
        )
        .unwrap();
        let kept = filter_tracks(&[short, still, arc], 10, 5.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, 2);
    }

    #[test]
    fn frames_must_increase() {
        assert!(FeatureTrack::new(0, vec![(1, 0.0, 0.0), (1, 1.0, 1.0)]).is_err());
        let text = r#"{"joint_angles":[0.0],"tracks":[{"id":3,"points":[[2,1.0,1.0],[1,2.0,2.0]]}]}"#;
        assert!(parse_track_file("t.json", text).is_err());
    }

    #[test]
    fn circle_points_lie_on_circle() {
        let model =
            CoaxialAxisModel::new(Vector3::zeros(), 0.0, FRAC_PI_2, vec![1.0], vec![0.0]).unwrap();
        let d = model.direction();
        assert!((d - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let pts = model.circle_points(0, 4);
        assert_eq!(pts.len(), 4);
        for p in pts {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!(p.z.abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_layout() {
        let m = truth_model();
        let p = m.to_params();
        assert_eq!(p.len(), 5 + 2 * m.circle_count());
        assert_eq!(CoaxialAxisModel::from_params(&p).unwrap(), m);
        assert!(CoaxialAxisModel::from_params(&DVector::zeros(8)).is_err());
    }

    #[test]
    fn residual_vanishes_at_generating_model() {
        let model = truth_model();
        let tracks = tracks_from(&model, 40, 5.0);
        let cfg = Stage1Config::default();
        let r = stage1_residual(&model, &tracks, &camera(), &cfg).unwrap();
        assert_eq!(r.len(), 120);
        assert!(r.norm() < 1e-6, "{}", r.norm());
    }

    #[test]
    fn residual_grows_off_truth() {
        let model = truth_model();
        let tracks = tracks_from(&model, 40, 5.0);
        let cfg = Stage1Config::default();
        let base = stage1_residual(&model, &tracks, &camera(), &cfg).unwrap().norm();
        let mut bigger = model.clone();
        bigger.radii[1] *= 1.1;
        let r = stage1_residual(&bigger, &tracks, &camera(), &cfg).unwrap().norm();
        assert!(r > base + 1e-3);

        // ±1% coordinate probes from truth
        let p = model.to_params();
        for i in 0..p.len() {
            for sign in [-1.0, 1.0] {
                let mut q = p.clone();
                q[i] += sign * 0.01 * p[i].abs().max(0.01);
                let probe = CoaxialAxisModel::from_params(&q).unwrap();
                let r = stage1_residual(&probe, &tracks, &camera(), &cfg).unwrap().norm();
                assert!(r > base, "coordinate {i} sign {sign}: {r} vs {base}");
            }
        }
    }

    #[test]
    fn scale_gauge_keeps_projections() {
        let model = truth_model();
        let lambda = 1.7;
        let cam = Vector3::new(0.0, 0.0, -CAMERA_OFFSET);
        let mut scaled = model.clone();
        scaled.axis_point = cam + lambda * (model.axis_point - cam);
        scaled.radii.iter_mut().for_each(|r| *r *= lambda);
        scaled.offsets.iter_mut().for_each(|s| *s *= lambda);
        for j in 0..model.circle_count() {
            for (a, b) in model.circle_points(j, 16).iter().zip(scaled.circle_points(j, 16)) {
                let pa = project_model_point(&camera(), a).unwrap();
                let pb = project_model_point(&camera(), &b).unwrap();
                assert!((pa.0 - pb.0).abs() < 1e-9 && (pa.1 - pb.1).abs() < 1e-9);
            }
        }
        let (la, lb) = (project_axis(&model, &camera()).unwrap(), project_axis(&scaled, &camera()).unwrap());
        let (a, b) = (la.normal_form(), lb.normal_form());
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9 && (a.2 - b.2).abs() < 1e-6);
    }

    #[test]
    fn recovers_noiseless_axis() {
        let model = truth_model();
        let tracks = tracks_from(&model, 60, 5.2);
        let obs = recover_axis(&tracks, &camera(), &Stage1Config::default()).unwrap();
        let (m_true, b_true) = truth_line(&model).slope_intercept().unwrap();
        let (m, b) = obs.line.slope_intercept().unwrap();
        assert!((m - m_true).abs() < 1e-4, "slope {m} vs {m_true}");
        assert!((b - b_true).abs() < 0.1, "intercept {b} vs {b_true}");
        assert!(obs.residual < 1e-6);
    }

    #[test]
    fn too_short_track_is_rejected() {
        let t = FeatureTrack::new(0, (0..5).map(|k| (k, k as f64, (k * k) as f64)).collect()).unwrap();
        assert!(matches!(
            recover_axis(&[t], &camera(), &Stage1Config::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    proptest! {
        #[test]
        fn direction_is_unit(t in -10.0..10.0f64, p in -10.0..10.0f64) {
            prop_assert!((axis_direction(t, p).norm() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn centers_are_collinear(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
            t in -3.0..3.0f64, p in -3.0..3.0f64,
            offsets in proptest::collection::vec(-2.0..2.0f64, 3..6),
        ) {
            let m = offsets.len();
            let model = CoaxialAxisModel::new(Vector3::new(x, y, z), t, p, vec![0.3; m], offsets).unwrap();
            let d = model.direction();
            let c0 = model.circle_center(0);
            for j in 1..m {
                let off = model.circle_center(j) - c0;
                prop_assert!(off.cross(&d).norm() < 1e-12);
            }
            for j in 0..m {
                for q in model.circle_points(j, 8) {
                    let rel = q - model.circle_center(j);
                    prop_assert!(rel.dot(&d).abs() < 1e-12);
                    prop_assert!((rel.norm() - 0.3).abs() < 1e-12);
                }
            }
        }
    }
}
