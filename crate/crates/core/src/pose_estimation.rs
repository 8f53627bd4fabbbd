//! Second optimization stage: recover the camera pose in the arm frame from
//! a set of observed rotation-axis lines, plus the measurement-set checks
//! that reject configurations where the position is unobservable.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Matrix6, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_to_transform, rotation_zyx, transform_to_pose, Line2D, PinholeCamera, Pose6, RigidTransform};
use crate::kinematics::{axis_test_points, JointAngles, KinematicChain};
use crate::optim::{self, LMOptions, LeastSquaresProblem, RestartStats};

/// Complex-step size.
pub const COMPLEX_STEP: f64 = 1e-20;
/// Largest accepted condition number of `JᵀJ`.
pub const MAX_CONDITION: f64 = 1e12;
/// Attempts per restart at drawing a pose that sees every test point.
const MAX_DRAWS: usize = 1000;

/// One observed rotation: joint angles and the image line of the final
/// joint's axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub joint_angles: JointAngles,
    pub line: Line2D,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    /// Stage-1 residual norm, if the line came from a circle fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_residual: Option<f64>,
}

fn unit_weight() -> f64 {
    1.0
}

impl Measurement {
    pub fn new(joint_angles: JointAngles, line: Line2D) -> Self {
        Measurement {
            joint_angles,
            line,
            weight: 1.0,
            stage1_residual: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidInput("measurement weight must be positive".into()));
        }
        self.weight = weight;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub restarts: usize,
    pub seed: u64,
    /// Restart positions are drawn from `[−b, b]³`.
    pub box_half_width: f64,
    pub z_values: Vec<f64>,
    /// Wrist centers closer than this to their centroid count as one position.
    pub coincidence_threshold: f64,
    /// Run even when validation fails.
    pub force: bool,
    pub lm: LMOptions,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            restarts: 20,
            seed: 0,
            box_half_width: 2.0,
            z_values: vec![0.0, 0.1],
            coincidence_threshold: 0.01,
            force: false,
            lm: LMOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub pose: Pose6,
    /// Diagonal of `(JᵀJ)⁻¹`; absent when the Jacobian is rank deficient.
    /// Known to be optimistic for real tracking noise.
    pub variance: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Matrix6<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_error: Option<String>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub restarts: RestartStats,
    pub validation: ValidationReport,
}

/// Measurement data reduced to what the residual touches.
#[derive(Debug, Clone)]
pub struct Stage2Data {
    points: Vec<Vec<Vector3<f64>>>,
    lines: Vec<(f64, f64, f64)>,
    sqrt_weights: Vec<f64>,
    camera: PinholeCamera,
}

impl Stage2Data {
    pub fn new(
        measurements: &[Measurement],
        chain: &KinematicChain,
        camera: &PinholeCamera,
        z_values: &[f64],
    ) -> Result<Self> {
        if measurements.is_empty() {
            return Err(Error::InvalidInput("no measurements".into()));
        }
        camera.validate()?;
        let mut points = Vec::with_capacity(measurements.len());
        for m in measurements {
            if !(m.weight > 0.0) || !m.weight.is_finite() {
                return Err(Error::InvalidInput("measurement weight must be positive".into()));
            }
            points.push(axis_test_points(chain, &m.joint_angles, z_values)?);
        }
        Ok(Stage2Data {
            points,
            lines: measurements.iter().map(|m| m.line.normal_form()).collect(),
            sqrt_weights: measurements.iter().map(|m| m.weight.sqrt()).collect(),
            camera: *camera,
        })
    }

    /// Same data with every weight set to one.
    pub fn unweighted(&self) -> Self {
        Stage2Data {
            sqrt_weights: vec![1.0; self.sqrt_weights.len()],
            ..self.clone()
        }
    }

    pub fn residual_len(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }

    pub fn test_points(&self) -> &[Vec<Vector3<f64>>] {
        &self.points
    }

    /// Residual over any scalar type that carries real arithmetic, so the
    /// same path serves plain and complex-step evaluation.
    pub fn residual_generic<T>(&self, x: &[T]) -> Result<Vec<T>>
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        if x.len() != 6 {
            return Err(Error::InvalidInput("pose parameter vector must have length 6".into()));
        }
        let rot = rotation_zyx(x[3], x[4], x[5]);
        let t = Vector3::new(x[0], x[1], x[2]);
        let cam = &self.camera;
        let (fx, fy) = (T::from_real(cam.fx), T::from_real(cam.fy));
        let (cx, cy) = (T::from_real(cam.cx), T::from_real(cam.cy));
        let mut out = Vec::with_capacity(self.residual_len());
        for (k, pts) in self.points.iter().enumerate() {
            let (nx, ny, c) = self.lines[k];
            let w = T::from_real(self.sqrt_weights[k]);
            for p in pts {
                let p = Vector3::new(T::from_real(p.x), T::from_real(p.y), T::from_real(p.z));
                let pc = rot.transpose() * (p - t);
                if !(pc.z.real() > 0.0) {
                    return Err(Error::MeasurementBehindCamera { measurement: k });
                }
                let u = fx * pc.x / pc.z + cx;
                let v = fy * pc.y / pc.z + cy;
                out.push(w * (T::from_real(nx) * u + T::from_real(ny) * v + T::from_real(c)));
            }
        }
        Ok(out)
    }

    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.residual_generic(x.as_slice()).map(DVector::from_vec)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        jacobian_complex_step(|z| self.residual_generic(z), x)
    }

    /// Whether every test point lies in front of a camera at `x`.
    fn sees_all(&self, x: &DVector<f64>) -> bool {
        self.residual(x).is_ok()
    }
}

impl LeastSquaresProblem for Stage2Data {
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.residual(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Stage2Data::jacobian(self, x)
    }
}

/// Stage-2 residual at pose `x`: per measurement and test point, the
/// weighted signed distance of the projected point to the observed line.
pub fn stage2_residual(
    x: &Pose6,
    measurements: &[Measurement],
    chain: &KinematicChain,
    camera: &PinholeCamera,
    z_values: &[f64],
) -> Result<DVector<f64>> {
    Stage2Data::new(measurements, chain, camera, z_values)?.residual(&DVector::from_row_slice(&x.to_array()))
}

/// Jacobian by complex step: column `i` is `Im r(x + i·h·eᵢ) / h`.
pub fn jacobian_complex_step<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&[Complex<f64>]) -> Result<Vec<Complex<f64>>>,
{
    let mut z: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        z[i].im = COMPLEX_STEP;
        let r = f(&z)?;
        z[i].im = 0.0;
        let col: Vec<f64> = r.iter().map(|c| c.im / COMPLEX_STEP).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonAnalytic { column: i });
        }
        cols.push(DVector::from_vec(col));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Full `(JᵀJ)⁻¹` via the SVD of `J`.
pub fn covariance_matrix(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = j.ncols();
    if j.nrows() < n || n == 0 {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let svd = j.clone().svd(false, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let vt = svd.v_t.expect("requested V");
    let mut scaled = vt.transpose();
    for (k, sk) in s.iter().enumerate() {
        let inv = 1.0 / (sk * sk);
        scaled.column_mut(k).scale_mut(inv);
    }
    Ok(scaled * vt)
}

/// Diagonal of `(JᵀJ)⁻¹`.
pub fn covariance_from_jacobian(j: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(covariance_matrix(j)?.diagonal().iter().copied().collect())
}

pub fn validate_measurement_set(
    measurements: &[Measurement],
    chain: &KinematicChain,
    coincidence_threshold: f64,
) -> ValidationReport {
    let angles: Vec<JointAngles> = measurements.iter().map(|m| m.joint_angles.clone()).collect();
    validate_joint_sets(&angles, chain, coincidence_threshold)
}

/// Validation on joint angles alone; the observed lines play no part.
pub fn validate_joint_sets(
    angles: &[JointAngles],
    chain: &KinematicChain,
    coincidence_threshold: f64,
) -> ValidationReport {
    let mut reasons = Vec::new();
    let n = angles.len();
    if n < 3 {
        reasons.push(format!(
            "{n} measurement(s) given; a minimum of three measurements is required"
        ));
    }
    let mut centers = Vec::with_capacity(n);
    for (k, a) in angles.iter().enumerate() {
        match chain.wrist_center(a) {
            Ok(c) => centers.push(c),
            Err(e) => reasons.push(format!("measurement {k}: {e}")),
        }
    }
    if centers.len() == n && n >= 2 {
        let centroid = centers.iter().sum::<Vector3<f64>>() / n as f64;
        let spread = centers
            .iter()
            .map(|c| (c - centroid).norm())
            .fold(0.0, f64::max);
        if spread <= coincidence_threshold {
            reasons.push(format!(
                "single crossing: all wrist centers lie within {spread:.4} m of one point, \
                 so the camera position is underdetermined"
            ));
        }
    }
    ValidationReport {
        passed: reasons.is_empty(),
        reasons,
    }
}

/// Uniformly distributed rotation as roll/pitch/yaw.
fn random_orientation(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let q = loop {
        let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-6 {
            break v;
        }
    };
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q));
    let t = RigidTransform::rotation_only(*rot.to_rotation_matrix().matrix())
        .expect("unit quaternion yields a rotation");
    let p = transform_to_pose(&t).pose;
    [p.phi, p.theta, p.psi]
}

fn random_start(rng: &mut ChaCha8Rng, data: &Stage2Data, half_width: f64) -> DVector<f64> {
    let mut draw = || {
        let mut v = [0.0; 6];
        for c in v.iter_mut().take(3) {
            *c = rng.random_range(-half_width..=half_width);
        }
        v[3..].copy_from_slice(&random_orientation(rng));
        DVector::from_row_slice(&v)
    };
    let mut x = draw();
    for _ in 0..MAX_DRAWS {
        if data.sees_all(&x) {
            break;
        }
        x = draw();
    }
    x
}

pub fn estimate_pose(
    measurements: &[Measurement],
    chain: &KinematicChain,
    camera: &PinholeCamera,
    config: &Stage2Config,
) -> Result<CalibrationResult> {
    let validation = validate_measurement_set(measurements, chain, config.coincidence_threshold);
    if !validation.passed && !config.force {
        return Err(Error::Degenerate(validation));
    }
    if !(config.box_half_width > 0.0) {
        return Err(Error::InvalidInput("restart box must have positive size".into()));
    }
    let data = Stage2Data::new(measurements, chain, camera, &config.z_values)?;
    let outcome = optim::with_restarts(
        config.restarts,
        config.seed,
        |rng, _| random_start(rng, &data, config.box_half_width),
        |x0| optim::levenberg_marquardt(&data, x0, &config.lm),
    )?;
    if outcome.converged == 0 {
        return Err(Error::NotConverged {
            best_residual: outcome.best.residual_norm,
        });
    }
    let best = &outcome.best;
    // one of two Euler triples per rotation; report the one with |pitch| ≤ π/2
    let p = &best.params;
    let pose = transform_to_pose(&pose_to_transform(&Pose6::new(p[0], p[1], p[2], p[3], p[4], p[5]))).pose;
    let x = DVector::from_row_slice(&pose.to_array());
    let jac = data.unweighted().jacobian(&x)?;
    let (variance, covariance, covariance_error) = match covariance_matrix(&jac) {
        Ok(c) => {
            let mut v = [0.0; 6];
            v.iter_mut().zip(c.diagonal().iter()).for_each(|(o, d)| *o = *d);
            (Some(v), Some(Matrix6::from_iterator(c.iter().copied())), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(CalibrationResult {
        pose,
        variance,
        covariance,
        covariance_error,
        residual_norm: best.residual_norm,
        iterations: best.iterations,
        restarts: outcome.stats(),
        validation,
    })
}
