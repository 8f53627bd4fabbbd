//! Spatial primitives: 6-DoF poses, homogeneous transforms, pinhole
//! projection and 2-D lines.
//!
//! Euler convention: intrinsic Z–Y–X, `R = Rz(psi) · Ry(theta) · Rx(phi)`
//! with `phi` = roll, `theta` = pitch, `psi` = yaw. Camera frames use
//! x right, y down, z forward.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{ComplexField, Matrix2, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on orthonormality of a rotation block.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Six-element pose: translation in meters, roll/pitch/yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl Pose6 {
    /// Builds a pose with angles wrapped to (−π, π].
    pub fn new(x: f64, y: f64, z: f64, phi: f64, theta: f64, psi: f64) -> Self {
        Pose6 {
            x,
            y,
            z,
            phi: wrap_angle(phi),
            theta: wrap_angle(theta),
            psi: wrap_angle(psi),
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Pose6::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.phi, self.theta, self.psi]
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Re-wraps the angle fields; useful after deserializing raw input.
    pub fn wrapped(self) -> Self {
        Pose6::from_array(self.to_array())
    }
}

/// Rotation `Rz(psi) · Ry(theta) · Rx(phi)`, generic so that the same code
/// path serves real and complex-step evaluation.
pub fn rotation_zyx<T>(phi: T, theta: T, psi: T) -> Matrix3<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (sf, cf) = (phi.sin(), phi.cos());
    let (st, ct) = (theta.sin(), theta.cos());
    let (sp, cp) = (psi.sin(), psi.cos());
    Matrix3::new(
        cp * ct,
        cp * st * sf - sp * cf,
        cp * st * cf + sp * sf,
        sp * ct,
        sp * st * sf + cp * cf,
        sp * st * cf - cp * sf,
        -st,
        ct * sf,
        ct * cf,
    )
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    rotation_zyx(a, 0.0, 0.0)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    rotation_zyx(0.0, a, 0.0)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    rotation_zyx(0.0, 0.0, a)
}

/// 4×4 homogeneous rigid transform. `T_BA` maps coordinates in frame A to
/// coordinates in frame B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            matrix: Matrix4::identity(),
        }
    }

    /// Assembles a transform from a rotation block and translation; the
    /// rotation is checked for orthonormality and positive determinant.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self::from_parts_unchecked(rotation, translation);
        if !t.is_valid(ROTATION_TOLERANCE) {
            return Err(Error::InvalidInput(
                "rotation block is not orthonormal with determinant +1".into(),
            ));
        }
        Ok(t)
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        RigidTransform { matrix: m }
    }

    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self> {
        let bottom = matrix.fixed_view::<1, 4>(3, 0);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(Error::InvalidInput(
                "bottom row of a homogeneous transform must be [0 0 0 1]".into(),
            ));
        }
        let t = RigidTransform { matrix };
        if !t.is_valid(ROTATION_TOLERANCE) {
            return Err(Error::InvalidInput(
                "rotation block is not orthonormal with determinant +1".into(),
            ));
        }
        Ok(t)
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), t)
    }

    pub fn rotation_only(r: Matrix3<f64>) -> Result<Self> {
        Self::from_parts(r, Vector3::zeros())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation()))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = self.rotation();
        let orth = (r.transpose() * r - Matrix3::identity()).amax();
        let row = self.matrix.fixed_view::<1, 4>(3, 0);
        self.matrix.iter().all(|v| v.is_finite())
            && orth <= tol
            && (r.determinant() - 1.0).abs() <= tol
            && row[0] == 0.0
            && row[1] == 0.0
            && row[2] == 0.0
            && row[3] == 1.0
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        let r = self.rotation() * rhs.rotation();
        let t = self.rotation() * rhs.translation() + self.translation();
        RigidTransform::from_parts_unchecked(r, t)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        *self * *rhs
    }
}

pub fn pose_to_transform(p: &Pose6) -> RigidTransform {
    RigidTransform::from_parts_unchecked(rotation_zyx(p.phi, p.theta, p.psi), p.translation())
}

/// Result of decomposing a transform into a [`Pose6`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub pose: Pose6,
    /// Pitch within 1e-9 of ±π/2; roll was fixed to zero.
    pub gimbal_lock: bool,
}

pub fn transform_to_pose(t: &RigidTransform) -> EulerDecomposition {
    let r = t.rotation();
    let tr = t.translation();
    let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
    let pitch = (-r[(2, 0)]).atan2(cos_pitch);
    let gimbal_lock = cos_pitch < 1e-9;
    let (roll, yaw) = if gimbal_lock {
        (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
    } else {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    };
    EulerDecomposition {
        pose: Pose6::new(tr.x, tr.y, tr.z, roll, pitch, yaw),
        gimbal_lock,
    }
}

/// Linear (rectified) pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidInput("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        Ok(())
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Result<(f64, f64)> {
        if !(p.z > 0.0) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::BehindCamera { depth: p.z });
        }
        Ok((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Pixel ray direction with unit depth.
    pub fn back_project(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Projects a world point through `camera_from_world` (the inverse of the
/// camera's pose in the world).
pub fn project(
    cam: &PinholeCamera,
    camera_from_world: &RigidTransform,
    point: &Vector3<f64>,
) -> Result<(f64, f64)> {
    cam.project_camera_point(&camera_from_world.transform_point(point))
}

/// A 2-D line `nx·u + ny·v + c = 0` with unit normal. The sign is fixed so
/// that `ny > 0` (or `nx > 0` for vertical lines, |ny| < 1e-12); with that choice the
/// signed distance equals `(−m·u + v − b)/√(m²+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "LineRepr", try_from = "LineRepr")]
pub struct Line2D {
    nx: f64,
    ny: f64,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct LineRepr {
    nx: f64,
    ny: f64,
    c: f64,
}

impl From<Line2D> for LineRepr {
    fn from(l: Line2D) -> Self {
        LineRepr {
            nx: l.nx,
            ny: l.ny,
            c: l.c,
        }
    }
}

impl TryFrom<LineRepr> for Line2D {
    type Error = Error;

    fn try_from(r: LineRepr) -> Result<Self> {
        Line2D::from_normal(r.nx, r.ny, r.c)
    }
}

/// Below this |ny| the slope-intercept form is not exported.
pub const VERTICAL_NY: f64 = 1e-6;

impl Line2D {
    pub fn from_normal(nx: f64, ny: f64, c: f64) -> Result<Self> {
        let n = nx.hypot(ny);
        if !(n > 0.0) || !n.is_finite() || !c.is_finite() {
            return Err(Error::InvalidInput("line normal must be non-zero".into()));
        }
        let (mut nx, mut ny, mut c) = (nx / n, ny / n, c / n);
        if ny < 0.0 || (ny.abs() < 1e-12 && nx < 0.0) {
            nx = -nx;
            ny = -ny;
            c = -c;
        }
        Ok(Line2D { nx, ny, c })
    }

    pub fn from_slope_intercept(m: f64, b: f64) -> Self {
        let s = (m * m + 1.0).sqrt();
        Line2D {
            nx: -m / s,
            ny: 1.0 / s,
            c: -b / s,
        }
    }

    pub fn normal_form(&self) -> (f64, f64, f64) {
        (self.nx, self.ny, self.c)
    }

    pub fn slope_intercept(&self) -> Result<(f64, f64)> {
        if self.ny.abs() <= VERTICAL_NY {
            return Err(Error::VerticalLine);
        }
        Ok((-self.nx / self.ny, -self.c / self.ny))
    }

    pub fn signed_distance(&self, u: f64, v: f64) -> f64 {
        self.nx * u + self.ny * v + self.c
    }
}

pub fn point_line_distance(line: &Line2D, t: (f64, f64)) -> f64 {
    line.signed_distance(t.0, t.1)
}

/// Total-least-squares line through a point set.
pub fn fit_line_2d(points: &[(f64, f64)]) -> Result<Line2D> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let (su, sv) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(u, v)| (a + u, b + v));
    let (mu, mv) = (su / n, sv / n);
    let mut cov = Matrix2::<f64>::zeros();
    for &(u, v) in points {
        let (du, dv) = (u - mu, v - mv);
        cov[(0, 0)] += du * du;
        cov[(0, 1)] += du * dv;
        cov[(1, 1)] += dv * dv;
    }
    cov[(1, 0)] = cov[(0, 1)];
    let scale = mu.abs().max(mv.abs()).max(1.0);
    if cov[(0, 0)] + cov[(1, 1)] <= (1e-12 * scale).powi(2) * n {
        return Err(Error::CoincidentPoints);
    }
    // direction of largest spread
    let dir = 0.5 * (2.0 * cov[(0, 1)]).atan2(cov[(0, 0)] - cov[(1, 1)]);
    let (nx, ny) = (-dir.sin(), dir.cos());
    Line2D::from_normal(nx, ny, -(nx * mu + ny * mv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_pose_is_identity_matrix() {
        let t = pose_to_transform(&Pose6::default());
        assert_eq!(*t.matrix(), Matrix4::identity());
        let back = transform_to_pose(&RigidTransform::identity());
        assert_eq!(back.pose, Pose6::default());
        assert!(!back.gimbal_lock);
    }

    #[test]
    fn pure_translation() {
        let t = pose_to_transform(&Pose6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0));
        assert_eq!(t.rotation(), Matrix3::identity());
        assert_eq!(t.translation(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let t = pose_to_transform(&Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2));
        // hand-written Rz(π/2)
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((t.rotation() - expected).amax() < 1e-15);
        let x = t.transform_point(&Vector3::x());
        assert!((x - Vector3::y()).norm() < 1e-15);
        let back = transform_to_pose(&t).pose;
        assert!((back.psi - FRAC_PI_2).abs() < 1e-15);
        assert!(back.phi.abs() < 1e-15 && back.theta.abs() < 1e-15);
    }

    #[test]
    fn euler_matches_elementary_products() {
        let (phi, theta, psi) = (0.3, -0.7, 2.1);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, phi.cos(), -phi.sin(), 0.0, phi.sin(), phi.cos());
        let ry = Matrix3::new(
            theta.cos(),
            0.0,
            theta.sin(),
            0.0,
            1.0,
            0.0,
            -theta.sin(),
            0.0,
            theta.cos(),
        );
        let rz = Matrix3::new(psi.cos(), -psi.sin(), 0.0, psi.sin(), psi.cos(), 0.0, 0.0, 0.0, 1.0);
        let r = rotation_zyx(phi, theta, psi);
        assert!((r - rz * ry * rx).amax() < 1e-15);
    }

    #[test]
    fn gimbal_lock_is_flagged() {
        let p = Pose6::new(0.1, 0.2, 0.3, 0.4, FRAC_PI_2, 1.0);
        let t = pose_to_transform(&p);
        let d = transform_to_pose(&t);
        assert!(d.gimbal_lock);
        assert_eq!(d.pose.phi, 0.0);
        let again = pose_to_transform(&d.pose);
        assert!((again.matrix() - t.matrix()).amax() < 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn from_matrix_rejects_bad_bottom_row() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = 1e-3;
        assert!(RigidTransform::from_matrix(m).is_err());
        let mut s = Matrix4::identity();
        s[(0, 0)] = 2.0;
        assert!(RigidTransform::from_matrix(s).is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = pose_to_transform(&Pose6::new(0.5, -0.3, 0.8, 0.1, -0.2, 0.3));
        let i = t * t.inverse();
        assert!((i.matrix() - Matrix4::identity()).amax() < 1e-15);
    }

    fn cam() -> PinholeCamera {
        PinholeCamera::new(500.0, 500.0, 320.0, 320.0, 640, 640).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        let id = RigidTransform::identity();
        for depth in [0.1, 1.0, 37.0] {
            assert_eq!(project(&c, &id, &Vector3::new(0.0, 0.0, depth)).unwrap(), (320.0, 320.0));
        }
        let (u, v) = project(&c, &id, &Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - 370.0).abs() < 1e-12 && (v - 320.0).abs() < 1e-12);
        assert!(matches!(
            project(&c, &id, &Vector3::new(1.0, 1.0, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(project(&c, &id, &Vector3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(PinholeCamera::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
    }

    #[test]
    fn distance_examples() {
        let horiz = Line2D::from_slope_intercept(0.0, 0.0);
        assert_eq!(point_line_distance(&horiz, (3.0, 4.0)), 4.0);
        let diag = Line2D::from_slope_intercept(1.0, 0.0);
        assert!((point_line_distance(&diag, (0.0, 2f64.sqrt())) - 1.0).abs() < 1e-15);
        assert!(point_line_distance(&diag, (5.0, 5.0)).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_slope_intercept_formula() {
        let (m, b) = (-0.7, 12.5);
        let l = Line2D::from_slope_intercept(m, b);
        for &(u, v) in &[(3.0, -4.0), (100.0, 20.0), (-7.5, 300.0)] {
            let eq = (-m * u + v - b) / (m * m + 1.0f64).sqrt();
            assert!((point_line_distance(&l, (u, v)) - eq).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_matches_sampled_minimum() {
        // brute force: densest sampling of the line around the foot point
        let (m, b) = (1.0, 0.0);
        let l = Line2D::from_slope_intercept(m, b);
        let p = (0.0, 2f64.sqrt());
        let n = 100_000;
        let best = (0..=n)
            .map(|i| {
                let u = -2.0 + 4.0 * i as f64 / n as f64;
                let v = m * u + b;
                ((u - p.0).powi(2) + (v - p.1).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((best - point_line_distance(&l, p).abs()).abs() < 1e-6);
    }

    #[test]
    fn line_fit_examples() {
        let l = fit_line_2d(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap();
        let (m, b) = l.slope_intercept().unwrap();
        assert!((m - 1.0).abs() < 1e-12 && b.abs() < 1e-12);

        let v = fit_line_2d(&[(0.0, 0.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(v.slope_intercept(), Err(Error::VerticalLine)));
        let (nx, ny, c) = v.normal_form();
        assert!((nx - 1.0).abs() < 1e-15 && ny.abs() < 1e-15 && c.abs() < 1e-15);

        let pts: Vec<_> = (0..100)
            .map(|i| {
                let u = i as f64 * 0.37 - 10.0;
                (u, 2.0 * u + 3.0)
            })
            .collect();
        let (m, b) = fit_line_2d(&pts).unwrap().slope_intercept().unwrap();
        assert!((m - 2.0).abs() < 1e-9 && (b - 3.0).abs() < 1e-9);
    }

    #[test]
    fn line_fit_errors() {
        assert!(matches!(
            fit_line_2d(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]),
            Err(Error::CoincidentPoints)
        ));
        assert!(fit_line_2d(&[(1.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn pose_round_trip(
            x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64,
            phi in -3.14..3.14f64, theta in -1.5..1.5f64, psi in -3.14..3.14f64,
        ) {
            let p = Pose6::new(x, y, z, phi, theta, psi);
            let t = pose_to_transform(&p);
            prop_assert!(t.is_valid(1e-9));
            let d = transform_to_pose(&t);
            prop_assert!(!d.gimbal_lock);
            let q = d.pose;
            for (a, b) in p.to_array().iter().zip(q.to_array().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!((pose_to_transform(&q).matrix() - t.matrix()).amax() < 1e-9);
        }

        #[test]
        fn projection_is_ray_invariant(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.1..3.0f64, lambda in 0.01..100.0f64,
        ) {
            let c = cam();
            let id = RigidTransform::identity();
            let p = Vector3::new(x, y, z);
            let (u1, v1) = project(&c, &id, &p).unwrap();
            let (u2, v2) = project(&c, &id, &(p * lambda)).unwrap();
            prop_assert!((u1 - u2).abs() < 1e-9 && (v1 - v2).abs() < 1e-9);
        }

        #[test]
        fn line_fit_permutation_invariant(
            pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..20),
            seed in any::<u64>(),
        ) {
            let a = fit_line_2d(&pts);
            let mut shuffled = pts.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let b = fit_line_2d(&shuffled);
            if let (Ok(a), Ok(b)) = (a, b) {
                // same point set: compare distances of probe points
                for probe in [(0.0, 0.0), (50.0, -20.0), (-80.0, 90.0)] {
                    prop_assert!((a.signed_distance(probe.0, probe.1)
                        - b.signed_distance(probe.0, probe.1)).abs() < 1e-6);
                }
            }
        }
    }
}
