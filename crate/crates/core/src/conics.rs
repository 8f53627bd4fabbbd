//! Direct least-squares ellipse fitting and point-to-conic distances.
//!
//! The fit minimises the algebraic error `‖D·a‖²` under the ellipse
//! constraint `4AC − B² = 1`, solved through the reduced 3×3 eigenproblem
//! (scatter matrix split into quadratic and linear blocks). Points are
//! mean-centred and isotropically scaled before fitting and the conic is
//! mapped back afterwards.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points for a direct ellipse fit.
pub const MIN_FIT_POINTS: usize = 6;

/// General conic `A x² + B xy + C y² + D x + E y + F = 0`, normalised to a
/// unit coefficient vector with `A ≥ 0` (first non-zero coefficient positive
/// when `A = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic {
    coeffs: [f64; 6],
}

/// Geometric parameters of an ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis angle from +u, in (−π/2, π/2].
    pub angle: f64,
}

impl Conic {
    pub fn new(coeffs: [f64; 6]) -> Result<Self> {
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("conic coefficients must be finite and non-zero".into()));
        }
        let sign = coeffs
            .iter()
            .find(|c| **c != 0.0)
            .map(|c| c.signum())
            .unwrap_or(1.0);
        let mut out = [0.0; 6];
        for (o, c) in out.iter_mut().zip(coeffs.iter()) {
            *o = sign * c / norm;
        }
        Ok(Conic { coeffs: out })
    }

    /// Conic of a geometric ellipse.
    pub fn from_ellipse(e: &EllipseParams) -> Result<Self> {
        let (s, c) = e.angle.sin_cos();
        let (a2, b2) = (e.semi_major * e.semi_major, e.semi_minor * e.semi_minor);
        let (x0, y0) = e.center;
        let aa = c * c / a2 + s * s / b2;
        let bb = 2.0 * c * s * (1.0 / a2 - 1.0 / b2);
        let cc = s * s / a2 + c * c / b2;
        let dd = -2.0 * aa * x0 - bb * y0;
        let ee = -bb * x0 - 2.0 * cc * y0;
        let ff = aa * x0 * x0 + bb * x0 * y0 + cc * y0 * y0 - 1.0;
        Conic::new([aa, bb, cc, dd, ee, ff])
    }

    pub fn coefficients(&self) -> [f64; 6] {
        self.coeffs
    }

    pub fn discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.coeffs;
        b * b - 4.0 * a * c
    }

    pub fn is_ellipse(&self) -> bool {
        self.discriminant() < 0.0
    }

    pub fn evaluate(&self, u: f64, v: f64) -> f64 {
        let [a, b, c, d, e, f] = self.coeffs;
        a * u * u + b * u * v + c * v * v + d * u + e * v + f
    }

    pub fn gradient(&self, u: f64, v: f64) -> (f64, f64) {
        let [a, b, c, d, e, _] = self.coeffs;
        (2.0 * a * u + b * v + d, b * u + 2.0 * c * v + e)
    }
}

/// Direct least-squares ellipse fit.
pub fn fit_ellipse_direct(points: &[(f64, f64)]) -> Result<Conic> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    if points.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    let n = points.len() as f64;
    let (su, sv) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(u, v)| (a + u, b + v));
    let (mu, mv) = (su / n, sv / n);
    let mean_dist = points
        .iter()
        .map(|&(u, v)| (u - mu).hypot(v - mv))
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12 * mu.abs().max(mv.abs()).max(1.0)) {
        return Err(Error::DegenerateScatter("points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;

    // scatter blocks: quadratic (x², xy, y²) and linear (x, y, 1)
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for &(u, v) in points {
        let x = (u - mu) * s;
        let y = (v - mv) * s;
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }

    let eig3 = SymmetricEigen::new(s3);
    let (lo, hi) = eig3
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo > 1e-10 * hi) {
        return Err(Error::DegenerateScatter("points are collinear".into()));
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| Error::DegenerateScatter("singular linear scatter".into()))?;
    let t = -(s3_inv * s2.transpose());
    let m = s1 + s2 * t;
    // premultiply by the inverse of the 3×3 constraint block
    let reduced = Matrix3::from_rows(&[
        m.row(2) * 0.5,
        -m.row(1),
        m.row(0) * 0.5,
    ]);

    let scale = reduced.amax().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for ev in reduced.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 * scale {
            continue;
        }
        let Some(vec) = null_vector(&(reduced - Matrix3::identity() * ev.re)) else {
            continue;
        };
        let constraint = 4.0 * vec[0] * vec[2] - vec[1] * vec[1];
        if constraint <= 0.0 {
            continue;
        }
        let lam = ev.re.abs();
        if best.as_ref().map_or(true, |(l, _)| lam < *l) {
            best = Some((lam, vec));
        }
    }
    let (_, quad) = best.ok_or(Error::NotAnEllipse)?;
    let lin = t * quad;

    // undo normalisation: x = s(u − mu), y = s(v − mv)
    let (a, b, c) = (quad[0] * s * s, quad[1] * s * s, quad[2] * s * s);
    let (d1, e1, f1) = (lin[0] * s, lin[1] * s, lin[2]);
    let d = -2.0 * a * mu - b * mv + d1;
    let e = -2.0 * c * mv - b * mu + e1;
    let f = a * mu * mu + b * mu * mv + c * mv * mv - d1 * mu - e1 * mv + f1;
    let conic = Conic::new([a, b, c, d, e, f])?;
    if !conic.is_ellipse() {
        return Err(Error::NotAnEllipse);
    }
    Ok(conic)
}

/// Null vector of a (numerically) rank-2 3×3 matrix via the largest cross
/// product of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r: Vec<Vector3<f64>> = (0..3).map(|i| m.row(i).transpose()).collect();
    let candidates = [r[0].cross(&r[1]), r[0].cross(&r[2]), r[1].cross(&r[2])];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let n = best.norm();
    if n > 0.0 && n.is_finite() {
        Some(best / n)
    } else {
        None
    }
}

pub fn conic_params(c: &Conic) -> Result<EllipseParams> {
    let [a, b, cc, d, e, _] = c.coefficients();
    let det = 4.0 * a * cc - b * b;
    if !(det > 0.0) {
        return Err(Error::NotAnEllipse);
    }
    let x0 = (b * e - 2.0 * cc * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = c.evaluate(x0, y0);
    let mean = 0.5 * (a + cc);
    let radius = (0.25 * (a - cc) * (a - cc) + 0.25 * b * b).sqrt();
    let (lam_small, lam_large) = (mean - radius, mean + radius);
    // both eigenvalues share the sign of A + C for an ellipse
    let ra = -f0 / lam_small;
    let rb = -f0 / lam_large;
    if !(ra > 0.0 && rb > 0.0) || !ra.is_finite() {
        return Err(Error::NotAnEllipse);
    }
    let angle = if radius <= 1e-15 * mean.abs() {
        0.0
    } else {
        // eigenvector of the larger eigenvalue is at 0.5·atan2(B, A − C)
        let minor_dir = 0.5 * b.atan2(a - cc);
        let mut major = minor_dir + FRAC_PI_2;
        while major > FRAC_PI_2 {
            major -= PI;
        }
        while major <= -FRAC_PI_2 {
            major += PI;
        }
        major
    };
    Ok(EllipseParams {
        center: (x0, y0),
        semi_major: ra.sqrt(),
        semi_minor: rb.sqrt(),
        angle,
    })
}

/// Signed first-order distance `Q(p)/‖∇Q(p)‖`; its absolute value is the
/// Sampson distance.
pub fn signed_sampson_distance(c: &Conic, p: (f64, f64)) -> Result<f64> {
    let (u, v) = p;
    let [a, b, cc, d, e, _] = c.coefficients();
    let (gu, gv) = c.gradient(u, v);
    let g = gu.hypot(gv);
    let magnitude = (2.0 * a * u).abs()
        + (b * v).abs()
        + d.abs()
        + (b * u).abs()
        + (2.0 * cc * v).abs()
        + e.abs();
    if !(g > 1e-12 * magnitude) || !g.is_finite() {
        return Err(Error::VanishingGradient);
    }
    Ok(c.evaluate(u, v) / g)
}

pub fn sampson_distance(c: &Conic, p: (f64, f64)) -> Result<f64> {
    signed_sampson_distance(c, p).map(f64::abs)
}
