//! Dense Levenberg–Marquardt with a seeded random-restart driver.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping above this value counts as overflow.
const LAMBDA_MAX: f64 = 1e16;

pub trait LeastSquaresProblem {
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Adapter for a pair of closures.
pub struct FnProblem<R, J> {
    pub residuals: R,
    pub jacobian: J,
}

impl<R, J> LeastSquaresProblem for FnProblem<R, J>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (self.residuals)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        (self.jacobian)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMOptions {
    pub max_iterations: usize,
    pub lambda0: f64,
    /// Damping multiplier after a rejected step.
    pub lambda_up: f64,
    /// Damping divisor after an accepted step.
    pub lambda_down: f64,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tol: f64,
    /// Stop when `‖δ‖ ≤ step_tol · (‖x‖ + step_tol)`.
    pub step_tol: f64,
    /// Stop when `‖r‖` falls below this.
    pub residual_tol: f64,
    /// Stop when an accepted step reduces `‖r‖²` by less than this fraction.
    pub reduction_tol: f64,
    pub seed: u64,
}

impl Default for LMOptions {
    fn default() -> Self {
        LMOptions {
            max_iterations: 200,
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            residual_tol: 1e-12,
            reduction_tol: 1e-14,
            seed: 0,
        }
    }
}

impl LMOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.lambda0,
            self.gradient_tol,
            self.step_tol,
            self.residual_tol,
            self.reduction_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "LM damping and tolerances must be positive".into(),
            ));
        }
        if !(self.lambda_up > 1.0 && self.lambda_down > 1.0) {
            return Err(Error::InvalidInput("LM damping factors must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualTolerance,
    GradientTolerance,
    StepTolerance,
    SmallReduction,
    MaxIterations,
    LambdaOverflow,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        !matches!(self, Termination::MaxIterations | Termination::LambdaOverflow)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LMReport {
    pub params: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub converged: bool,
    /// Residual norm after every accepted step, starting with `x₀`.
    pub history: Vec<f64>,
}

pub fn levenberg_marquardt<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    opts: &LMOptions,
) -> Result<LMReport> {
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial parameters must be finite".into()));
    }
    let mut x = x0.clone();
    let mut r = problem.residuals(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResidual);
    }
    let mut cost = r.norm_squared();
    let mut history = vec![cost.sqrt()];

    let finish = |x: DVector<f64>, cost: f64, iterations, termination: Termination, history| LMReport {
        params: x,
        residual_norm: cost.sqrt(),
        iterations,
        termination,
        converged: termination.is_converged(),
        history,
    };

    if cost.sqrt() <= opts.residual_tol {
        return Ok(finish(x, cost, 0, Termination::ResidualTolerance, history));
    }

    let n = x.len();
    let mut lambda = opts.lambda0;
    let mut scale = DVector::<f64>::zeros(n);
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let jac = problem.jacobian(&x)?;
        if jac.nrows() != r.len() || jac.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "Jacobian is {}×{}, expected {}×{}",
                jac.nrows(),
                jac.ncols(),
                r.len(),
                n
            )));
        }
        let g = jac.tr_mul(&r);
        if g.amax() <= opts.gradient_tol {
            return Ok(finish(x, cost, iterations, Termination::GradientTolerance, history));
        }
        let jtj = jac.tr_mul(&jac);
        for i in 0..n {
            scale[i] = scale[i].max(jtj[(i, i)]);
        }
        let floor = scale.amax().max(1.0) * 1e-12;

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * scale[i].max(floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&g)));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= opts.lambda_up;
                if lambda > LAMBDA_MAX {
                    return Ok(finish(x, cost, iterations, Termination::LambdaOverflow, history));
                }
                continue;
            };
            if step.norm() <= opts.step_tol * (x.norm() + opts.step_tol) {
                return Ok(finish(x, cost, iterations, Termination::StepTolerance, history));
            }
            let candidate = &x + &step;
            let accepted = match problem.residuals(&candidate) {
                Ok(rc) if rc.iter().all(|v| v.is_finite()) => {
                    let c = rc.norm_squared();
                    (c < cost).then_some((rc, c))
                }
                _ => None,
            };
            match accepted {
                Some((rc, c)) => {
                    let reduction = (cost - c) / cost;
                    x = candidate;
                    r = rc;
                    cost = c;
                    history.push(cost.sqrt());
                    lambda = (lambda / opts.lambda_down).max(1e-300);
                    iterations += 1;
                    if cost.sqrt() <= opts.residual_tol {
                        return Ok(finish(x, cost, iterations, Termination::ResidualTolerance, history));
                    }
                    if reduction < opts.reduction_tol {
                        return Ok(finish(x, cost, iterations, Termination::SmallReduction, history));
                    }
                    break;
                }
                None => {
                    lambda *= opts.lambda_up;
                    if lambda > LAMBDA_MAX {
                        return Ok(finish(x, cost, iterations, Termination::LambdaOverflow, history));
                    }
                }
            }
        }
    }
    Ok(finish(x, cost, iterations, Termination::MaxIterations, history))
}

/// Central-difference Jacobian with per-parameter step `rel_step·max(1, |x_i|)`.
pub fn central_difference_jacobian<F>(f: F, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let (rp, rm) = (f(&xp)?, f(&xm)?);
        cols.push((rp - rm) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Summary of a restart run.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub best: LMReport,
    pub best_index: usize,
    pub attempts: usize,
    pub converged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartStats {
    pub attempts: usize,
    pub converged: usize,
    pub failed: usize,
    pub best_index: usize,
}

impl RestartOutcome {
    pub fn stats(&self) -> RestartStats {
        RestartStats {
            attempts: self.attempts,
            converged: self.converged,
            failed: self.failed,
            best_index: self.best_index,
        }
    }
}

/// Runs `solve` from `count` starting points drawn by `sampler` and keeps
/// the lowest final residual norm (ties go to the lower restart index).
/// Starting points are drawn serially from one seeded stream, so the result
/// does not depend on how the solves are scheduled.
pub fn with_restarts<S, F>(count: usize, seed: u64, mut sampler: S, solve: F) -> Result<RestartOutcome>
where
    S: FnMut(&mut ChaCha8Rng, usize) -> DVector<f64>,
    F: Fn(&DVector<f64>) -> Result<LMReport> + Sync,
{
    if count == 0 {
        return Err(Error::InvalidInput("restart count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<DVector<f64>> = (0..count).map(|i| sampler(&mut rng, i)).collect();
    let results: Vec<Result<LMReport>> = starts.par_iter().map(|x0| solve(x0)).collect();

    let mut best: Option<(usize, LMReport)> = None;
    let mut converged = 0;
    let mut failed = 0;
    let mut errors = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) if rep.residual_norm.is_finite() => {
                if rep.converged {
                    converged += 1;
                }
                let better = best
                    .as_ref()
                    .map_or(true, |(_, b)| rep.residual_norm < b.residual_norm);
                if better {
                    best = Some((i, rep));
                }
            }
            Ok(_) => {
                failed += 1;
                errors.push(format!("restart {i}: non-finite residual"));
            }
            Err(e) => {
                failed += 1;
                errors.push(format!("restart {i}: {e}"));
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(RestartOutcome {
            best,
            best_index,
            attempts: count,
            converged,
            failed,
        }),
        None => Err(Error::AllRestartsFailed(errors.join("; "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_problem() -> (DMatrix<f64>, DVector<f64>) {
        let a = DMatrix::from_row_slice(
            5,
            3,
            &[
                2.0, 0.1, 0.0, //
                0.3, 1.5, -0.2, //
                0.0, 0.4, 3.0, //
                1.0, 1.0, 1.0, //
                -0.5, 0.2, 0.7,
            ],
        );
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0]);
        (a, b)
    }

    fn normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        (a.transpose() * a).try_inverse().unwrap() * a.transpose() * b
    }

    fn linear_fn(a: DMatrix<f64>, b: DVector<f64>) -> impl LeastSquaresProblem {
        let a2 = a.clone();
        FnProblem {
            residuals: move |x: &DVector<f64>| Ok(&a * x - &b),
            jacobian: move |_: &DVector<f64>| Ok(a2.clone()),
        }
    }

    #[test]
    fn linear_with_small_damping_is_exact_in_two_iterations() {
        let (a, b) = linear_problem();
        let expected = normal_equations(&a, &b);
        let opts = LMOptions {
            lambda0: 1e-12,
            ..LMOptions::default()
        };
        let rep = levenberg_marquardt(&linear_fn(a, b), &DVector::zeros(3), &opts).unwrap();
        assert!(rep.iterations <= 2, "{rep:?}");
        assert!((rep.params - &expected).amax() < 1e-10 * expected.amax());
    }

    #[test]
    fn linear_with_default_options_matches_normal_equations() {
        let (a, b) = linear_problem();
        let expected = normal_equations(&a, &b);
        let rep =
            levenberg_marquardt(&linear_fn(a, b), &DVector::zeros(3), &LMOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.params - &expected).amax() < 1e-10 * expected.amax());
    }

    /// Gradient descent with backtracking; independent of the LM code path.
    fn gradient_descent_rosenbrock(mut x: [f64; 2], iters: usize) -> [f64; 2] {
        let f = |p: [f64; 2]| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (1.0 - p[0]).powi(2);
        for _ in 0..iters {
            let g = [
                -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            let fx = f(x);
            let gg = g[0] * g[0] + g[1] * g[1];
            if gg < 1e-30 {
                break;
            }
            let mut t = 1.0;
            loop {
                let y = [x[0] - t * g[0], x[1] - t * g[1]];
                if f(y) <= fx - 0.5 * t * gg || t < 1e-20 {
                    x = y;
                    break;
                }
                t *= 0.5;
            }
        }
        x
    }

    #[test]
    fn rosenbrock() {
        let problem = FnProblem {
            residuals: |x: &DVector<f64>| {
                Ok(DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]))
            },
            jacobian: |x: &DVector<f64>| {
                Ok(DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]))
            },
        };
        let rep = levenberg_marquardt(
            &problem,
            &DVector::from_vec(vec![-1.2, 1.0]),
            &LMOptions::default(),
        )
        .unwrap();
        let oracle = gradient_descent_rosenbrock([-1.2, 1.0], 200_000);
        assert!((oracle[0] - 1.0).abs() < 1e-4 && (oracle[1] - 1.0).abs() < 1e-4, "{oracle:?}");
        assert!((rep.params[0] - 1.0).abs() < 1e-8 && (rep.params[1] - 1.0).abs() < 1e-8);
        assert!((rep.params[0] - oracle[0]).abs() < 1e-4);
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_residual_start() {
        let (a, _) = linear_problem();
        let b = DVector::zeros(5);
        let rep = levenberg_marquardt(&linear_fn(a, b), &DVector::zeros(3), &LMOptions::default())
            .unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let p = FnProblem {
            residuals: |_: &DVector<f64>| Ok(DVector::from_vec(vec![f64::NAN])),
            jacobian: |_: &DVector<f64>| Ok(DMatrix::zeros(1, 1)),
        };
        assert!(matches!(
            levenberg_marquardt(&p, &DVector::zeros(1), &LMOptions::default()),
            Err(Error::NonFiniteResidual)
        ));
    }

    #[test]
    fn options_validation() {
        let bad = LMOptions {
            lambda_up: 1.0,
            ..LMOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = LMOptions {
            step_tol: 0.0,
            ..LMOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn central_difference_matches_analytic() {
        let f = |x: &DVector<f64>| Ok(DVector::from_vec(vec![x[0].sin() * x[1], x[1].powi(3)]));
        let x = DVector::from_vec(vec![0.7, -1.3]);
        let j = central_difference_jacobian(f, &x, 1e-6).unwrap();
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[0.7f64.cos() * -1.3, 0.7f64.sin(), 0.0, 3.0 * 1.3 * 1.3],
        );
        assert!((j - expected).amax() < 1e-8);
    }

    /// `|r|` has a local minimum near t ≈ −0.93 and its zero at t = 3.
    fn two_basin() -> impl LeastSquaresProblem + Sync {
        FnProblem {
            residuals: |x: &DVector<f64>| {
                let t = x[0];
                Ok(DVector::from_vec(vec![(t - 3.0) * ((t + 1.0).powi(2) + 0.5)]))
            },
            jacobian: |x: &DVector<f64>| {
                let t = x[0];
                Ok(DMatrix::from_element(
                    1,
                    1,
                    ((t + 1.0).powi(2) + 0.5) + (t - 3.0) * 2.0 * (t + 1.0),
                ))
            },
        }
    }

    #[test]
    fn restarts_find_global_basin() {
        let problem = two_basin();
        let opts = LMOptions::default();
        let out = with_restarts(
            20,
            7,
            |rng, _| DVector::from_element(1, rng.random_range(-4.0..5.0)),
            |x0| levenberg_marquardt(&problem, x0, &opts),
        )
        .unwrap();
        assert!((out.best.params[0] - 3.0).abs() < 1e-8, "{:?}", out.best);
        assert_eq!(out.attempts, 20);
    }

    #[test]
    fn single_restart_equals_bare_solve() {
        let problem = two_basin();
        let opts = LMOptions::default();
        let sampler = |rng: &mut ChaCha8Rng, _| DVector::from_element(1, rng.random_range(-4.0..5.0));
        let out = with_restarts(1, 11, sampler, |x0| levenberg_marquardt(&problem, x0, &opts)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = sampler(&mut rng, 0);
        let bare = levenberg_marquardt(&problem, &x0, &opts).unwrap();
        assert_eq!(out.best, bare);
    }

    #[test]
    fn restarts_are_deterministic() {
        let problem = two_basin();
        let opts = LMOptions::default();
        let run = || {
            with_restarts(
                8,
                99,
                |rng, _| DVector::from_element(1, rng.random_range(-4.0..5.0)),
                |x0| levenberg_marquardt(&problem, x0, &opts),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.best.params[0].to_bits(), b.best.params[0].to_bits());
    }

    #[test]
    fn all_failing_restarts_aggregate() {
        let err = with_restarts(
            3,
            0,
            |_, _| DVector::zeros(1),
            |_| -> Result<LMReport> { Err(Error::NonFiniteResidual) },
        )
        .unwrap_err();
        assert!(matches!(err, Error::AllRestartsFailed(_)));
    }
}
