//! Levenberg-Marquardt for small dense nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Damping above which the solver gives up.
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub lambda_init: f64,
    /// Multiplier applied to the damping after a rejected step.
    pub lambda_up: f64,
    /// Divisor applied to the damping after an accepted step.
    pub lambda_down: f64,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    /// Stop once the gradient infinity norm falls to this value.
    pub grad_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_iters: 100,
            cost_tol: 1e-12,
            grad_tol: 1e-12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [self.lambda_init, self.cost_tol, self.grad_tol]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || !(self.lambda_up > 1.0) || !(self.lambda_down > 1.0) || self.max_iters == 0 {
            return Err(GeometryError::InvalidInput(format!("invalid LM configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    /// Cost reached exactly zero.
    ZeroCost,
    /// Even heavily damped steps no longer lower the cost.
    NoFurtherDecrease,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    /// Final cost `½‖r‖²`.
    pub cost: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub termination: Termination,
    /// Cost at the start followed by the cost after each accepted step.
    pub accepted_costs: Vec<f64>,
}

fn half_sq_norm(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimises `½‖r(x)‖²` starting from `x0`.
///
/// Each iteration solves `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr`. A step is accepted
/// only if it strictly lowers the cost, after which λ is divided by
/// `lambda_down`; otherwise λ is multiplied by `lambda_up` and the step is
/// retried.
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    x0: DVector<f64>,
    cfg: &LmConfig,
) -> Result<LmReport, GeometryError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    cfg.validate()?;
    let mut x = x0;
    let mut r = residuals(&x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidStart);
    }
    let mut cost = half_sq_norm(&r);
    let mut lambda = cfg.lambda_init;
    let mut accepted_costs = vec![cost];
    let mut iterations = 0;

    let termination = loop {
        if cost == 0.0 {
            break Termination::ZeroCost;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        let jac = jacobian(&x);
        if jac.nrows() != r.len() || jac.ncols() != x.len() {
            return Err(GeometryError::InvalidInput(format!(
                "jacobian is {}x{}, expected {}x{}",
                jac.nrows(),
                jac.ncols(),
                r.len(),
                x.len()
            )));
        }
        let grad = jac.transpose() * &r;
        if grad.amax() <= cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        let jtj = jac.transpose() * &jac;
        let max_diag = jtj.diagonal().max();
        let floor = f64::EPSILON * max_diag;

        let step = loop {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= cfg.lambda_up;
                if lambda >= LAMBDA_MAX {
                    return Err(GeometryError::Stalled(lambda));
                }
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let candidate = &x + &delta;
            let r_new = residuals(&candidate);
            let cost_new = half_sq_norm(&r_new);
            if cost_new.is_finite() && cost_new < cost {
                break Some((candidate, r_new, cost_new));
            }
            lambda *= cfg.lambda_up;
            if lambda >= LAMBDA_MAX {
                break None;
            }
        };

        let Some((x_new, r_new, cost_new)) = step else {
            break Termination::NoFurtherDecrease;
        };
        let decrease = cost - cost_new;
        x = x_new;
        r = r_new;
        let previous = cost;
        cost = cost_new;
        lambda /= cfg.lambda_down;
        iterations += 1;
        accepted_costs.push(cost);
        if cost > 0.0 && decrease <= cfg.cost_tol * previous {
            break Termination::CostTolerance;
        }
    };

    Ok(LmReport { x, cost, iterations, termination, accepted_costs })
}

/// Central-difference Jacobian with a relative step of 1e-6.
pub fn numeric_jacobian<R>(residuals: &R, x: &DVector<f64>) -> DMatrix<f64>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
{
    let r0 = residuals(x);
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let plus = residuals(&probe);
        probe[j] = x[j] - h;
        let minus = residuals(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
    }

    fn rosenbrock_jac(x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0])
    }

    fn strictly_decreasing(costs: &[f64]) -> bool {
        costs.windows(2).all(|w| w[1] < w[0])
    }

    #[test]
    fn linear_residual() {
        let r = |x: &DVector<f64>| DVector::from_vec(vec![x[0] - 5.0]);
        let j = |_: &DVector<f64>| DMatrix::from_element(1, 1, 1.0);

        // Two damped steps already land within 1e-6; the damping schedule
        // reaches the exact root two steps later.
        let two = LmConfig { max_iters: 2, ..LmConfig::default() };
        let rep = levenberg_marquardt(r, j, DVector::zeros(1), &two).unwrap();
        assert_eq!(rep.iterations, 2);
        assert!((rep.x[0] - 5.0).abs() < 1e-6);

        let rep = levenberg_marquardt(r, j, DVector::zeros(1), &LmConfig::default()).unwrap();
        assert_eq!(rep.x[0], 5.0);
        assert_eq!(rep.cost, 0.0);
        assert!(rep.iterations <= 4);
        assert!(strictly_decreasing(&rep.accepted_costs));
    }

    #[test]
    fn optimal_start_takes_no_steps() {
        let r = |x: &DVector<f64>| DVector::from_vec(vec![x[0] - 5.0, x[1] + 1.0]);
        let j = |_: &DVector<f64>| DMatrix::identity(2, 2);
        let x0 = DVector::from_vec(vec![5.0, -1.0]);
        let rep = levenberg_marquardt(r, j, x0.clone(), &LmConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.x, x0);

        // nonzero residual but zero gradient
        let r = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] + 1.0]);
        let j = |x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0 * x[0]);
        let rep = levenberg_marquardt(r, j, DVector::zeros(1), &LmConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.termination, Termination::GradientTolerance);
    }

    /// Plain gradient descent with backtracking, used as a low-precision
    /// cross-check of where Rosenbrock's minimum lies.
    fn gradient_descent_oracle(mut x: [f64; 2], iters: usize) -> [f64; 2] {
        let cost = |x: [f64; 2]| 0.5 * ((10.0 * (x[1] - x[0] * x[0])).powi(2) + (1.0 - x[0]).powi(2));
        for _ in 0..iters {
            let g0 = -200.0 * x[0] * (x[1] - x[0] * x[0]) - (1.0 - x[0]);
            let g1 = 100.0 * (x[1] - x[0] * x[0]);
            let mut step = 1.0;
            let c = cost(x);
            while step > 1e-12 {
                let cand = [x[0] - step * g0, x[1] - step * g1];
                if cost(cand) < c - 1e-4 * step * (g0 * g0 + g1 * g1) {
                    x = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        x
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let oracle = gradient_descent_oracle([-1.2, 1.0], 200_000);
        assert!((oracle[0] - 1.0).abs() < 1e-3 && (oracle[1] - 1.0).abs() < 1e-3);

        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let rep = levenberg_marquardt(rosenbrock, rosenbrock_jac, x0, &LmConfig::default()).unwrap();
        assert!((rep.x[0] - 1.0).abs() < 1e-8 && (rep.x[1] - 1.0).abs() < 1e-8, "{:?}", rep.x);
        assert!((rep.x[0] - oracle[0]).abs() < 1e-3 && (rep.x[1] - oracle[1]).abs() < 1e-3);
        assert!(strictly_decreasing(&rep.accepted_costs));
    }

    #[test]
    fn numeric_jacobian_is_interchangeable() {
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let j = numeric_jacobian(&rosenbrock, &x0);
        assert!((j - rosenbrock_jac(&x0)).norm() < 1e-6);
        let rep = levenberg_marquardt(
            rosenbrock,
            |x: &DVector<f64>| numeric_jacobian(&rosenbrock, x),
            x0,
            &LmConfig::default(),
        )
        .unwrap();
        assert!((rep.x[0] - 1.0).abs() < 1e-8 && (rep.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_start() {
        let r = |x: &DVector<f64>| DVector::from_vec(vec![x[0].ln()]);
        let j = |x: &DVector<f64>| DMatrix::from_element(1, 1, 1.0 / x[0]);
        let err = levenberg_marquardt(r, j, DVector::from_vec(vec![-1.0]), &LmConfig::default());
        assert_eq!(err.unwrap_err(), GeometryError::InvalidStart);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = LmConfig { lambda_up: 1.0, ..LmConfig::default() };
        assert!(bad.validate().is_err());
        let bad = LmConfig { max_iters: 0, ..LmConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn costs_strictly_decrease_on_exponential_fit() {
        // y = 2 exp(-0.5 t) sampled without noise, fitted from a poor start
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let r = |p: &DVector<f64>| {
            DVector::from_iterator(ts.len(), ts.iter().map(|t| p[0] * (-p[1] * t).exp() - 2.0 * (-0.5 * t).exp()))
        };
        let rep = levenberg_marquardt(
            r,
            |p: &DVector<f64>| numeric_jacobian(&r, p),
            DVector::from_vec(vec![0.5, 2.0]),
            &LmConfig::default(),
        )
        .unwrap();
        assert!(strictly_decreasing(&rep.accepted_costs));
        assert!((rep.x[0] - 2.0).abs() < 1e-6 && (rep.x[1] - 0.5).abs() < 1e-6);
    }
}
