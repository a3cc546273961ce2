//! Binary logistic regression with an L2 penalty on the weights.
//!
//! The objective is
//!
//! ```text
//! J(w, b) = ½‖w‖² + C · Σᵢ log(1 + exp(−sᵢ (wᵀxᵢ + b)))      sᵢ ∈ {−1, +1}
//! ```
//!
//! with the intercept left unpenalized. It is minimized by a damped Newton
//! method started from zero: each step solves the full (d+1)×(d+1) Newton
//! system by Cholesky and is accepted through an Armijo backtracking line
//! search. Iteration stops once ‖∇J‖ ≤ `GRADIENT_RTOL`·max(1, ‖∇J(0)‖);
//! a few extra full Newton steps then push ‖∇J‖ toward `GRADIENT_RTOL` in
//! absolute terms, kept only while they shrink the gradient.

use nalgebra::{DMatrix, DVector};

use super::{affine, check_finite};
use crate::error::{Error, Result};

pub const GRADIENT_RTOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const OBJECTIVE_EPS: f64 = 1e-13;
const POLISH_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Inverse regularization strength.
    pub c: f64,
    /// Newton iterations used.
    pub iterations: usize,
    /// ‖∇J‖ at the returned solution.
    pub grad_norm: f64,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Margins (log-odds) `wᵀx + b`.
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        affine(x, &self.weights, self.intercept)
    }

    /// Hard labels at probability threshold 0.5 (margin strictly positive).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<bool>> {
        Ok(self.decision_function(x)?.into_iter().map(|m| m > 0.0).collect())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(−z)) without overflow.
#[inline]
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

#[inline]
fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

fn loss_sum(margins: &[f64], y: &[bool]) -> f64 {
    margins.iter().zip(y).map(|(&m, &t)| log1p_exp_neg(sign(t) * m)).sum()
}

/// Value of the penalized objective at `(weights, intercept)`.
pub fn logistic_objective(x: &DMatrix<f64>, y: &[bool], c: f64, weights: &[f64], intercept: f64) -> Result<f64> {
    let margins = affine(x, weights, intercept)?;
    let penalty = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    Ok(penalty + c * loss_sum(&margins, y))
}

/// Analytic gradient `[∂J/∂w, ∂J/∂b]` (length d + 1).
pub fn logistic_gradient(x: &DMatrix<f64>, y: &[bool], c: f64, weights: &[f64], intercept: f64) -> Result<Vec<f64>> {
    let margins = affine(x, weights, intercept)?;
    Ok(gradient_from_margins(x, y, c, weights, &margins))
}

fn gradient_from_margins(x: &DMatrix<f64>, y: &[bool], c: f64, weights: &[f64], margins: &[f64]) -> Vec<f64> {
    let d = weights.len();
    // r_i = −C sᵢ σ(−sᵢ mᵢ)
    let r: Vec<f64> = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            let s = sign(t);
            -c * s * sigmoid(-s * m)
        })
        .collect();
    let mut g = Vec::with_capacity(d + 1);
    for j in 0..d {
        let dot: f64 = x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum();
        g.push(weights[j] + dot);
    }
    g.push(r.iter().sum());
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Newton system matrix: [XᵀDX + I, XᵀD1; 1ᵀDX, 1ᵀD1] with D = C·σ(z)σ(−z).
fn hessian(x: &DMatrix<f64>, y: &[bool], c: f64, margins: &[f64]) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let scale: Vec<f64> = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            let z = sign(t) * m;
            (c * sigmoid(z) * sigmoid(-z)).sqrt()
        })
        .collect();
    let mut z = DMatrix::<f64>::zeros(n, d + 1);
    for j in 0..d {
        for ((dst, &src), &s) in z.column_mut(j).iter_mut().zip(x.column(j).iter()).zip(&scale) {
            *dst = src * s;
        }
    }
    z.column_mut(d).copy_from_slice(&scale);
    let mut h = z.transpose() * &z;
    for j in 0..d {
        h[(j, j)] += 1.0;
    }
    h
}

fn newton_direction(mut h: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
    let last = g.len() - 1;
    // The intercept block can underflow to zero when every sample is
    // saturated; a tiny diagonal shift keeps the system solvable.
    let mut shift = 0.0;
    for _ in 0..4 {
        if let Some(chol) = h.clone().cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step.as_slice().to_vec());
            }
        }
        let bump = if shift == 0.0 { 1e-12 } else { shift * 1e3 };
        h[(last, last)] += bump - shift;
        shift = bump;
    }
    None
}

/// Fits the penalized logistic model. Deterministic for identical inputs.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<LogisticModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidRegularization("a finite positive C"));
    }
    if y.iter().all(|&t| t) || y.iter().all(|&t| !t) {
        return Err(Error::SingleClass);
    }
    check_finite(x, std::iter::empty())?;

    if d > n {
        // w lies in the row space of X. With Xᵀ = QR (Q orthonormal, d×n),
        // w = Qz gives Xw = Rᵀz and ‖w‖ = ‖z‖, so the n-dimensional problem
        // over z has the same objective and gradient norm.
        let qr = x.transpose().qr();
        let reduced = qr.r().transpose();
        let inner = newton(&reduced, y, c)?;
        let z = DMatrix::from_column_slice(n, 1, &inner.weights);
        let w = qr.q() * z;
        return Ok(LogisticModel {
            weights: w.as_slice().to_vec(),
            ..inner
        });
    }
    newton(x, y, c)
}

fn newton(x: &DMatrix<f64>, y: &[bool], c: f64) -> Result<LogisticModel> {
    let (n, d) = x.shape();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut margins = vec![0.0; n];
    let mut obj = c * loss_sum(&margins, y);
    let mut g = gradient_from_margins(x, y, c, &w, &margins);
    let mut gnorm = norm(&g);
    let tol = GRADIENT_RTOL * gnorm.max(1.0);

    for iter in 0..MAX_ITERATIONS {
        if gnorm <= tol {
            polish(x, y, c, &mut w, &mut b, &mut gnorm)?;
            return Ok(LogisticModel {
                weights: w,
                intercept: b,
                c,
                iterations: iter,
                grad_norm: gnorm,
            });
        }
        let h = hessian(x, y, c, &margins);
        let step = newton_direction(h, &g).ok_or(Error::NotConverged {
            iterations: iter,
            grad_norm: gnorm,
        })?;
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        // Direction must be a descent direction; fall back to steepest descent.
        let step: Vec<f64> = if slope < 0.0 { step } else { g.iter().map(|v| -v).collect() };
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();

        let delta_margin = affine(x, &step[..d], step[d])?;
        let w_sq: f64 = w.iter().map(|v| v * v).sum();
        let w_dot: f64 = w.iter().zip(&step).map(|(a, b)| a * b).sum();
        let s_sq: f64 = step[..d].iter().map(|v| v * v).sum();

        let mut t = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        // Once the predicted decrease is below the objective's rounding
        // error, Armijo comparisons are noise; go straight to the
        // gradient-based acceptance below.
        let resolvable = -slope > OBJECTIVE_EPS * obj.abs().max(1.0);
        for _ in 0..if resolvable { MAX_HALVINGS } else { 0 } {
            for ((tr, &m), &dm) in trial.iter_mut().zip(&margins).zip(&delta_margin) {
                *tr = m + t * dm;
            }
            let penalty = 0.5 * (w_sq + 2.0 * t * w_dot + t * t * s_sq);
            let candidate = penalty + c * loss_sum(&trial, y);
            if candidate <= obj + ARMIJO * t * slope {
                accepted = Some((t, candidate));
                break;
            }
            t *= 0.5;
        }

        let (t, new_obj) = match accepted {
            Some(found) => found,
            None => {
                // Near the optimum the objective stops resolving differences;
                // take the full step if it still shrinks the gradient.
                let full: Vec<f64> = margins.iter().zip(&delta_margin).map(|(m, dm)| m + dm).collect();
                let w_full: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + s).collect();
                let g_full = gradient_from_margins(x, y, c, &w_full, &full);
                if norm(&g_full) < gnorm {
                    let penalty = 0.5 * w_full.iter().map(|v| v * v).sum::<f64>();
                    (1.0, penalty + c * loss_sum(&full, y))
                } else {
                    return Err(Error::NotConverged {
                        iterations: iter,
                        grad_norm: gnorm,
                    });
                }
            }
        };

        for (wj, sj) in w.iter_mut().zip(&step) {
            *wj += t * sj;
        }
        b += t * step[d];
        margins = affine(x, &w, b)?;
        obj = new_obj;
        g = gradient_from_margins(x, y, c, &w, &margins);
        gnorm = norm(&g);
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        grad_norm: gnorm,
    })
}

fn polish(x: &DMatrix<f64>, y: &[bool], c: f64, w: &mut Vec<f64>, b: &mut f64, gnorm: &mut f64) -> Result<()> {
    let d = w.len();
    for _ in 0..POLISH_STEPS {
        if *gnorm <= GRADIENT_RTOL {
            break;
        }
        let margins = affine(x, w, *b)?;
        let g = gradient_from_margins(x, y, c, w, &margins);
        let Some(step) = newton_direction(hessian(x, y, c, &margins), &g) else {
            break;
        };
        let w_new: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + s).collect();
        let b_new = *b + step[d];
        let g_new = norm(&gradient_from_margins(x, y, c, &w_new, &affine(x, &w_new, b_new)?));
        if g_new >= *gnorm {
            break;
        }
        *w = w_new;
        *b = b_new;
        *gnorm = g_new;
    }
    Ok(())
}

/// σ(wᵀx + b) for every row.
pub fn predict_proba(model: &LogisticModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(model.decision_function(x)?.into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (DMatrix<f64>, Vec<bool>) {
        (DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]), vec![false, true])
    }

    /// Minimizes ½w² + 2C·log(1+e^{−w}) by bisection on its derivative,
    /// which is monotone increasing.
    fn two_point_oracle(c: f64) -> f64 {
        let deriv = |w: f64| w - 2.0 * c / (1.0 + w.exp());
        let (mut lo, mut hi) = (0.0, 2.0 * c + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_two_point_matches_oracle() {
        let (x, y) = two_point();
        let m = fit_logistic(&x, &y, 1.0).unwrap();
        let w_star = two_point_oracle(1.0);
        assert!((m.weights[0] - w_star).abs() < 1e-6, "{} vs {w_star}", m.weights[0]);
        assert!(m.intercept.abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(matches!(fit_logistic(&x, &[true, true, true], 1.0), Err(Error::SingleClass)));
        assert!(matches!(fit_logistic(&x, &[false; 3], 1.0), Err(Error::SingleClass)));
    }

    #[test]
    fn non_finite_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[f64::NAN, 1.0]);
        assert!(matches!(fit_logistic(&x, &[false, true], 1.0), Err(Error::NonFinite)));
    }

    #[test]
    fn regularization_shrinks_weight() {
        let (x, y) = two_point();
        let small = fit_logistic(&x, &y, 0.01).unwrap();
        let large = fit_logistic(&x, &y, 100.0).unwrap();
        assert!(small.weights[0].abs() < large.weights[0].abs());
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel {
            weights: vec![0.0],
            intercept: 0.0,
            c: 1.0,
            iterations: 0,
            grad_norm: 0.0,
        };
        let x = DMatrix::from_row_slice(3, 1, &[-5.0, 0.0, 12.0]);
        assert_eq!(predict_proba(&m, &x).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn sigmoid_monotone_towards_one() {
        let m = LogisticModel {
            weights: vec![1.0],
            intercept: 0.0,
            c: 1.0,
            iterations: 0,
            grad_norm: 0.0,
        };
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let p = predict_proba(&m, &DMatrix::from_column_slice(40, 1, &xs)).unwrap();
        assert_eq!(p[0], 0.5);
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(p[39] > 1.0 - 1e-15);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = LogisticModel {
            weights: vec![1.0, 2.0],
            intercept: 0.0,
            c: 1.0,
            iterations: 0,
            grad_norm: 0.0,
        };
        let x = DMatrix::zeros(2, 3);
        assert!(matches!(
            predict_proba(&m, &x),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn wide_design_matches_gradient_condition() {
        // d > n goes through the row-space reduction.
        let x = DMatrix::from_fn(5, 12, |i, j| (((i + 1) * (j + 2)) % 7) as f64 - 3.0);
        let y = [true, false, true, false, false];
        let m = fit_logistic(&x, &y, 1.0).unwrap();
        let g = logistic_gradient(&x, &y, 1.0, &m.weights, m.intercept).unwrap();
        assert!(norm(&g) < 1e-8, "{}", norm(&g));
    }

    #[test]
    fn separable_large_c_converges() {
        let x = DMatrix::from_row_slice(6, 2, &[-3.0, 0.1, -2.0, -0.4, -1.0, 0.3, 1.0, 0.2, 2.0, -0.1, 3.0, 0.5]);
        let y = [false, false, false, true, true, true];
        let m = fit_logistic(&x, &y, 100.0).unwrap();
        assert!(m.grad_norm <= 1e-6, "{}", m.grad_norm);
        assert_eq!(m.predict(&x).unwrap(), y);
    }
}
