//! Ridge regression solved in closed form on mean-centered data:
//! `w = (XcᵀXc + αI)⁻¹ Xcᵀyc`, `b = ȳ − wᵀx̄`.

use nalgebra::DMatrix;

use super::{affine, check_finite};
use crate::error::{Error, Result};

/// Relative pivot size below which an unregularized system is singular.
const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRegularization("a finite nonnegative alpha"))
    }
}

/// Solves `(A + αI) X = B` for symmetric positive semidefinite `A`. With
/// `α = 0` a vanishing Cholesky pivot is reported as singular.
fn solve_shifted(a: &DMatrix<f64>, alpha: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let mut shifted = a.clone();
    for j in 0..d {
        shifted[(j, j)] += alpha;
    }
    let scale = (0..d).map(|j| shifted[(j, j)]).fold(0.0_f64, f64::max);
    let chol = shifted.cholesky().ok_or(Error::Singular)?;
    if alpha == 0.0 && d > 0 {
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if scale == 0.0 || min_pivot <= SINGULAR_RTOL * scale {
            return Err(Error::Singular);
        }
    }
    let sol = chol.solve(rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(sol)
}

fn center(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let mut xc = x.clone();
    for (j, mu) in means.iter().enumerate() {
        xc.column_mut(j).add_scalar_mut(-mu);
    }
    (xc, means)
}

enum SplitSystem {
    /// d×d Gram `XcᵀXc` and `XcᵀYc`.
    Primal { gram: DMatrix<f64>, xty: DMatrix<f64>, test_c: DMatrix<f64> },
    /// n×n kernel `XcXcᵀ`, used when there are more features than rows;
    /// `w = Xcᵀ(XcXcᵀ + αI)⁻¹Yc` is the same solution.
    Dual { kernel: DMatrix<f64>, yc: DMatrix<f64>, cross: DMatrix<f64> },
}

/// Ridge fits of several targets on one train/test split, sharing the
/// factorization work across targets and alphas.
pub(crate) struct RidgeSplit {
    system: SplitSystem,
    y_mean: Vec<f64>,
}

impl RidgeSplit {
    /// `ys` holds one target per column.
    pub(crate) fn new(x_train: &DMatrix<f64>, ys: &DMatrix<f64>, x_test: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = x_train.shape();
        if ys.nrows() != n {
            return Err(Error::LengthMismatch { left: n, right: ys.nrows() });
        }
        if x_test.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x_test.ncols() });
        }
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, got: n });
        }
        check_finite(x_train, ys.iter().copied())?;
        let (xc, x_mean) = center(x_train);
        let (yc, y_mean) = center(ys);
        let mut test_c = x_test.clone();
        for (j, mu) in x_mean.iter().enumerate() {
            test_c.column_mut(j).add_scalar_mut(-mu);
        }
        let system = if d > n {
            SplitSystem::Dual {
                kernel: &xc * xc.transpose(),
                cross: &test_c * xc.transpose(),
                yc,
            }
        } else {
            let xt = xc.transpose();
            SplitSystem::Primal {
                gram: &xt * &xc,
                xty: &xt * &yc,
                test_c,
            }
        };
        Ok(Self { system, y_mean })
    }

    /// Test-set predictions (rows × targets) at `alpha`.
    pub(crate) fn predict(&self, alpha: f64) -> Result<DMatrix<f64>> {
        check_alpha(alpha)?;
        let mut pred = match &self.system {
            SplitSystem::Primal { gram, xty, test_c } => test_c * solve_shifted(gram, alpha, xty)?,
            SplitSystem::Dual { kernel, yc, cross } => cross * solve_shifted(kernel, alpha, yc)?,
        };
        for (j, mu) in self.y_mean.iter().enumerate() {
            pred.column_mut(j).add_scalar_mut(*mu);
        }
        Ok(pred)
    }
}

/// Minimizes ‖y − Xw − b‖² + α‖w‖² with an unpenalized intercept.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    check_alpha(alpha)?;
    check_finite(x, y.iter().copied())?;
    let (xc, x_mean) = center(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc = DMatrix::from_iterator(n, 1, y.iter().map(|v| v - y_mean));
    let xt = xc.transpose();
    let w = solve_shifted(&(&xt * &xc), alpha, &(&xt * &yc))?;
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    Ok(RidgeModel {
        weights: w.as_slice().to_vec(),
        intercept,
        alpha,
    })
}

/// `Xw + b` for every row.
pub fn predict_ridge(model: &RidgeModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    affine(x, &model.weights, model.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_solved_two_point() {
        // (2 + 2)w = 2 on centered data.
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let m = fit_ridge(&x, &[0.0, 2.0], 2.0).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-15);
        assert!((m.intercept - 0.5).abs() < 1e-15);
        let p = predict_ridge(&m, &DMatrix::from_row_slice(1, 1, &[0.0])).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_linear_fit() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = [1.0, 2.0, 3.0];
        let m = fit_ridge(&x, &y, 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        let p = predict_ridge(&m, &x).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn huge_alpha_collapses_to_mean() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, -1.0, 4.0, 2.0]);
        let y = [1.0, 3.0, 2.0, 6.0];
        let m = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-3));
        assert!((m.intercept - 3.0).abs() < 1e-3);
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        // Second column duplicates the first.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(matches!(fit_ridge(&x, &[1.0, 2.0, 4.0], 0.0), Err(Error::Singular)));
        assert!(fit_ridge(&x, &[1.0, 2.0, 4.0], 0.1).is_ok());
        // A constant column is rank deficient after centering.
        let x = DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        assert!(matches!(fit_ridge(&x, &[1.0, 2.0, 4.0], 0.0), Err(Error::Singular)));
    }

    #[test]
    fn constant_model_prediction() {
        let m = RidgeModel {
            weights: vec![0.0, 0.0],
            intercept: 3.0,
            alpha: 1.0,
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -4.0, 9.0, 2.0]);
        assert_eq!(predict_ridge(&m, &x).unwrap(), vec![3.0, 3.0]);
        assert!(matches!(
            predict_ridge(&m, &DMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_inputs() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(fit_ridge(&x, &[0.0, f64::INFINITY], 1.0), Err(Error::NonFinite)));
        assert!(matches!(fit_ridge(&x, &[0.0, 1.0], -1.0), Err(Error::InvalidRegularization(_))));
        assert!(matches!(
            fit_ridge(&DMatrix::zeros(1, 1), &[0.0], 1.0),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn dual_split_matches_primal_fit() {
        // More features than rows triggers the kernel form.
        let x = DMatrix::from_fn(6, 9, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * (i * j) as f64);
        let y: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let x_test = DMatrix::from_fn(3, 9, |i, j| (i + j) as f64 * 0.3);
        let ys = DMatrix::from_column_slice(6, 1, &y);
        let split = RidgeSplit::new(&x, &ys, &x_test).unwrap();
        for alpha in [0.01, 1.0, 10.0] {
            let dual = split.predict(alpha).unwrap();
            let primal = predict_ridge(&fit_ridge(&x, &y, alpha).unwrap(), &x_test).unwrap();
            for (a, b) in dual.iter().zip(&primal) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
