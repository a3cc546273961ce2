//! Regularized linear models: an L2 logistic classifier and a closed-form
//! ridge regressor. Both are deterministic and single-threaded per fit.

mod logistic;
mod ridge;

pub use logistic::{
    fit_logistic, logistic_gradient, logistic_objective, predict_proba, LogisticModel, GRADIENT_RTOL, MAX_ITERATIONS,
};
pub use ridge::{fit_ridge, predict_ridge, RidgeModel};

pub(crate) use ridge::RidgeSplit;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) fn check_finite(x: &DMatrix<f64>, y: impl IntoIterator<Item = f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) && y.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `X w + b` for every row.
pub(crate) fn affine(x: &DMatrix<f64>, weights: &[f64], intercept: f64) -> Result<Vec<f64>> {
    if x.ncols() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: x.ncols(),
        });
    }
    let mut out = vec![intercept; x.nrows()];
    // Column-major storage: accumulate one column at a time.
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
            *o += w * v;
        }
    }
    Ok(out)
}
