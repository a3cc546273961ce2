//! SHAP attribution for the logistic classifier and the search for the
//! smallest prefix of ranked features that reaches the best CV score.
//!
//! For a linear margin `f(x) = wᵀx + b` with independent features and a
//! background mean `μ`, the exact SHAP value of feature `j` is
//! `φⱼ(x) = wⱼ (xⱼ − μⱼ)`. Explanations are in margin (log-odds) space,
//! where `Σⱼ φⱼ(x) = f(x) − f(μ)` holds exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::crossval::{nested_cv_classify, select_c_by_cv, CvConfig, CvReport};
use crate::dataio::BinaryTask;
use crate::error::{Error, Result};
use crate::linmod::{fit_logistic, LogisticModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    /// n × d SHAP values.
    pub phi: DMatrix<f64>,
    /// Mean |φ| per feature.
    pub importance: Vec<f64>,
    pub background_mean: Vec<f64>,
}

impl Attribution {
    pub fn importance_of(&self, name: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.importance[j])
    }
}

/// Exact linear SHAP values of `model` on the rows of `x`.
pub fn linear_shap(
    model: &LogisticModel,
    x: &DMatrix<f64>,
    background_mean: &[f64],
    feature_names: &[String],
) -> Result<Attribution> {
    let d = model.n_features();
    for got in [x.ncols(), background_mean.len(), feature_names.len()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    let n = x.nrows();
    let phi = DMatrix::from_fn(n, d, |i, j| model.weights[j] * (x[(i, j)] - background_mean[j]));
    let importance = phi
        .column_iter()
        .map(|c| if n == 0 { 0.0 } else { c.iter().map(|v| v.abs()).sum::<f64>() / n as f64 })
        .collect();
    Ok(Attribution {
        feature_names: feature_names.to_vec(),
        phi,
        importance,
        background_mean: background_mean.to_vec(),
    })
}

/// Feature names by descending importance; equal importances are ordered by
/// name.
pub fn rank_features(attribution: &Attribution) -> Vec<String> {
    let mut idx: Vec<usize> = (0..attribution.feature_names.len()).collect();
    idx.sort_by(|&a, &b| {
        attribution.importance[b]
            .total_cmp(&attribution.importance[a])
            .then_with(|| attribution.feature_names[a].cmp(&attribution.feature_names[b]))
    });
    idx.into_iter().map(|j| attribution.feature_names[j].clone()).collect()
}

/// A single model fit on the whole task and its attribution.
#[derive(Debug, Clone)]
pub struct FullFit {
    pub attribution: Attribution,
    pub model: LogisticModel,
    pub chosen_c: f64,
    /// Pooled out-of-fold F1 of each grid value during selection.
    pub selection_f1: Vec<f64>,
}

/// Chooses C by grouped k-fold CV over the whole task, refits on every row
/// and attributes every row against the full-task column means.
pub fn fit_full_and_attribute(task: &BinaryTask, c_grid: &[f64], k_folds: usize, seed: u64) -> Result<FullFit> {
    let (chosen_c, selection_f1) = select_c_by_cv(task, c_grid, k_folds, seed)?;
    let model = fit_logistic(&task.x, &task.y, chosen_c)?;
    let n = task.n_rows() as f64;
    let mean: Vec<f64> = task.x.column_iter().map(|c| c.sum() / n).collect();
    let attribution = linear_shap(&model, &task.x, &mean, &task.column_names)?;
    Ok(FullFit {
        attribution,
        model,
        chosen_c,
        selection_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetResult {
    pub k_grid: Vec<usize>,
    pub f1_curve: Vec<f64>,
    pub k_star: usize,
    pub top_features: Vec<String>,
    /// Nested-CV report behind each point of the curve.
    #[serde(skip)]
    pub reports: Vec<CvReport>,
}

impl SubsetResult {
    pub fn f1_at(&self, k: usize) -> Option<f64> {
        self.k_grid.iter().position(|&g| g == k).map(|i| self.f1_curve[i])
    }

    pub fn report_at_k_star(&self) -> &CvReport {
        let i = self.k_grid.iter().position(|&g| g == self.k_star).expect("k_star in grid");
        &self.reports[i]
    }
}

/// Subset sizes `step, 2·step, …` up to `cap`, with `cap` itself appended
/// when it is not a multiple of `step`.
pub fn subset_grid(step: usize, cap: usize) -> Result<Vec<usize>> {
    if step == 0 {
        return Err(Error::InvalidConfig("subset step must be at least 1".into()));
    }
    if cap == 0 {
        return Err(Error::EmptyGrid);
    }
    let mut grid: Vec<usize> = (1..).map(|i| i * step).take_while(|&k| k <= cap).collect();
    if grid.last() != Some(&cap) {
        grid.push(cap);
    }
    Ok(grid)
}

/// Index of the first maximum; F1 values are compared exactly.
pub fn first_max(curve: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in curve.iter().enumerate() {
        match best {
            Some(b) if curve[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Runs nested CV on the top-k ranked columns for every k in the sweep and
/// returns the smallest k reaching the highest pooled F1.
pub fn minimal_subset_search(
    task: &BinaryTask,
    ranking: &[String],
    step: usize,
    cap: Option<usize>,
    c_grid: &[f64],
    cfg: &CvConfig,
) -> Result<SubsetResult> {
    if ranking.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for name in ranking {
        if !task.column_names.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    let cap = cap.unwrap_or(ranking.len()).min(ranking.len());
    let k_grid = subset_grid(step, cap)?;
    let reports: Vec<Result<CvReport>> = k_grid
        .par_iter()
        .map(|&k| {
            let sub = task.select_columns(&ranking[..k])?;
            nested_cv_classify(&sub, c_grid, cfg)
        })
        .collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let f1_curve: Vec<f64> = reports.iter().map(|r| r.pooled_score).collect();
    let best = first_max(&f1_curve).ok_or(Error::EmptyGrid)?;
    let k_star = k_grid[best];
    Ok(SubsetResult {
        k_star,
        top_features: ranking[..k_star].to_vec(),
        k_grid,
        f1_curve,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(w: &[f64], b: f64) -> LogisticModel {
        LogisticModel {
            weights: w.to_vec(),
            intercept: b,
            c: 1.0,
            iterations: 0,
            grad_norm: 0.0,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn direct_formula() {
        let m = model(&[2.0, -1.0], 0.3);
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let a = linear_shap(&m, &x, &[0.0, 0.0], &names(2)).unwrap();
        assert_eq!(a.phi.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, -1.0]);
        let f = |v: &[f64]| m.weights[0] * v[0] + m.weights[1] * v[1] + m.intercept;
        assert!((a.phi.sum() - (f(&[1.0, 1.0]) - f(&[0.0, 0.0]))).abs() < 1e-15);
    }

    #[test]
    fn background_point_has_zero_attribution() {
        let m = model(&[1.5, -0.5, 3.0], 0.0);
        let mu = [0.2, -1.0, 4.0];
        let x = DMatrix::from_row_slice(1, 3, &mu);
        let a = linear_shap(&m, &x, &mu, &names(3)).unwrap();
        assert!(a.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weight_feature_has_zero_importance() {
        let m = model(&[0.0, 5.0], 1.0);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -7.0, 0.5, 3.0, 3.0]);
        let a = linear_shap(&m, &x, &[0.0, 1.0], &names(2)).unwrap();
        assert_eq!(a.importance[0], 0.0);
        assert!(a.importance[1] > 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = model(&[1.0, 2.0], 0.0);
        let x = DMatrix::zeros(2, 3);
        assert!(matches!(
            linear_shap(&m, &x, &[0.0, 0.0], &names(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn attribution(pairs: &[(&str, f64)]) -> Attribution {
        Attribution {
            feature_names: pairs.iter().map(|(n, _)| n.to_string()).collect(),
            phi: DMatrix::zeros(0, pairs.len()),
            importance: pairs.iter().map(|(_, v)| *v).collect(),
            background_mean: vec![0.0; pairs.len()],
        }
    }

    #[test]
    fn ranking_order_and_ties() {
        assert_eq!(rank_features(&attribution(&[("a", 0.5), ("b", 2.0), ("c", 1.0)])), ["b", "c", "a"]);
        assert_eq!(rank_features(&attribution(&[("z", 1.0), ("m", 1.0), ("a", 1.0)])), ["a", "m", "z"]);
        assert_eq!(rank_features(&attribution(&[("only", 0.0)])), ["only"]);
    }

    #[test]
    fn first_max_rule() {
        assert_eq!(first_max(&[0.8, 0.9, 0.9]), Some(1));
        assert_eq!(first_max(&[1.0]), Some(0));
        assert_eq!(first_max(&[]), None);
    }

    #[test]
    fn grid_construction() {
        assert_eq!(subset_grid(10, 35).unwrap(), vec![10, 20, 30, 35]);
        assert_eq!(subset_grid(10, 30).unwrap(), vec![10, 20, 30]);
        assert_eq!(subset_grid(10, 4).unwrap(), vec![4]);
        assert_eq!(subset_grid(10, 128).unwrap().last(), Some(&128));
        assert!(subset_grid(0, 10).is_err());
        assert!(matches!(subset_grid(10, 0), Err(Error::EmptyGrid)));
    }
}
