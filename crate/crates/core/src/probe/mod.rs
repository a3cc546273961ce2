//! Linear probes from embedding dimensions onto acoustic features.
//!
//! Each acoustic feature is z-scored over the probing rows and predicted by
//! nested-CV ridge regression twice: once from every embedding dimension and
//! once from the emotion's top dimensions, on the same fold plan. The two
//! pooled RMSEs combine into the information-increase score
//! `(rmse_all / rmse_top) · (1 / rmse_top)`.

mod category;

pub use category::{
    egemaps_v02_category_map, load_category_map, read_category_map, write_category_map, Category, CategoryMap,
    EGEMAPS_V02_CATEGORIES,
};

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::attrib::Attribution;
use crate::crossval::{nested_cv_regress, nested_cv_regress_multi, CvConfig};
use crate::dataio::{is_zero_variance, mean_std, FeatureTable};
use crate::error::{Error, Result};

/// Floor applied to both RMSEs before computing information increase.
pub const RMSE_FLOOR: f64 = 1e-9;

/// `(rmse_all / rmse_top) · (1 / rmse_top)` with both inputs floored at
/// [`RMSE_FLOOR`].
pub fn information_increase(rmse_all: f64, rmse_top: f64) -> f64 {
    let floor = |v: f64, what: &str| {
        if v < RMSE_FLOOR {
            log::warn!("{what} = {v:e} floored to {RMSE_FLOOR:e}");
            RMSE_FLOOR
        } else {
            v
        }
    };
    let all = floor(rmse_all, "rmse_all");
    let top = floor(rmse_top, "rmse_top");
    (all / top) * (1.0 / top)
}

/// Acoustic targets z-scored over a row subset.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedTargets {
    pub names: Vec<String>,
    /// rows × kept features
    pub values: DMatrix<f64>,
    /// Constant columns, left out of probing.
    pub excluded: Vec<String>,
}

/// Z-scores every acoustic column over `rows` (population std). Columns
/// that are constant over the subset are excluded and listed.
pub fn standardize_targets(acoustic: &FeatureTable, rows: &[usize]) -> Result<StandardizedTargets> {
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let data = acoustic.rows();
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut excluded = Vec::new();
    for (j, name) in acoustic.feature_names().iter().enumerate() {
        let col = rows.iter().map(|&i| data[i].values[j]);
        let (mean, std) = mean_std(col.clone());
        if is_zero_variance(mean, std) {
            excluded.push(name.clone());
            continue;
        }
        names.push(name.clone());
        columns.push(col.map(|v| (v - mean) / std).collect());
    }
    let values = DMatrix::from_fn(rows.len(), columns.len(), |i, t| columns[t][i]);
    Ok(StandardizedTargets {
        names,
        values,
        excluded,
    })
}

/// Pooled out-of-fold RMSE of a nested-CV ridge probe.
pub fn probe_feature<S: AsRef<str>>(
    x: &DMatrix<f64>,
    target: &[f64],
    groups: &[S],
    alpha_grid: &[f64],
    cfg: &CvConfig,
) -> Result<f64> {
    Ok(nested_cv_regress(x, target, groups, alpha_grid, cfg)?.pooled_score)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub feature_name: String,
    pub rmse_all: f64,
    pub rmse_top: f64,
    pub info_increase: f64,
    pub category: Category,
    /// Per-outer-fold alphas of the all-dimension probe.
    pub alphas_all: Vec<f64>,
    /// Per-outer-fold alphas of the top-dimension probe.
    pub alphas_top: Vec<f64>,
    pub fold_plan_digest_all: String,
    pub fold_plan_digest_top: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSuite {
    pub results: Vec<ProbeResult>,
    pub excluded: Vec<String>,
    pub n_rows: usize,
}

/// Probes every non-constant acoustic feature from all embedding columns
/// and from `top_features`, over the utterances in `utterance_ids`.
pub fn run_probe_suite(
    embedding: &FeatureTable,
    acoustic: &FeatureTable,
    utterance_ids: &[String],
    top_features: &[String],
    category_map: &CategoryMap,
    alpha_grid: &[f64],
    cfg: &CvConfig,
) -> Result<ProbeSuite> {
    if utterance_ids.is_empty() {
        return Err(Error::Empty);
    }
    let emb_index = embedding.row_index();
    let ac_index = acoustic.row_index();
    let mut missing_emb = Vec::new();
    let mut missing_ac = Vec::new();
    let mut emb_rows = Vec::with_capacity(utterance_ids.len());
    let mut ac_rows = Vec::with_capacity(utterance_ids.len());
    for id in utterance_ids {
        match (emb_index.get(id.as_str()), ac_index.get(id.as_str())) {
            (Some(&e), Some(&a)) => {
                emb_rows.push(e);
                ac_rows.push(a);
            }
            (e, a) => {
                if e.is_none() {
                    missing_emb.push(id.clone());
                }
                if a.is_none() {
                    missing_ac.push(id.clone());
                }
            }
        }
    }
    if !missing_emb.is_empty() || !missing_ac.is_empty() {
        return Err(Error::Join {
            missing_in_embedding: missing_emb,
            missing_in_acoustic: missing_ac,
        });
    }

    let emb_cols: HashMap<&str, usize> = embedding
        .feature_names()
        .iter()
        .enumerate()
        .map(|(j, n)| (n.as_str(), j))
        .collect();
    let top_idx = top_features
        .iter()
        .map(|n| {
            emb_cols
                .get(n.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownColumn(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let targets = standardize_targets(acoustic, &ac_rows)?;
    let categories = targets
        .names
        .iter()
        .map(|n| category_map.require(n))
        .collect::<Result<Vec<_>>>()?;
    for name in &targets.excluded {
        log::info!("acoustic feature `{name}` is constant over the probing rows; excluded");
    }

    let erows = embedding.rows();
    let x_all = DMatrix::from_fn(emb_rows.len(), embedding.n_features(), |i, j| erows[emb_rows[i]].values[j]);
    let x_top = x_all.select_columns(&top_idx);
    let groups: Vec<&str> = emb_rows.iter().map(|&i| erows[i].speaker_id.as_str()).collect();

    if targets.names.is_empty() {
        return Ok(ProbeSuite {
            results: Vec::new(),
            excluded: targets.excluded,
            n_rows: emb_rows.len(),
        });
    }
    let all = nested_cv_regress_multi(&x_all, &targets.values, &groups, alpha_grid, cfg)?;
    let top = nested_cv_regress_multi(&x_top, &targets.values, &groups, alpha_grid, cfg)?;

    let results = targets
        .names
        .iter()
        .zip(categories)
        .zip(all.into_iter().zip(top))
        .map(|((name, category), (all, top))| {
            let digest_all = all.fold_plan.digest();
            let digest_top = top.fold_plan.digest();
            debug_assert_eq!(digest_all, digest_top);
            ProbeResult {
                feature_name: name.clone(),
                rmse_all: all.pooled_score,
                rmse_top: top.pooled_score,
                info_increase: information_increase(all.pooled_score, top.pooled_score),
                category,
                alphas_all: all.chosen_hyperparams,
                alphas_top: top.chosen_hyperparams,
                fold_plan_digest_all: digest_all,
                fold_plan_digest_top: digest_top,
            }
        })
        .collect();
    Ok(ProbeSuite {
        results,
        excluded: targets.excluded,
        n_rows: emb_rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAggregate {
    pub category: Category,
    pub mean_ii: f64,
    pub median_ii: f64,
    pub count: usize,
    pub values: Vec<f64>,
}

/// Midpoint of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

/// Mean and median information increase per category, in
/// Energy, Frequency, Spectral, Temporal order. Categories without any
/// probed feature are omitted.
pub fn aggregate_by_category(results: &[ProbeResult], category_map: &CategoryMap) -> Result<Vec<CategoryAggregate>> {
    if results.is_empty() {
        return Err(Error::Empty);
    }
    let mut buckets: HashMap<Category, Vec<f64>> = HashMap::new();
    for r in results {
        let cat = category_map.require(&r.feature_name)?;
        buckets.entry(cat).or_default().push(r.info_increase);
    }
    Ok(Category::ALL
        .iter()
        .filter_map(|cat| {
            let values = buckets.remove(cat)?;
            let count = values.len();
            Some(CategoryAggregate {
                category: *cat,
                mean_ii: values.iter().sum::<f64>() / count as f64,
                median_ii: median(&values).expect("non-empty"),
                count,
                values,
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryShare {
    pub category: Category,
    pub share: f64,
}

/// Share of total SHAP importance held by each category (all four listed,
/// summing to 1).
pub fn category_shap_profile(attribution: &Attribution, category_map: &CategoryMap) -> Result<Vec<CategoryShare>> {
    let mut sums: HashMap<Category, f64> = HashMap::new();
    for (name, &imp) in attribution.feature_names.iter().zip(&attribution.importance) {
        *sums.entry(category_map.require(name)?).or_insert(0.0) += imp;
    }
    let total: f64 = Category::ALL.iter().map(|c| sums.get(c).copied().unwrap_or(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroImportance);
    }
    Ok(Category::ALL
        .iter()
        .map(|&category| CategoryShare {
            category,
            share: sums.get(&category).copied().unwrap_or(0.0) / total,
        })
        .collect())
}
