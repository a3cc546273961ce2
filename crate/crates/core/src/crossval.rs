//! Speaker-disjoint cross-validation.
//!
//! Folds are built over speakers, never over rows, so an utterance's speaker
//! is always entirely on one side of a train/test split. Nested CV selects the
//! regularization parameter on the outer-training speakers only, then refits
//! and predicts the held-out speakers; the pooled score is computed once over
//! the concatenated out-of-fold predictions.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::BinaryTask;
use crate::error::{Error, Result};
use crate::linmod::{fit_logistic, RidgeSplit};

/// Assignment of speakers to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_of(&self, speaker: &str) -> Option<usize> {
        self.assignment.get(speaker).copied()
    }

    /// Fold index of every row. Panics if a group is not in the plan, which
    /// can only happen when the plan was built from different groups.
    pub fn row_folds<S: AsRef<str>>(&self, groups: &[S]) -> Vec<usize> {
        groups
            .iter()
            .map(|g| self.assignment[g.as_ref()])
            .collect()
    }

    /// Row indices in (train, test) for fold `fold`.
    pub fn split<S: AsRef<str>>(&self, groups: &[S], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, g) in groups.iter().enumerate() {
            if self.assignment[g.as_ref()] == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    /// SHA-256 over the fold count, seed and sorted assignment.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("k={};seed={}\n", self.k, self.seed));
        for (speaker, fold) in &self.assignment {
            h.update(speaker.as_bytes());
            h.update(format!("\t{fold}\n"));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Shuffles the distinct speakers with a seeded ChaCha8 permutation (starting
/// from sorted order) and deals them round-robin into `k` folds.
pub fn grouped_kfold<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("fold count must be at least 2, got {k}")));
    }
    let distinct: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    if distinct.len() < k {
        return Err(Error::TooFewSpeakers {
            speakers: distinct.len(),
            folds: k,
        });
    }
    let mut speakers: Vec<&str> = distinct.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);
    let assignment = speakers
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i % k))
        .collect();
    Ok(FoldPlan { k, assignment, seed })
}

/// splitmix64 finalizer over `seed` and `salt`; used for every derived seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold counts and seed for one (nested) cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CvConfig {
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_outer: 5,
            k_inner: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    /// Score on each outer test fold, in fold order.
    pub outer_scores: Vec<f64>,
    /// Score over the concatenated out-of-fold predictions.
    pub pooled_score: f64,
    /// Selected hyperparameter per outer fold.
    pub chosen_hyperparams: Vec<f64>,
    /// One prediction per row (0/1 labels for classification).
    pub oof_predictions: Vec<f64>,
    /// Outer fold count actually used.
    pub k_outer: usize,
    /// Inner fold count actually used, per outer fold.
    pub k_inner: Vec<usize>,
    pub fold_plan: FoldPlan,
    pub warnings: Vec<String>,
}

/// 2PR/(P+R) with the emotion as the positive class; 0 when there are no
/// true positives.
pub fn f1_score(y_true: &[bool], y_pred: &[bool]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    // Equivalent to 2PR/(P+R) and exact for small integer counts.
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

fn check_grid(grid: &[f64], allow_zero: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let ok = grid
        .iter()
        .all(|&v| v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0)));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("grid values must be positive and finite: {grid:?}")))
    }
}

/// A model family evaluated by nested CV. A problem may carry several
/// targets that share the design matrix; each target gets its own
/// hyperparameter selection.
trait Problem: Sync {
    fn n_rows(&self) -> usize;
    fn n_targets(&self) -> usize;
    /// Test-row predictions indexed `[grid value][target][test row]`.
    fn fit_predict_grid(&self, train: &[usize], test: &[usize], grid: &[f64], at: SplitId) -> Result<Vec<Vec<Vec<f64>>>>;
    /// Test-row predictions `[target][test row]`, target t fitted at `chosen[t]`.
    fn fit_predict_chosen(&self, train: &[usize], test: &[usize], chosen: &[f64], at: SplitId) -> Result<Vec<Vec<f64>>>;
    fn score(&self, target: usize, rows: &[usize], predictions: &[f64]) -> Result<f64>;
    /// Index of the winning grid value given mean inner scores.
    fn select(&self, grid: &[f64], mean_scores: &[f64]) -> usize;
}

#[derive(Clone, Copy)]
struct SplitId {
    outer: usize,
    inner: Option<usize>,
}

struct Classification<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [bool],
}

impl Classification<'_> {
    fn fit_predict(&self, train: &[usize], test: &[usize], grid: &[f64], at: SplitId) -> Result<Vec<Vec<f64>>> {
        let y_train: Vec<bool> = train.iter().map(|&i| self.y[i]).collect();
        if y_train.iter().all(|&v| v) || y_train.iter().all(|&v| !v) {
            return Err(Error::SplitSingleClass {
                outer: at.outer,
                inner: at.inner,
            });
        }
        let x_train = self.x.select_rows(train);
        let x_test = self.x.select_rows(test);
        grid.iter()
            .map(|&c| {
                let model = fit_logistic(&x_train, &y_train, c)?;
                Ok(model
                    .predict(&x_test)?
                    .into_iter()
                    .map(|p| if p { 1.0 } else { 0.0 })
                    .collect())
            })
            .collect()
    }
}

impl Problem for Classification<'_> {
    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn n_targets(&self) -> usize {
        1
    }

    fn fit_predict_grid(&self, train: &[usize], test: &[usize], grid: &[f64], at: SplitId) -> Result<Vec<Vec<Vec<f64>>>> {
        Ok(self
            .fit_predict(train, test, grid, at)?
            .into_iter()
            .map(|p| vec![p])
            .collect())
    }

    fn fit_predict_chosen(&self, train: &[usize], test: &[usize], chosen: &[f64], at: SplitId) -> Result<Vec<Vec<f64>>> {
        self.fit_predict(train, test, chosen, at)
    }

    fn score(&self, _target: usize, rows: &[usize], predictions: &[f64]) -> Result<f64> {
        let truth: Vec<bool> = rows.iter().map(|&i| self.y[i]).collect();
        let pred: Vec<bool> = predictions.iter().map(|&p| p > 0.5).collect();
        f1_score(&truth, &pred)
    }

    fn select(&self, grid: &[f64], mean_scores: &[f64]) -> usize {
        // Highest mean F1; ties go to the smallest C.
        let mut best = 0;
        for i in 1..grid.len() {
            let (s, b) = (mean_scores[i], mean_scores[best]);
            if s > b || (s == b && grid[i] < grid[best]) {
                best = i;
            }
        }
        best
    }
}

struct Regression<'a> {
    x: &'a DMatrix<f64>,
    /// One target per column.
    ys: &'a DMatrix<f64>,
}

impl Regression<'_> {
    fn split(&self, train: &[usize], test: &[usize]) -> Result<RidgeSplit> {
        RidgeSplit::new(
            &self.x.select_rows(train),
            &self.ys.select_rows(train),
            &self.x.select_rows(test),
        )
    }
}

impl Problem for Regression<'_> {
    fn n_rows(&self) -> usize {
        self.ys.nrows()
    }

    fn n_targets(&self) -> usize {
        self.ys.ncols()
    }

    fn fit_predict_grid(&self, train: &[usize], test: &[usize], grid: &[f64], _at: SplitId) -> Result<Vec<Vec<Vec<f64>>>> {
        let split = self.split(train, test)?;
        grid.iter()
            .map(|&alpha| {
                let pred = split.predict(alpha)?;
                Ok(pred.column_iter().map(|c| c.iter().copied().collect()).collect())
            })
            .collect()
    }

    fn fit_predict_chosen(&self, train: &[usize], test: &[usize], chosen: &[f64], _at: SplitId) -> Result<Vec<Vec<f64>>> {
        let split = self.split(train, test)?;
        let mut cache: Vec<(f64, DMatrix<f64>)> = Vec::new();
        let mut out = Vec::with_capacity(chosen.len());
        for (t, &alpha) in chosen.iter().enumerate() {
            let pos = match cache.iter().position(|(a, _)| *a == alpha) {
                Some(p) => p,
                None => {
                    cache.push((alpha, split.predict(alpha)?));
                    cache.len() - 1
                }
            };
            out.push(cache[pos].1.column(t).iter().copied().collect());
        }
        Ok(out)
    }

    fn score(&self, target: usize, rows: &[usize], predictions: &[f64]) -> Result<f64> {
        let truth: Vec<f64> = rows.iter().map(|&i| self.ys[(i, target)]).collect();
        rmse(&truth, predictions)
    }

    fn select(&self, grid: &[f64], mean_scores: &[f64]) -> usize {
        // Lowest mean RMSE; ties go to the largest alpha.
        let mut best = 0;
        for i in 1..grid.len() {
            let (s, b) = (mean_scores[i], mean_scores[best]);
            if s < b || (s == b && grid[i] > grid[best]) {
                best = i;
            }
        }
        best
    }
}

fn distinct_count<S: AsRef<str>>(groups: impl Iterator<Item = S>) -> usize {
    groups.map(|g| g.as_ref().to_string()).collect::<BTreeSet<_>>().len()
}

/// Fold count to use given the requested count and available speakers.
fn effective_k(requested: usize, speakers: usize, what: &str, warnings: &mut Vec<String>) -> Result<usize> {
    if requested < 2 {
        return Err(Error::InvalidConfig(format!("{what} fold count must be at least 2")));
    }
    if speakers < 2 {
        return Err(Error::TooFewSpeakers {
            speakers,
            folds: requested,
        });
    }
    if speakers < requested {
        warnings.push(format!("{what} folds reduced from {requested} to {speakers} (only {speakers} speakers)"));
        Ok(speakers)
    } else {
        Ok(requested)
    }
}

/// Row indices of one outer fold and of every inner split inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Plan over the outer-training speakers.
    pub inner_plan: FoldPlan,
    /// `(train, test)` row indices of each inner fold, indexing the full
    /// row set.
    pub inner: Vec<(Vec<usize>, Vec<usize>)>,
}

/// Every split a nested CV run with `cfg` uses on `groups`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedSplits {
    pub outer_plan: FoldPlan,
    pub outer: Vec<OuterSplit>,
    /// Fold-count reductions, outer first.
    pub warnings: Vec<String>,
}

impl NestedSplits {
    pub fn k_outer(&self) -> usize {
        self.outer_plan.k
    }
}

/// Builds the outer plan from `cfg.seed` and, for outer fold `f`, an inner
/// plan over its training speakers seeded with `derive_seed(cfg.seed, f + 1)`.
/// Fold counts larger than the available speakers are reduced to the
/// speaker count with a warning.
pub fn nested_splits<S: AsRef<str>>(groups: &[S], cfg: &CvConfig) -> Result<NestedSplits> {
    if groups.is_empty() {
        return Err(Error::Empty);
    }
    let mut warnings = Vec::new();
    let k_outer = effective_k(cfg.k_outer, distinct_count(groups.iter()), "outer", &mut warnings)?;
    let outer_plan = grouped_kfold(groups, k_outer, cfg.seed)?;
    let mut outer = Vec::with_capacity(k_outer);
    for fold in 0..k_outer {
        let (train, test) = outer_plan.split(groups, fold);
        let train_groups: Vec<&str> = train.iter().map(|&i| groups[i].as_ref()).collect();
        let k_inner = effective_k(
            cfg.k_inner,
            distinct_count(train_groups.iter()),
            &format!("inner (outer fold {fold})"),
            &mut warnings,
        )?;
        let inner_plan = grouped_kfold(&train_groups, k_inner, derive_seed(cfg.seed, fold as u64 + 1))?;
        let inner = (0..k_inner)
            .map(|i| {
                let (tr, te) = inner_plan.split(&train_groups, i);
                (
                    tr.iter().map(|&r| train[r]).collect(),
                    te.iter().map(|&r| train[r]).collect(),
                )
            })
            .collect();
        outer.push(OuterSplit {
            train,
            test,
            inner_plan,
            inner,
        });
    }
    Ok(NestedSplits {
        outer_plan,
        outer,
        warnings,
    })
}

struct OuterFold {
    /// Per target.
    chosen: Vec<f64>,
    /// `[target][test row]`
    predictions: Vec<Vec<f64>>,
    /// Per target.
    scores: Vec<f64>,
}

fn run_outer_fold<P: Problem>(problem: &P, split: &OuterSplit, fold: usize, grid: &[f64]) -> Result<OuterFold> {
    let k_inner = split.inner.len();
    let n_targets = problem.n_targets();
    // sums[target][grid]
    let mut sums = vec![vec![0.0; grid.len()]; n_targets];
    for (inner, (itrain, itest)) in split.inner.iter().enumerate() {
        let at = SplitId {
            outer: fold,
            inner: Some(inner),
        };
        let preds = problem.fit_predict_grid(itrain, itest, grid, at)?;
        for (g, per_target) in preds.iter().enumerate() {
            for (t, p) in per_target.iter().enumerate() {
                sums[t][g] += problem.score(t, itest, p)?;
            }
        }
    }
    let chosen: Vec<f64> = sums
        .iter()
        .map(|s| {
            let means: Vec<f64> = s.iter().map(|v| v / k_inner as f64).collect();
            grid[problem.select(grid, &means)]
        })
        .collect();
    let at = SplitId { outer: fold, inner: None };
    let predictions = problem.fit_predict_chosen(&split.train, &split.test, &chosen, at)?;
    let scores = predictions
        .iter()
        .enumerate()
        .map(|(t, p)| problem.score(t, &split.test, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(OuterFold {
        chosen,
        predictions,
        scores,
    })
}

/// Runs nested CV and returns one report per target, pooled score unset.
fn nested_cv<P: Problem>(problem: &P, groups: &[String], grid: &[f64], cfg: &CvConfig) -> Result<Vec<CvReport>> {
    let n = problem.n_rows();
    if groups.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: groups.len(),
        });
    }
    let splits = nested_splits(groups, cfg)?;
    for w in &splits.warnings {
        log::warn!("{w}");
    }

    let folds: Vec<Result<OuterFold>> = splits
        .outer
        .par_iter()
        .enumerate()
        .map(|(f, split)| run_outer_fold(problem, split, f, grid))
        .collect();
    // Surface the lowest-index failure so errors do not depend on scheduling.
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;

    let k_inner: Vec<usize> = splits.outer.iter().map(|s| s.inner.len()).collect();
    let reports = (0..problem.n_targets())
        .map(|t| {
            let mut oof = vec![f64::NAN; n];
            for (f, split) in folds.iter().zip(&splits.outer) {
                for (&row, &p) in split.test.iter().zip(&f.predictions[t]) {
                    oof[row] = p;
                }
            }
            debug_assert!(oof.iter().all(|v| !v.is_nan()));
            CvReport {
                outer_scores: folds.iter().map(|f| f.scores[t]).collect(),
                pooled_score: f64::NAN,
                chosen_hyperparams: folds.iter().map(|f| f.chosen[t]).collect(),
                oof_predictions: oof,
                k_outer: splits.k_outer(),
                k_inner: k_inner.clone(),
                fold_plan: splits.outer_plan.clone(),
                warnings: splits.warnings.clone(),
            }
        })
        .collect();
    Ok(reports)
}

/// Nested speaker-disjoint CV of the logistic classifier over `c_grid`.
/// Inner selection maximizes mean inner-fold F1 (ties: smallest C); the
/// pooled score is F1 over all out-of-fold predictions.
pub fn nested_cv_classify(task: &BinaryTask, c_grid: &[f64], cfg: &CvConfig) -> Result<CvReport> {
    check_grid(c_grid, false)?;
    let problem = Classification {
        x: &task.x,
        y: &task.y,
    };
    let mut report = nested_cv(&problem, &task.groups, c_grid, cfg)?.pop().expect("one target");
    let pred: Vec<bool> = report.oof_predictions.iter().map(|&p| p > 0.5).collect();
    report.pooled_score = f1_score(&task.y, &pred)?;
    Ok(report)
}

/// Nested speaker-disjoint CV of ridge regression over `alpha_grid`.
/// Inner selection minimizes mean inner-fold RMSE (ties: largest alpha); the
/// pooled score is RMSE over all out-of-fold predictions.
pub fn nested_cv_regress<S: AsRef<str>>(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[S],
    alpha_grid: &[f64],
    cfg: &CvConfig,
) -> Result<CvReport> {
    let ys = DMatrix::from_column_slice(y.len(), 1, y);
    Ok(nested_cv_regress_multi(x, &ys, groups, alpha_grid, cfg)?
        .pop()
        .expect("one target"))
}

/// [`nested_cv_regress`] for every column of `ys` at once. All targets share
/// the fold plan; each selects its own alpha.
pub fn nested_cv_regress_multi<S: AsRef<str>>(
    x: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    groups: &[S],
    alpha_grid: &[f64],
    cfg: &CvConfig,
) -> Result<Vec<CvReport>> {
    check_grid(alpha_grid, true)?;
    if x.nrows() != ys.nrows() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: ys.nrows(),
        });
    }
    let groups: Vec<String> = groups.iter().map(|g| g.as_ref().to_string()).collect();
    let problem = Regression { x, ys };
    let mut reports = nested_cv(&problem, &groups, alpha_grid, cfg)?;
    for (t, report) in reports.iter_mut().enumerate() {
        let truth: Vec<f64> = ys.column(t).iter().copied().collect();
        report.pooled_score = rmse(&truth, &report.oof_predictions)?;
    }
    Ok(reports)
}

/// Single-level grouped CV choosing C by pooled out-of-fold F1 (ties:
/// smallest C). Returns the chosen C and the pooled F1 per grid value.
pub fn select_c_by_cv(task: &BinaryTask, c_grid: &[f64], k_folds: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
    check_grid(c_grid, false)?;
    let mut warnings = Vec::new();
    let k = effective_k(k_folds, distinct_count(task.groups.iter()), "selection", &mut warnings)?;
    let plan = grouped_kfold(&task.groups, k, seed)?;
    let problem = Classification {
        x: &task.x,
        y: &task.y,
    };
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = plan.split(&task.groups, f);
            let preds = problem.fit_predict(&train, &test, c_grid, SplitId { outer: f, inner: None })?;
            Ok((test, preds))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut oof = vec![vec![false; task.n_rows()]; c_grid.len()];
    for (test, preds) in per_fold {
        for (g, p) in preds.iter().enumerate() {
            for (&row, &v) in test.iter().zip(p) {
                oof[g][row] = v > 0.5;
            }
        }
    }
    let scores = oof
        .iter()
        .map(|pred| f1_score(&task.y, pred))
        .collect::<Result<Vec<_>>>()?;
    let best = problem.select(c_grid, &scores);
    Ok((c_grid[best], scores))
}
