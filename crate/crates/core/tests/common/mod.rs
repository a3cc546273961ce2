//! Independent oracles and data builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use emprobe::crossval::NestedSplits;
use emprobe::dataio::{BinaryTask, FeatureTable, UtteranceRecord};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| normal(rng))
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col] != 0.0, "oracle system is singular");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Minimizer of ‖y − Xw − b‖² + α‖w‖² from the (d+1)×(d+1) normal
/// equations of the uncentered, intercept-augmented problem.
pub fn ridge_oracle(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let (n, d) = x.shape();
    let col = |j: usize, i: usize| if j == d { 1.0 } else { x[(i, j)] };
    let mut a = vec![vec![0.0; d + 1]; d + 1];
    let mut rhs = vec![0.0; d + 1];
    for j in 0..=d {
        for k in 0..=d {
            a[j][k] = (0..n).map(|i| col(j, i) * col(k, i)).sum();
        }
        if j < d {
            a[j][j] += alpha;
        }
        rhs[j] = (0..n).map(|i| col(j, i) * y[i]).sum();
    }
    let sol = gauss_solve(a, rhs);
    (sol[..d].to_vec(), sol[d])
}

pub fn ridge_objective(x: &DMatrix<f64>, y: &[f64], alpha: f64, w: &[f64], b: f64) -> f64 {
    let mut sse = 0.0;
    for i in 0..x.nrows() {
        let pred: f64 = (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>() + b;
        sse += (y[i] - pred).powi(2);
    }
    sse + alpha * w.iter().map(|v| v * v).sum::<f64>()
}

/// ½‖w‖² + C Σ ln(1 + e^{−s m}), written directly.
pub fn logistic_objective_naive(x: &DMatrix<f64>, y: &[bool], c: f64, w: &[f64], b: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..x.nrows() {
        let m: f64 = (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>() + b;
        let s = if y[i] { 1.0 } else { -1.0 };
        loss += (1.0 + (-s * m).exp()).ln();
    }
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * loss
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|k| {
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[k] += h;
            lo[k] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `per` rows for each of `n_speakers` speakers, speaker-major.
pub fn speaker_groups(n_speakers: usize, per: usize) -> Vec<String> {
    (0..n_speakers)
        .flat_map(|s| std::iter::repeat_n(format!("spk{s:02}"), per))
        .collect()
}

pub fn column_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("emb.{j}")).collect()
}

pub fn task(x: DMatrix<f64>, y: Vec<bool>, groups: Vec<String>) -> BinaryTask {
    let n = x.nrows();
    let d = x.ncols();
    BinaryTask {
        emotion: "emo".into(),
        x,
        y,
        groups,
        column_names: column_names(d),
        utterance_ids: (0..n).map(|i| format!("u{i:04}")).collect(),
    }
}

/// Two Gaussian clouds at ±`shift` along every axis, alternating labels
/// within each speaker.
pub fn clouds(seed: u64, n_speakers: usize, per: usize, d: usize, shift: f64) -> BinaryTask {
    let mut r = rng(seed);
    let n = n_speakers * per;
    let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let x = DMatrix::from_fn(n, d, |i, _| normal(&mut r) + if y[i] { shift } else { -shift });
    task(x, y, speaker_groups(n_speakers, per))
}

/// Table whose rows carry `values`, with the given speakers and labels.
pub fn table(values: &DMatrix<f64>, groups: &[String], labels: &[&str], names: Vec<String>, rep: &str) -> FeatureTable {
    let rows = (0..values.nrows())
        .map(|i| UtteranceRecord {
            utterance_id: format!("u{i:04}"),
            speaker_id: groups[i].clone(),
            dataset_id: "test".into(),
            emotion_label: labels[i].to_string(),
            values: values.row(i).iter().copied().collect(),
        })
        .collect();
    FeatureTable::new(rows, names, rep).unwrap()
}

fn speakers_of(rows: &[usize], groups: &[String]) -> BTreeSet<String> {
    rows.iter().map(|&i| groups[i].clone()).collect()
}

/// Every check the nested protocol promises about its splits.
pub fn assert_nested_invariants(groups: &[String], splits: &NestedSplits) {
    let n = groups.len();
    let plan = &splits.outer_plan;
    let distinct: BTreeSet<&String> = groups.iter().collect();
    assert_eq!(plan.assignment.len(), distinct.len());
    for fold in plan.assignment.values() {
        assert!(*fold < plan.k);
    }
    let mut seen = vec![0usize; n];
    for outer in &splits.outer {
        assert!(!outer.test.is_empty());
        for &i in &outer.test {
            seen[i] += 1;
        }
        let mut all: Vec<usize> = outer.train.iter().chain(&outer.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(speakers_of(&outer.train, groups).is_disjoint(&speakers_of(&outer.test, groups)));

        let mut inner_seen: Vec<usize> = Vec::new();
        for (itrain, itest) in &outer.inner {
            assert!(!itest.is_empty());
            assert!(speakers_of(itrain, groups).is_disjoint(&speakers_of(itest, groups)));
            let outer_train: BTreeSet<usize> = outer.train.iter().copied().collect();
            assert!(itrain.iter().chain(itest).all(|i| outer_train.contains(i)));
            assert_eq!(itrain.len() + itest.len(), outer.train.len());
            inner_seen.extend(itest);
        }
        inner_seen.sort();
        assert_eq!(inner_seen, outer.train);
    }
    assert!(seen.iter().all(|&c| c == 1), "outer test sets must partition the rows");
}

/// Random speaker layout with 1..=`max_per` rows per speaker, rows shuffled.
pub fn layout(r: &mut ChaCha8Rng, n_speakers: usize, max_per: usize) -> Vec<String> {
    let mut groups = Vec::new();
    for s in 0..n_speakers {
        for _ in 0..r.random_range(1..=max_per) {
            groups.push(format!("s{s}"));
        }
    }
    // Interleave so rows of one speaker are not contiguous.
    for i in (1..groups.len()).rev() {
        let j = r.random_range(0..=i);
        groups.swap(i, j);
    }
    groups
}
