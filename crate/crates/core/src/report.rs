//! Report types and their serialized forms.
//!
//! `report.json` is the authoritative output. It is written with sorted
//! object keys and every float in `{:.16e}` form (17 significant digits), so
//! identical runs produce identical bytes. The CSV files are projections of
//! the same values with the same float formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::probe::{CategoryAggregate, CategoryShare, ProbeResult};

pub const REPORT_JSON: &str = "report.json";
pub const F1_SUMMARY_CSV: &str = "f1_summary.csv";
pub const PROBE_RESULTS_CSV: &str = "probe_results.csv";
pub const CATEGORY_AGGREGATES_CSV: &str = "category_aggregates.csv";
pub const SHAP_PROFILE_CSV: &str = "shap_category_profile.csv";
pub const SUBSET_CURVES_CSV: &str = "subset_curves.csv";

/// Fixed float format used in every output file.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // Not representable in JSON; callers never produce these in reports.
        "null".to_string()
    }
}

/// Serializes `value` as indented JSON with sorted keys and fixed float
/// formatting.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            newline(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[key], depth + 1);
            }
            newline(out, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("  ");
    }
}

/// Regularization values chosen per outer fold for each classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChosenC {
    pub acoustic: Vec<f64>,
    pub embedding_all: Vec<f64>,
    pub embedding_top: Vec<f64>,
    /// C of the single whole-task fit that produced the ranking.
    pub ranking_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetCurve {
    pub k_grid: Vec<usize>,
    pub f1_curve: Vec<f64>,
}

/// Settings that determined one emotion's results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionConfigEcho {
    pub neutral_label: String,
    pub c_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub k_outer: usize,
    pub k_inner: usize,
    pub subset_step: usize,
    pub subset_cap: Option<usize>,
    pub seed: u64,
    pub emotion_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionReport {
    pub emotion: String,
    pub n_utterances: usize,
    pub n_positive: usize,
    pub n_speakers: usize,
    pub f1_acoustic: f64,
    pub f1_embedding_all: f64,
    pub f1_embedding_top: f64,
    pub k_star: usize,
    pub top_features: Vec<String>,
    pub subset_curve: SubsetCurve,
    pub chosen_c: ChosenC,
    pub probe_results: Vec<ProbeResult>,
    /// Acoustic features left out of probing because they are constant.
    pub excluded_acoustic_features: Vec<String>,
    pub category_aggregates: Vec<CategoryAggregate>,
    /// Share of acoustic-classifier SHAP importance per category.
    pub category_shap_profile: Vec<CategoryShare>,
    /// Outer fold plan shared by every classifier of this emotion.
    pub fold_plan_digest: String,
    pub warnings: Vec<String>,
    pub config_echo: EmotionConfigEcho,
}

/// An emotion whose pipeline stopped, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub emotion: String,
    pub stage: String,
    pub message: String,
    /// Solver failure rather than bad input.
    pub internal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub config: Value,
    pub emotions: Vec<EmotionReport>,
    pub failures: Vec<Failure>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `report.json` and its CSV projections into `dir`, creating it if
/// needed.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join(REPORT_JSON);
    fs::write(&json_path, to_canonical_json(report)?).map_err(|e| Error::io(&json_path, e))?;

    let path = dir.join(F1_SUMMARY_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["emotion", "f1_acoustic", "f1_embedding_all", "f1_embedding_top", "k_star"])?;
    for e in &report.emotions {
        w.write_record([
            e.emotion.clone(),
            format_float(e.f1_acoustic),
            format_float(e.f1_embedding_all),
            format_float(e.f1_embedding_top),
            e.k_star.to_string(),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join(PROBE_RESULTS_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["emotion", "feature_name", "category", "rmse_all", "rmse_top", "info_increase"])?;
    for e in &report.emotions {
        for r in &e.probe_results {
            w.write_record([
                e.emotion.clone(),
                r.feature_name.clone(),
                r.category.to_string(),
                format_float(r.rmse_all),
                format_float(r.rmse_top),
                format_float(r.info_increase),
            ])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(CATEGORY_AGGREGATES_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["emotion", "category", "count", "mean_ii", "median_ii"])?;
    for e in &report.emotions {
        for a in &e.category_aggregates {
            w.write_record([
                e.emotion.clone(),
                a.category.to_string(),
                a.count.to_string(),
                format_float(a.mean_ii),
                format_float(a.median_ii),
            ])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(SHAP_PROFILE_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["emotion", "category", "share"])?;
    for e in &report.emotions {
        for s in &e.category_shap_profile {
            w.write_record([e.emotion.clone(), s.category.to_string(), format_float(s.share)])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(SUBSET_CURVES_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["emotion", "k", "f1"])?;
    for e in &report.emotions {
        for (k, f1) in e.subset_curve.k_grid.iter().zip(&e.subset_curve.f1_curve) {
            w.write_record([e.emotion.clone(), k.to_string(), format_float(*f1)])?;
        }
    }
    finish(w, &path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 1.0, "a": [0.1, 2], "c": {"z": null, "y": "q\"uote"}});
        let s = to_canonical_json(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [\n    1.0000000000000001e-1,\n    2\n  ],\n  \"b\": 1.0000000000000000e0,\n  \"c\": {\n    \"y\": \"q\\\"uote\",\n    \"z\": null\n  }\n}\n"
        );
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.1));
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [1.0 / 3.0, 0.987012987012987, 1e-300, 123456.789, -2.5e17] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn empty_containers() {
        assert_eq!(to_canonical_json(&json!({"a": [], "b": {}})).unwrap(), "{\n  \"a\": [],\n  \"b\": {}\n}\n");
    }
}
