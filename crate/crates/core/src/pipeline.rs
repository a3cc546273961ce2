//! End-to-end orchestration behind the `validate`, `run` and `synth`
//! subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::attrib::{fit_full_and_attribute, minimal_subset_search, rank_features};
use crate::crossval::{nested_cv_classify, CvConfig};
use crate::dataio::{load_feature_table, make_binary_task, save_feature_table, speaker_normalize, FeatureTable};
use crate::error::{Error, Result};
use crate::probe::{
    aggregate_by_category, category_shap_profile, egemaps_v02_category_map, load_category_map, run_probe_suite,
    write_category_map, CategoryMap,
};
use crate::report::{
    write_report, ChosenC, EmotionConfigEcho, EmotionReport, Failure, RunReport, SubsetCurve,
};
use crate::synth::{generate, SynthSpec};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_ALPHA_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_K_OUTER: usize = 5;
pub const DEFAULT_SUBSET_STEP: usize = 10;

pub const EMBEDDING_REPRESENTATION: &str = "embedding";
pub const ACOUSTIC_REPRESENTATION: &str = "acoustic";

pub const SYNTH_EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SYNTH_ACOUSTIC_FILE: &str = "acoustic.csv";
pub const SYNTH_CATEGORIES_FILE: &str = "categories.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub embeddings_path: PathBuf,
    pub acoustic_path: PathBuf,
    /// `None` selects the bundled eGeMAPSv02 map.
    pub category_map_path: Option<PathBuf>,
    pub emotions: Vec<String>,
    pub neutral_label: String,
    pub c_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Used for the inner loops and the ranking fit as well.
    pub k_outer: usize,
    pub subset_step: usize,
    pub subset_cap: Option<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// A configuration with every tunable at its default.
    pub fn new(
        embeddings_path: impl Into<PathBuf>,
        acoustic_path: impl Into<PathBuf>,
        emotions: Vec<String>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            embeddings_path: embeddings_path.into(),
            acoustic_path: acoustic_path.into(),
            category_map_path: None,
            emotions,
            neutral_label: crate::dataio::DEFAULT_NEUTRAL_LABEL.to_string(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            k_outer: DEFAULT_K_OUTER,
            subset_step: DEFAULT_SUBSET_STEP,
            subset_cap: None,
            seed: 0,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        for (name, grid) in [("c_grid", &self.c_grid), ("alpha_grid", &self.alpha_grid)] {
            if grid.is_empty() {
                return bad(&format!("{name} must not be empty"));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(&format!("{name} values must be finite and positive"));
            }
        }
        if self.emotions.is_empty() {
            return bad("at least one emotion is required");
        }
        let distinct: BTreeSet<&String> = self.emotions.iter().collect();
        if distinct.len() != self.emotions.len() {
            return bad("emotions must be distinct");
        }
        if self.emotions.contains(&self.neutral_label) {
            return bad("the neutral label cannot also be a target emotion");
        }
        if self.k_outer < 2 {
            return bad("k_outer must be at least 2");
        }
        if self.subset_step == 0 {
            return bad("subset_step must be at least 1");
        }
        if self.subset_cap == Some(0) {
            return bad("subset_cap must be at least 1");
        }
        Ok(())
    }

    pub fn cv_config(&self, seed: u64) -> CvConfig {
        CvConfig {
            k_outer: self.k_outer,
            k_inner: self.k_outer,
            seed,
        }
    }
}

/// Seed for one emotion: the first 8 bytes (little endian) of
/// SHA-256(seed as 8 little-endian bytes ‖ emotion as UTF-8).
pub fn emotion_seed(seed: u64, emotion: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(emotion.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn load_category_map_or_default(path: Option<&Path>) -> Result<CategoryMap> {
    match path {
        Some(p) => load_category_map(p),
        None => Ok(egemaps_v02_category_map()),
    }
}

/// Problems found by [`cmd_validate`], one human-readable line each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationSummary {
    pub issues: Vec<String>,
}

impl ValidationSummary {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

fn check_tables(
    emb: &FeatureTable,
    ac: &FeatureTable,
    map: &CategoryMap,
    emotions: &[String],
    neutral: &str,
    issues: &mut Vec<String>,
) {
    let emb_ids: BTreeSet<&str> = emb.rows().iter().map(|r| r.utterance_id.as_str()).collect();
    let ac_ids: BTreeSet<&str> = ac.rows().iter().map(|r| r.utterance_id.as_str()).collect();
    for id in emb_ids.difference(&ac_ids) {
        issues.push(format!("utterance `{id}` is in the embedding table but not the acoustic table"));
    }
    for id in ac_ids.difference(&emb_ids) {
        issues.push(format!("utterance `{id}` is in the acoustic table but not the embedding table"));
    }
    let ac_index = ac.row_index();
    for r in emb.rows() {
        if let Some(&i) = ac_index.get(r.utterance_id.as_str()) {
            let a = &ac.rows()[i];
            if a.speaker_id != r.speaker_id || a.emotion_label != r.emotion_label {
                issues.push(format!(
                    "utterance `{}` has different speaker or label in the two tables",
                    r.utterance_id
                ));
            }
        }
    }
    for (table, name) in [(emb, "embedding"), (ac, "acoustic")] {
        let counts = table.label_counts();
        for label in emotions.iter().map(String::as_str).chain([neutral]) {
            if !counts.contains_key(label) {
                issues.push(format!("label `{label}` does not occur in the {name} table"));
            }
        }
    }
    for col in map.missing(ac.feature_names()) {
        issues.push(format!("acoustic column `{col}` has no category mapping"));
    }
}

/// Loads both tables and the category map and lists every problem that
/// would stop a run: unreadable inputs, utterances present in only one
/// table, absent labels and unmapped acoustic columns.
pub fn cmd_validate(
    embeddings_path: &Path,
    acoustic_path: &Path,
    category_map_path: Option<&Path>,
    emotions: &[String],
    neutral_label: &str,
) -> ValidationSummary {
    let mut issues = Vec::new();
    let emb = load_feature_table(embeddings_path, EMBEDDING_REPRESENTATION)
        .map_err(|e| issues.push(format!("embedding table {}: {e}", embeddings_path.display())))
        .ok();
    let ac = load_feature_table(acoustic_path, ACOUSTIC_REPRESENTATION)
        .map_err(|e| issues.push(format!("acoustic table {}: {e}", acoustic_path.display())))
        .ok();
    let map = load_category_map_or_default(category_map_path)
        .map_err(|e| issues.push(format!("category map: {e}")))
        .ok();
    if let (Some(emb), Some(ac), Some(map)) = (emb, ac, map) {
        check_tables(&emb, &ac, &map, emotions, neutral_label, &mut issues);
    }
    ValidationSummary { issues }
}

struct StageError {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

fn run_emotion(
    config: &RunConfig,
    emotion: &str,
    emb: &FeatureTable,
    ac: &FeatureTable,
    map: &CategoryMap,
) -> std::result::Result<EmotionReport, StageError> {
    let seed = emotion_seed(config.seed, emotion);
    let cfg = config.cv_config(seed);
    let emb_task = make_binary_task(emb, emotion, &config.neutral_label, None).stage("task")?;
    let ac_task = make_binary_task(ac, emotion, &config.neutral_label, None).stage("task")?;

    let ac_cv = nested_cv_classify(&ac_task, &config.c_grid, &cfg).stage("classify_acoustic")?;
    let all_cv = nested_cv_classify(&emb_task, &config.c_grid, &cfg).stage("classify_embedding_all")?;

    let ac_fit = fit_full_and_attribute(&ac_task, &config.c_grid, config.k_outer, seed).stage("attribute_acoustic")?;
    let shap_profile = category_shap_profile(&ac_fit.attribution, map).stage("attribute_acoustic")?;

    let emb_fit =
        fit_full_and_attribute(&emb_task, &config.c_grid, config.k_outer, seed).stage("attribute_embedding")?;
    let ranking = rank_features(&emb_fit.attribution);
    let subset = minimal_subset_search(
        &emb_task,
        &ranking,
        config.subset_step,
        config.subset_cap,
        &config.c_grid,
        &cfg,
    )
    .stage("subset_search")?;
    let top_cv = subset.report_at_k_star();

    let suite = run_probe_suite(
        emb,
        ac,
        &emb_task.utterance_ids,
        &subset.top_features,
        map,
        &config.alpha_grid,
        &cfg,
    )
    .stage("probe")?;
    let aggregates = aggregate_by_category(&suite.results, map).stage("aggregate")?;

    let mut warnings = Vec::new();
    for (label, report) in [("acoustic", &ac_cv), ("embedding_all", &all_cv), ("embedding_top", top_cv)] {
        warnings.extend(report.warnings.iter().map(|w| format!("{label}: {w}")));
    }
    warnings.sort();
    warnings.dedup();

    let speakers: BTreeSet<&String> = emb_task.groups.iter().collect();
    Ok(EmotionReport {
        emotion: emotion.to_string(),
        n_utterances: emb_task.n_rows(),
        n_positive: emb_task.n_positive(),
        n_speakers: speakers.len(),
        f1_acoustic: ac_cv.pooled_score,
        f1_embedding_all: all_cv.pooled_score,
        f1_embedding_top: top_cv.pooled_score,
        k_star: subset.k_star,
        top_features: subset.top_features.clone(),
        subset_curve: SubsetCurve {
            k_grid: subset.k_grid.clone(),
            f1_curve: subset.f1_curve.clone(),
        },
        chosen_c: ChosenC {
            acoustic: ac_cv.chosen_hyperparams.clone(),
            embedding_all: all_cv.chosen_hyperparams.clone(),
            embedding_top: top_cv.chosen_hyperparams.clone(),
            ranking_fit: emb_fit.chosen_c,
        },
        probe_results: suite.results,
        excluded_acoustic_features: suite.excluded,
        category_aggregates: aggregates,
        category_shap_profile: shap_profile,
        fold_plan_digest: all_cv.fold_plan.digest(),
        warnings,
        config_echo: EmotionConfigEcho {
            neutral_label: config.neutral_label.clone(),
            c_grid: config.c_grid.clone(),
            alpha_grid: config.alpha_grid.clone(),
            k_outer: config.k_outer,
            k_inner: cfg.k_inner,
            subset_step: config.subset_step,
            subset_cap: config.subset_cap,
            seed: config.seed,
            emotion_seed: seed,
        },
    })
}

/// Report of a completed run and where it was written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn has_internal_failure(&self) -> bool {
        self.report.failures.iter().any(|f| f.internal)
    }
}

/// Runs every configured emotion and writes the report files. Emotions are
/// independent; one that fails is listed in the failure manifest and the
/// others are still reported. `threads == 0` lets rayon pick.
pub fn cmd_run(config: &RunConfig, threads: usize) -> Result<RunOutcome> {
    config.validate()?;
    let emb = load_feature_table(&config.embeddings_path, EMBEDDING_REPRESENTATION)?;
    let ac = load_feature_table(&config.acoustic_path, ACOUSTIC_REPRESENTATION)?;
    let map = load_category_map_or_default(config.category_map_path.as_deref())?;
    let mut issues = Vec::new();
    check_tables(&emb, &ac, &map, &[], &config.neutral_label, &mut issues);
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues.join("; ")));
    }
    let emb = speaker_normalize(&emb);
    let ac = speaker_normalize(&ac);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    let results: Vec<std::result::Result<EmotionReport, StageError>> = pool.install(|| {
        config
            .emotions
            .par_iter()
            .map(|emotion| run_emotion(config, emotion, &emb, &ac, &map))
            .collect()
    });

    let mut emotions = Vec::new();
    let mut failures = Vec::new();
    for (emotion, result) in config.emotions.iter().zip(results) {
        match result {
            Ok(r) => emotions.push(r),
            Err(StageError { stage, error }) => {
                log::error!("emotion `{emotion}` failed at {stage}: {error}");
                failures.push(Failure {
                    emotion: emotion.clone(),
                    stage: stage.to_string(),
                    message: error.to_string(),
                    internal: error.is_internal(),
                });
            }
        }
    }
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(config)?,
        emotions,
        failures,
    };
    write_report(&report, &config.output_dir)?;
    Ok(RunOutcome {
        report,
        output_dir: config.output_dir.clone(),
    })
}

/// Writes the synthetic embedding table, acoustic table and category map
/// into `output_dir`; returns the three paths.
pub fn cmd_synth(spec: &SynthSpec, output_dir: &Path) -> Result<[PathBuf; 3]> {
    let data = generate(spec)?;
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let emb_path = output_dir.join(SYNTH_EMBEDDINGS_FILE);
    let ac_path = output_dir.join(SYNTH_ACOUSTIC_FILE);
    let map_path = output_dir.join(SYNTH_CATEGORIES_FILE);
    save_feature_table(&data.embedding, &emb_path)?;
    save_feature_table(&data.acoustic, &ac_path)?;
    let file = fs::File::create(&map_path).map_err(|e| Error::io(&map_path, e))?;
    write_category_map(&data.category_map, std::io::BufWriter::new(file))?;
    Ok([emb_path, ac_path, map_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emotion_seeds_are_stable_and_independent() {
        assert_eq!(emotion_seed(0, "anger"), emotion_seed(0, "anger"));
        assert_ne!(emotion_seed(0, "anger"), emotion_seed(0, "joy"));
        assert_ne!(emotion_seed(0, "anger"), emotion_seed(1, "anger"));
        let mut h = Sha256::new();
        h.update([0u8; 8]);
        h.update(b"anger");
        let d = h.finalize();
        let expected = d[..8].iter().rev().fold(0u64, |acc, &b| (acc << 8) | b as u64);
        assert_eq!(emotion_seed(0, "anger"), expected);
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::new("e.csv", "a.csv", vec!["anger".into()], "out");
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig { c_grid: vec![], ..ok.clone() },
            RunConfig { alpha_grid: vec![0.0], ..ok.clone() },
            RunConfig { c_grid: vec![f64::NAN], ..ok.clone() },
            RunConfig { emotions: vec![], ..ok.clone() },
            RunConfig { emotions: vec!["neutral".into()], ..ok.clone() },
            RunConfig { emotions: vec!["a".into(), "a".into()], ..ok.clone() },
            RunConfig { k_outer: 1, ..ok.clone() },
            RunConfig { subset_step: 0, ..ok.clone() },
            RunConfig { subset_cap: Some(0), ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
    }
}
