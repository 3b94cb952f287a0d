//! Leave-one-speaker-out experiments.
//!
//! The pipeline is manifest -> per-recording mean-pooled features ->
//! one fold per speaker (C chosen by an inner leave-one-speaker-out search
//! over the training speakers only) -> pooled and per-fold metrics.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{load_wav, CorpusManifest, ManifestEntry, SeverityClass, SpeakingTask};
use crate::classifier::{default_c_grid, grid_search_c, train_ovo, Dataset, GridScore, OvoModel, Sample, SmoOptions};
use crate::error::{Error, Result};
use crate::features::{extract, mean_pool, FeatureConfig, FeatureKind};
use crate::metrics::{
    aggregate_folds, confusion, display_relative_pct, relative_improvement_pct, render_table, round_to,
    table_columns, table_row, ExperimentReport,
};
use crate::sff::SffConfig;

const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskFilter {
    #[default]
    All,
    Only(SpeakingTask),
}

impl TaskFilter {
    pub fn accepts(self, task: SpeakingTask) -> bool {
        match self {
            TaskFilter::All => true,
            TaskFilter::Only(t) => t == task,
        }
    }
}

impl fmt::Display for TaskFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskFilter::All => f.write_str("all"),
            TaskFilter::Only(t) => t.fmt(f),
        }
    }
}

impl FromStr for TaskFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(TaskFilter::All),
            other => other.parse().map(TaskFilter::Only),
        }
    }
}

impl Serialize for TaskFilter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskFilter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub feature_kind: FeatureKind,
    pub task: TaskFilter,
    pub sff: SffConfig,
    pub features: FeatureConfig,
    pub c_grid: Vec<f64>,
    /// Recorded for provenance; every stage is deterministic.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Skip unreadable recordings instead of aborting.
    pub skip_failed_files: bool,
    pub smo_tol: f64,
    pub smo_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature_kind: FeatureKind::Sffcc,
            task: TaskFilter::All,
            sff: SffConfig::default(),
            features: FeatureConfig::default(),
            c_grid: default_c_grid(),
            seed: 0,
            output_dir: None,
            skip_failed_files: false,
            smo_tol: 1e-4,
            smo_max_iter: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn smo_options(&self) -> SmoOptions {
        SmoOptions {
            tol: self.smo_tol,
            max_iter: self.smo_max_iter,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Parses a C grid: either `lo..hi` (decade steps between two powers of ten)
/// or a comma-separated list of values.
pub fn parse_c_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::InvalidArgument(format!("bad C grid {spec:?}: {m}"));
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| bad("lower bound"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("upper bound"))?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(bad("need 0 < lo <= hi"));
        }
        let (elo, ehi) = (lo.log10(), hi.log10());
        if (elo - elo.round()).abs() > 1e-9 || (ehi - ehi.round()).abs() > 1e-9 {
            return Err(bad("range bounds must be powers of ten"));
        }
        Ok((elo.round() as i32..=ehi.round() as i32).map(|e| 10f64.powi(e)).collect())
    } else {
        let grid = spec
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(v)))
            .collect::<Result<Vec<_>>>()?;
        if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0)) {
            return Err(bad("values must be positive"));
        }
        Ok(grid)
    }
}

/// One mean-pooled feature vector with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub class_label: SeverityClass,
    pub task: SpeakingTask,
    pub feature_kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Sidecar written next to a feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFileMeta {
    pub feature_kind: FeatureKind,
    pub task: TaskFilter,
    pub sample_rate_hz: u32,
    pub n_rows: usize,
    pub features: FeatureConfig,
    pub sff: SffConfig,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub rows: Vec<FeatureRow>,
    pub sample_rate_hz: u32,
    /// `(audio path, error message)` for every skipped recording.
    pub failures: Vec<(PathBuf, String)>,
}

fn extract_one(entry: &ManifestEntry, config: &ExperimentConfig) -> Result<(u32, FeatureRow)> {
    let sig = load_wav(&entry.audio_path)?;
    let fm = extract(config.feature_kind, &sig, &config.sff, &config.features)?;
    let pooled = mean_pool(&fm, entry.utterance_id.clone())?;
    Ok((
        sig.sample_rate_hz(),
        FeatureRow {
            utterance_id: entry.utterance_id.clone(),
            speaker_id: entry.speaker_id.clone(),
            class_label: entry.class_label,
            task: entry.task,
            feature_kind: config.feature_kind,
            values: pooled.values,
        },
    ))
}

/// Extracts one pooled vector per manifest entry passing the task filter.
/// Recordings are processed in parallel; output follows manifest order.
pub fn extract_features(manifest: &CorpusManifest, config: &ExperimentConfig) -> Result<Extraction> {
    let selected = manifest.filter(|e| config.task.accepts(e.task));
    if selected.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no recordings for task filter {}",
            config.task
        )));
    }
    let results: Vec<Result<(u32, FeatureRow)>> = selected
        .entries()
        .par_iter()
        .map(|e| extract_one(e, config))
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut rate: Option<(u32, PathBuf)> = None;
    for (entry, res) in selected.entries().iter().zip(results) {
        match res {
            Ok((sr, row)) => {
                match &rate {
                    None => rate = Some((sr, entry.audio_path.clone())),
                    Some((first, _)) if *first != sr => {
                        return Err(Error::MixedSampleRates {
                            first: *first,
                            other: sr,
                            path: entry.audio_path.display().to_string(),
                        })
                    }
                    Some(_) => {}
                }
                rows.push(row);
            }
            Err(e) => failures.push((entry.audio_path.clone(), e.to_string())),
        }
    }
    if !failures.is_empty() {
        if !config.skip_failed_files {
            let (path, msg) = &failures[0];
            return Err(Error::Extraction {
                count: failures.len(),
                first: format!("{}: {msg}", path.display()),
            });
        }
        for (path, msg) in &failures {
            log::warn!("skipping {}: {msg}", path.display());
        }
    }
    let Some((sample_rate_hz, _)) = rate else {
        return Err(Error::InsufficientData("every recording failed".into()));
    };
    Ok(Extraction {
        rows,
        sample_rate_hz,
        failures,
    })
}

fn fmt_float(v: f64) -> String {
    // Shortest representation that parses back to the same value.
    format!("{v:?}")
}

pub fn feature_csv_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["utterance_id", "speaker_id", "class_label", "task", "feature_kind"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..dim).map(|i| format!("f{i}")));
    h
}

pub fn write_feature_csv(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<()> {
    let path = path.as_ref();
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(feature_csv_header(dim))?;
    for r in rows {
        let mut rec = vec![
            r.utterance_id.clone(),
            r.speaker_id.clone(),
            r.class_label.index().to_string(),
            r.task.to_string(),
            r.feature_kind.to_string(),
        ];
        rec.extend(r.values.iter().map(|v| fmt_float(*v)));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 6 || header[..5] != feature_csv_header(0)[..] {
        return Err(Error::InvalidArgument(format!(
            "{} is not a feature file (header {:?})",
            path.display(),
            header
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(5)
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad feature {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            utterance_id: rec[0].to_string(),
            speaker_id: rec[1].to_string(),
            class_label: rec[2].parse()?,
            task: rec[3].parse()?,
            feature_kind: rec[4].parse()?,
            values,
        });
    }
    Ok(rows)
}

/// Extracts features and writes `features_<kind>.csv` with a JSON sidecar
/// into `out_dir`. Re-running with the same inputs rewrites identical bytes.
pub fn extract_all(manifest: &CorpusManifest, config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ex = extract_features(manifest, config)?;
    let stem = format!("features_{}", config.feature_kind.as_str().replace('-', "_"));
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_feature_csv(&csv_path, &ex.rows)?;
    let meta = FeatureFileMeta {
        feature_kind: config.feature_kind,
        task: config.task,
        sample_rate_hz: ex.sample_rate_hz,
        n_rows: ex.rows.len(),
        features: config.features.clone(),
        sff: config.sff,
        config_fingerprint: config.fingerprint(),
    };
    let meta_path = out_dir.join(format!("{stem}.json"));
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(csv_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePrediction {
    pub utterance_id: String,
    pub actual: SeverityClass,
    pub predicted: SeverityClass,
    /// Decision value of each pairwise model, in model order.
    pub decision_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub held_out_speaker: String,
    pub chosen_c: f64,
    pub grid_scores: Vec<GridScore>,
    pub n_train: usize,
    pub predictions: Vec<UtterancePrediction>,
    pub warnings: Vec<String>,
}

/// How the numbers were produced; embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolNotes {
    pub hyperparameter_selection: String,
    pub sample_unit: String,
    pub accuracy_spread: String,
    pub class_wise_metrics: String,
    pub baseline_mel_filters: usize,
}

impl ProtocolNotes {
    fn for_config(cfg: &ExperimentConfig) -> Self {
        Self {
            hyperparameter_selection:
                "nested: C chosen by leave-one-speaker-out UAR over the training speakers of each fold".into(),
            sample_unit: "one mean-pooled vector per recording; folds grouped by speaker".into(),
            accuracy_spread: "mean and population standard deviation of per-fold accuracy".into(),
            class_wise_metrics: "computed from predictions pooled over all folds".into(),
            baseline_mel_filters: cfg.features.baseline_mel_filters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub feature_kind: FeatureKind,
    pub config: ExperimentConfig,
    pub notes: ProtocolNotes,
    pub n_utterances: usize,
    pub folds: Vec<FoldReport>,
    pub summary: ExperimentReport,
    /// Folds verified to exclude the held-out speaker from training.
    pub leakage_checks_passed: usize,
}

fn rows_to_dataset(rows: &[FeatureRow]) -> Result<Dataset> {
    Dataset::new(
        rows.iter()
            .map(|r| Sample {
                values: r.values.clone(),
                label: r.class_label.index(),
                speaker_id: r.speaker_id.clone(),
                utterance_id: r.utterance_id.clone(),
            })
            .collect(),
    )
}

fn run_fold(data: &Dataset, speaker: &str, grid: &[f64], opts: &SmoOptions) -> Result<FoldReport> {
    let all_classes = data.classes();
    let (train, test) = data.leave_out_speaker(speaker);
    if train.samples().iter().any(|s| s.speaker_id == speaker) {
        return Err(Error::Leakage(speaker.to_string()));
    }
    if train.classes() != all_classes {
        return Err(Error::InsufficientData(format!(
            "holding out speaker {speaker} removes a class from training"
        )));
    }
    let search = grid_search_c(&train, grid, N_CLASSES, opts)?;
    let model = train_ovo(&train, search.best_c, opts)?;
    let label = |i: usize| SeverityClass::from_index(i).expect("three-class labels");
    let predictions = test
        .samples()
        .iter()
        .map(|s| {
            let p = model.predict(&s.values)?;
            Ok(UtterancePrediction {
                utterance_id: s.utterance_id.clone(),
                actual: label(s.label),
                predicted: label(p.label),
                decision_values: p.decision_values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldReport {
        held_out_speaker: speaker.to_string(),
        chosen_c: search.best_c,
        grid_scores: search.scores,
        n_train: train.len(),
        predictions,
        warnings: search.warnings,
    })
}

/// Cross-validates pooled feature rows, one fold per speaker. Folds run in
/// parallel and are reported in speaker order.
pub fn run_loso_on_rows(rows: &[FeatureRow], config: &ExperimentConfig) -> Result<LosoReport> {
    let data = rows_to_dataset(rows)?;
    let per_class = data.speakers_per_class();
    if per_class.len() < 2 || per_class.values().any(|&n| n < 2) {
        return Err(Error::InsufficientData(format!(
            "every class needs at least two speakers, found {per_class:?}"
        )));
    }
    let speakers: Vec<String> = data.speakers().into_iter().map(str::to_string).collect();
    let opts = config.smo_options();
    let folds = speakers
        .par_iter()
        .map(|s| run_fold(&data, s, &config.c_grid, &opts))
        .collect::<Result<Vec<_>>>()?;

    let confusions = folds
        .iter()
        .map(|f| {
            let (a, p): (Vec<usize>, Vec<usize>) = f
                .predictions
                .iter()
                .map(|u| (u.actual.index(), u.predicted.index()))
                .unzip();
            confusion(&a, &p, N_CLASSES)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate_folds(&confusions)?;
    let kind = rows.first().map_or(config.feature_kind, |r| r.feature_kind);
    Ok(LosoReport {
        feature_kind: kind,
        config: ExperimentConfig {
            feature_kind: kind,
            ..config.clone()
        },
        notes: ProtocolNotes::for_config(config),
        n_utterances: rows.len(),
        leakage_checks_passed: folds.len(),
        folds,
        summary,
    })
}

/// Full experiment: extraction followed by leave-one-speaker-out evaluation.
pub fn run_loso(manifest: &CorpusManifest, config: &ExperimentConfig) -> Result<LosoReport> {
    let ex = extract_features(manifest, config)?;
    run_loso_on_rows(&ex.rows, config)
}

pub const CLASS_NAMES: [&str; 3] = ["healthy", "mild", "severe"];

/// Writes `report.json`, `table.txt` and `confusion.csv` into `out_dir`.
pub fn write_report(report: &LosoReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("report.json", serde_json::to_string_pretty(report)?)?;
    let table = render_table(
        &table_columns(),
        &[table_row(report.feature_kind.display_name(), &report.summary)],
    );
    write(
        "table.txt",
        format!(
            "{table}\npooled UAR: {:.4}\nfolds: {}\n",
            report.summary.pooled.uar, report.summary.n_folds
        ),
    )?;
    write("confusion.csv", report.summary.pooled.confusion.to_csv(&CLASS_NAMES))
}

/// Fits the final model on every row with C chosen by the same inner search.
pub fn fit_final_model(rows: &[FeatureRow], config: &ExperimentConfig) -> Result<OvoModel> {
    let data = rows_to_dataset(rows)?;
    let opts = config.smo_options();
    let search = grid_search_c(&data, &config.c_grid, N_CLASSES, &opts)?;
    let mut model = train_ovo(&data, search.best_c, &opts)?;
    model.config_fingerprint = Some(config.fingerprint());
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub feature_kind: FeatureKind,
    /// Displayed accuracy in percent (one decimal).
    pub accuracy_pct: f64,
    pub absolute_delta_pct: f64,
    pub relative_delta_pct: f64,
    /// Relative delta as displayed (0.1 % resolution).
    pub relative_display: String,
}

/// Absolute and relative accuracy changes against the first entry.
/// Accuracies are percentages as displayed in the results table.
pub fn improvements(accuracies: &[(FeatureKind, f64)]) -> Result<Vec<ComparisonRow>> {
    let Some(&(_, base)) = accuracies.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    if !(base > 0.0) {
        return Err(Error::InvalidArgument("baseline accuracy must be positive".into()));
    }
    Ok(accuracies
        .iter()
        .map(|&(kind, acc)| ComparisonRow {
            feature_kind: kind,
            accuracy_pct: acc,
            absolute_delta_pct: round_to(acc - base, 1),
            relative_delta_pct: relative_improvement_pct(base, acc),
            relative_display: display_relative_pct(base, acc),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: TaskFilter,
    pub reports: Vec<LosoReport>,
    pub improvements: Vec<ComparisonRow>,
}

impl Comparison {
    /// Results table followed by the improvement table.
    pub fn render(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .reports
            .iter()
            .map(|r| table_row(r.feature_kind.display_name(), &r.summary))
            .collect();
        let mut out = format!("Task: {}\n", self.task);
        out.push_str(&render_table(&table_columns(), &rows));
        out.push('\n');
        let header: Vec<String> = ["Feature", "Accuracy", "Absolute", "Relative (%)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<String>> = self
            .improvements
            .iter()
            .map(|r| {
                vec![
                    r.feature_kind.display_name().to_string(),
                    format!("{:.1}", r.accuracy_pct),
                    format!("{:+.1}", r.absolute_delta_pct),
                    r.relative_display.clone(),
                ]
            })
            .collect();
        out.push_str(&render_table(&header, &rows));
        out
    }

    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out_dir = out_dir.as_ref();
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let p = out_dir.join("comparison.json");
        fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&p, e))?;
        let p = out_dir.join("comparison.txt");
        fs::write(&p, self.render()).map_err(|e| Error::io(&p, e))?;
        for r in &self.reports {
            write_report(r, out_dir.join(r.feature_kind.as_str()))?;
        }
        Ok(())
    }
}

/// Runs the experiment once per feature kind; the first kind is the baseline.
pub fn compare_features(
    manifest: &CorpusManifest,
    kinds: &[FeatureKind],
    config: &ExperimentConfig,
) -> Result<Comparison> {
    if kinds.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two feature kinds".into()));
    }
    let reports = kinds
        .iter()
        .map(|&kind| {
            run_loso(
                manifest,
                &ExperimentConfig {
                    feature_kind: kind,
                    ..config.clone()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<(FeatureKind, f64)> = reports
        .iter()
        .map(|r| (r.feature_kind, round_to(100.0 * r.summary.accuracy_mean, 1)))
        .collect();
    Ok(Comparison {
        task: config.task,
        improvements: improvements(&accs)?,
        reports,
    })
}

/// Distinct speakers in the manifest after the task filter.
pub fn speakers_for(manifest: &CorpusManifest, task: TaskFilter) -> BTreeSet<String> {
    manifest
        .entries()
        .iter()
        .filter(|e| task.accepts(e.task))
        .map(|e| e.speaker_id.clone())
        .collect()
}
