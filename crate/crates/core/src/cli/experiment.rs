use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{train_config_digest, DatasetSource, ExperimentConfig};
use crate::baselines::fit_baseline;
use crate::data::{fit_standardizer, load_csv, make_synthetic, split, Dataset};
use crate::error::{Error, Result};
use crate::kalman::write_consolidated_csv;
use crate::metrics::MetricsReport;
use crate::selection::{generate_candidates, select_and_predict, Candidate, SelectionResult};
use crate::sgd::predict;

pub const PROPOSED_METHOD: &str = "Proposed Approach";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub artifact_version: String,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub standardized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub index: usize,
    pub id: String,
    pub config_digest: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub index: usize,
    pub id: String,
    pub error: String,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub dataset: DatasetSummary,
    pub candidates: Vec<CandidateSummary>,
    pub failures: Vec<FailureSummary>,
    pub selection: SelectionResult,
    pub metrics_table: Vec<MethodMetrics>,
}

/// Everything a run computed, held in memory until it is written out.
#[derive(Debug)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub candidates: Vec<Candidate>,
    pub test_targets: Vec<f64>,
    /// `(method, predictions on the test set)`, proposed approach first.
    pub predictions: Vec<(String, Vec<f64>)>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Csv {
            path,
            target_column,
            delimiter,
        } => load_csv(config.resolve_path(path), target_column, *delimiter as u8),
        DatasetSource::Synthetic {
            n,
            d,
            true_weights,
            true_bias,
            noise_std,
            seed,
        } => make_synthetic(*n, *d, true_weights, *true_bias, *noise_std, *seed),
    }
}

/// Runs the whole pipeline without touching the filesystem (apart from
/// reading a CSV dataset). Candidates run on the current rayon pool.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.check()?;
    let started = now_ms();
    let data = load_dataset(config).map_err(|e| e.in_stage("load", None))?;
    let parts = split(&data, config.split.test_fraction, config.split.seed)
        .map_err(|e| e.in_stage("split", None))?;
    let (train, test) = if config.standardize {
        let s = fit_standardizer(&parts.train);
        let train = s.apply(&parts.train).map_err(|e| e.in_stage("standardize", None))?;
        let test = s.apply(&parts.test).map_err(|e| e.in_stage("standardize", None))?;
        (train, test)
    } else {
        (parts.train, parts.test)
    };

    let batch = generate_candidates(&train, &config.candidates, &config.kalman, config.scalarization)
        .map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => e.in_stage("candidates", None),
        })?;
    let selection =
        select_and_predict(&batch.candidates, &test).map_err(|e| e.in_stage("selection", None))?;

    let test_targets: Vec<f64> = test.targets().iter().copied().collect();
    let mut metrics_table = vec![MethodMetrics {
        method: PROPOSED_METHOD.into(),
        metrics: selection.metrics,
        note: None,
    }];
    let mut predictions = vec![(PROPOSED_METHOD.to_string(), selection.predictions.clone())];
    for spec in &config.baselines {
        let label = spec.label();
        let fit = fit_baseline(spec, &train).map_err(|e| e.in_stage("baseline", Some(&label)))?;
        let pred: Vec<f64> = predict(&fit.model, test.features())
            .map_err(|e| e.in_stage("baseline", Some(&label)))?
            .iter()
            .copied()
            .collect();
        let metrics = MetricsReport::compute(&test_targets, &pred)
            .map_err(|e| e.in_stage("metrics", Some(&label)))?;
        let note = (!fit.converged).then(|| format!("not converged after {} iterations", fit.iterations));
        metrics_table.push(MethodMetrics {
            method: label.clone(),
            metrics,
            note,
        });
        predictions.push((label, pred));
    }

    let candidates_summary = batch
        .candidates
        .iter()
        .map(|c| CandidateSummary {
            index: c.index,
            id: c.id.clone(),
            config_digest: train_config_digest(&c.train_config),
            learning_rate: c.train_config.learning_rate,
            epochs: c.train_config.epochs,
            seed: c.train_config.seed,
            final_loss: c.trajectory.final_loss(),
            auc: c.auc,
        })
        .collect();
    let failures = batch
        .failures
        .iter()
        .map(|f| FailureSummary {
            index: f.index,
            id: f.id.clone(),
            error: f.error.to_string(),
        })
        .collect();

    let report = ExperimentReport {
        provenance: Provenance {
            config_digest: config.digest(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            timestamps: Timestamps {
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
            },
        },
        dataset: DatasetSummary {
            n_train: train.n_samples(),
            n_test: test.n_samples(),
            n_features: train.n_features(),
            feature_names: train.feature_names().to_vec(),
            target_name: train.target_name().into(),
            standardized: config.standardize,
        },
        candidates: candidates_summary,
        failures,
        selection,
        metrics_table,
    };
    Ok(ExperimentRun {
        report,
        candidates: batch.candidates,
        test_targets,
        predictions,
    })
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e7 || v.abs() < 1e-4) {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

/// Markdown comparison table, one row per method.
pub fn metrics_markdown(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str("| Technique | Mean Squared Error | Root Mean Squared Error | R-squared |\n");
    out.push_str("|---|---:|---:|---:|\n");
    for row in &report.metrics_table {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.method,
            fmt_value(row.metrics.mse),
            fmt_value(row.metrics.rmse),
            fmt_value(row.metrics.r_squared)
        );
    }
    out
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn predictions_csv(run: &ExperimentRun) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "y_true".to_string()];
    header.extend(run.predictions.iter().map(|(m, _)| m.clone()));
    w.write_record(&header)?;
    for (i, y) in run.test_targets.iter().enumerate() {
        let mut row = vec![i.to_string(), y.to_string()];
        row.extend(run.predictions.iter().map(|(_, p)| p[i].to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.to_string()))
}

/// Serializes every artifact of the run; nothing is written here.
pub fn render_artifacts(run: &ExperimentRun) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut json = serde_json::to_vec_pretty(&run.report).map_err(|e| Error::Csv(e.to_string()))?;
    json.push(b'\n');
    files.push((PathBuf::from("report.json"), json));
    files.push((PathBuf::from("metrics.md"), metrics_markdown(&run.report).into_bytes()));
    files.push((
        PathBuf::from("consolidated_weights.csv"),
        csv_bytes(|b| write_consolidated_csv(&run.report.selection.consolidated, b))?,
    ));
    files.push((PathBuf::from("predictions.csv"), predictions_csv(run)?));
    for c in &run.candidates {
        let name = format!("{}.csv", c.id);
        files.push((
            Path::new("trajectories").join(&name),
            csv_bytes(|b| c.trajectory.write_csv(b))?,
        ));
        files.push((Path::new("curves").join(&name), csv_bytes(|b| c.curve.write_csv(b))?));
        files.push((
            Path::new("consolidated").join(&name),
            csv_bytes(|b| write_consolidated_csv(&c.consolidated, b))?,
        ));
    }
    Ok(files)
}

/// Writes all artifacts under `output_dir`, returning their paths.
pub fn emit_report(run: &ExperimentRun, output_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = render_artifacts(run)?;
    let mut written = Vec::with_capacity(files.len());
    for (rel, bytes) in files {
        let path = output_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for candidate generation; `None` uses rayon's default.
    pub parallel: Option<usize>,
    /// Overrides the config's `output_dir`.
    pub output_dir: Option<PathBuf>,
}

/// Executes the pipeline and writes its artifacts.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    let run = match options.parallel {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| execute(config))?
        }
        None => execute(config)?,
    };
    let dir = options
        .output_dir
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    emit_report(&run, &dir).map_err(|e| e.in_stage("emit", None))?;
    Ok(run.report)
}
