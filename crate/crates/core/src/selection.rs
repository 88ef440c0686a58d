//! Candidate generation, minimum-area selection and final prediction.
//!
//! Each candidate is one SGD run: its trajectory is consolidated by the
//! Kalman filter and turned into a weight-versus-loss curve. The candidate
//! whose curve has the smallest trapezoidal area wins, and its horizon-1
//! consolidated weights produce the predictions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{auc_trapezoid, build_curve, Curve, Scalarization};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kalman::{consolidate, ConsolidatedStep, KalmanConfig};
use crate::metrics::MetricsReport;
use crate::sgd::{predict, train, LinearModel, TrainConfig, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub id: String,
    pub train_config: TrainConfig,
    pub trajectory: Trajectory,
    pub consolidated: Vec<ConsolidatedStep>,
    pub curve: Curve,
    pub auc: f64,
}

impl Candidate {
    /// Horizon-1 consolidated model.
    pub fn consolidated_model(&self) -> &ConsolidatedStep {
        &self.consolidated[0]
    }
}

#[derive(Debug)]
pub struct CandidateFailure {
    pub index: usize,
    pub id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct CandidateBatch {
    pub candidates: Vec<Candidate>,
    pub failures: Vec<CandidateFailure>,
}

pub fn candidate_id(index: usize) -> String {
    format!("candidate-{index:02}")
}

fn build_candidate(
    index: usize,
    train_data: &Dataset,
    config: &TrainConfig,
    kconfig: &KalmanConfig,
    scalarization: Scalarization,
) -> Result<Candidate> {
    let id = candidate_id(index);
    let tag = Some(id.as_str());
    let trajectory = train(train_data, config).map_err(|e| e.in_stage("sgd", tag))?;
    let consolidated = consolidate(&trajectory, kconfig).map_err(|e| e.in_stage("kalman", tag))?;
    let curve = build_curve(&trajectory, id.clone(), scalarization).map_err(|e| e.in_stage("curve", tag))?;
    let auc = auc_trapezoid(&curve);
    Ok(Candidate {
        index,
        id,
        train_config: config.clone(),
        trajectory,
        consolidated,
        curve,
        auc,
    })
}

/// Builds one candidate per config, in parallel on the current rayon pool.
/// Output order always follows `configs`. Individual failures are collected;
/// the call only fails when no candidate succeeds.
pub fn generate_candidates(
    train_data: &Dataset,
    configs: &[TrainConfig],
    kconfig: &KalmanConfig,
    scalarization: Scalarization,
) -> Result<CandidateBatch> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("at least one candidate config is required".into()));
    }
    let results: Vec<Result<Candidate>> = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| build_candidate(i, train_data, cfg, kconfig, scalarization))
        .collect();

    let mut batch = CandidateBatch::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => batch.candidates.push(c),
            Err(error) => batch.failures.push(CandidateFailure {
                index,
                id: candidate_id(index),
                error,
            }),
        }
    }
    if batch.candidates.is_empty() {
        let first = batch.failures.swap_remove(0);
        return Err(first.error);
    }
    Ok(batch)
}

/// Index and value of the first minimum, using a strict `<` update from
/// `+∞`. No index is produced when nothing beats `+∞`.
pub fn select_min_area<I: IntoIterator<Item = f64>>(areas: I) -> Result<(usize, f64)> {
    let mut min_area = f64::INFINITY;
    let mut optimal_index = None;
    for (i, area) in areas.into_iter().enumerate() {
        if area < min_area {
            min_area = area;
            optimal_index = Some(i);
        }
    }
    optimal_index.map(|i| (i, min_area)).ok_or(Error::NoOptimalCurve)
}

pub fn select_optimal(candidates: &[Candidate]) -> Result<(usize, f64)> {
    select_min_area(candidates.iter().map(|c| c.auc))
}

/// Grand mean over every entry of the matrix.
pub fn average_input(features: &DMatrix<f64>) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(features.mean())
}

pub fn predict_new_values(optimal: &Candidate, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
    let model = optimal.consolidated_model().model();
    Ok(predict(&model, inputs)?.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub min_area: f64,
    /// Config index of the winning candidate.
    pub optimal_index: usize,
    pub optimal_id: String,
    pub optimal_weights: LinearModel,
    pub consolidated: Vec<ConsolidatedStep>,
    pub predictions: Vec<f64>,
    pub metrics: MetricsReport,
    pub average_input: f64,
    /// `Σ_j average_input · w_j + bias` for the optimal weights.
    pub average_input_prediction: f64,
}

/// Picks the minimum-area candidate and evaluates it on `eval`.
pub fn select_and_predict(candidates: &[Candidate], eval: &Dataset) -> Result<SelectionResult> {
    let (position, min_area) = select_optimal(candidates)?;
    let optimal = &candidates[position];
    let predictions = predict_new_values(optimal, eval.features())?;
    let metrics = MetricsReport::compute(eval.targets().as_slice(), &predictions)?;
    let avg = average_input(eval.features())?;
    let step = optimal.consolidated_model();
    let average_input_prediction = step.weights.iter().map(|w| avg * w).sum::<f64>() + step.bias;
    Ok(SelectionResult {
        min_area,
        optimal_index: optimal.index,
        optimal_id: optimal.id.clone(),
        optimal_weights: step.model(),
        consolidated: optimal.consolidated.clone(),
        predictions,
        metrics,
        average_input: avg,
        average_input_prediction,
    })
}
