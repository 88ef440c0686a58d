//! Linear Kalman filter and trajectory consolidation.
//!
//! Predict: `x = F·x`, `P = F·P·Fᵀ (+ Q when configured)`.
//! Correct: `K = P·Hᵀ·(H·P·Hᵀ + R)⁻¹`, `x = x + K·(z − H·x)`, `P = (I − K·H)·P`.
//!
//! The gain is obtained from a pivoted LU solve of `S·Kᵀ = H·P` (valid
//! because `S` and `P` are symmetric) rather than an explicit inverse. After
//! every correction `P` is re-symmetrized to `(P + Pᵀ)/2`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgd::{LinearModel, Trajectory};

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    transition: DMatrix<f64>,
    measurement: DMatrix<f64>,
    measurement_noise: DMatrix<f64>,
    process_noise: Option<DMatrix<f64>>,
}

impl KalmanModel {
    pub fn new(
        transition: DMatrix<f64>,
        measurement: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let s = transition.nrows();
        let m = measurement.nrows();
        if !transition.is_square() {
            return Err(Error::InvalidArgument("transition matrix must be square".into()));
        }
        if measurement.ncols() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: measurement.ncols(),
            });
        }
        if measurement_noise.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: measurement_noise.nrows(),
            });
        }
        check_covariance(&measurement_noise, 1e-12, "measurement noise")?;
        Ok(Self {
            transition,
            measurement,
            measurement_noise,
            process_noise: None,
        })
    }

    /// `F = H = I` of size `s`, `R = r·I`.
    pub fn identity(s: usize, r: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(s, s),
            DMatrix::identity(s, s),
            DMatrix::identity(s, s) * r,
        )
    }

    /// Adds `Q` to the covariance in every predict step.
    pub fn with_process_noise(mut self, q: DMatrix<f64>) -> Result<Self> {
        let s = self.state_dim();
        if q.shape() != (s, s) {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: q.nrows(),
            });
        }
        check_covariance(&q, 1e-12, "process noise")?;
        self.process_noise = Some(q);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn measurement(&self) -> &DMatrix<f64> {
        &self.measurement
    }

    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.measurement_noise
    }
}

fn check_covariance(m: &DMatrix<f64>, sym_tol: f64, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    if (m - m.transpose()).amax() > sym_tol {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if m.nrows() > 0 && min_eig < -1e-10 {
        return Err(Error::InvalidArgument(format!(
            "{what} is not positive semi-definite (eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != (x.len(), x.len()) {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: p.nrows(),
            });
        }
        Ok(Self { x, p })
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

fn check_state(model: &KalmanModel, state: &KalmanState) -> Result<()> {
    let s = model.state_dim();
    if state.x.len() != s || state.p.shape() != (s, s) {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: state.x.len(),
        });
    }
    Ok(())
}

pub fn kf_predict(model: &KalmanModel, state: &KalmanState) -> Result<KalmanState> {
    check_state(model, state)?;
    let f = &model.transition;
    let x = f * &state.x;
    let mut p = f * &state.p * f.transpose();
    if let Some(q) = &model.process_noise {
        p += q;
    }
    let next = KalmanState { x, p };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite("kalman predict"))
    }
}

/// Correction step. `step` only labels a singularity error.
fn correct_at(model: &KalmanModel, state: &KalmanState, z: &DVector<f64>, step: usize) -> Result<KalmanState> {
    check_state(model, state)?;
    if z.len() != model.measurement_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.measurement_dim(),
            found: z.len(),
        });
    }
    let h = &model.measurement;
    let hp = h * &state.p;
    let s = &hp * h.transpose() + &model.measurement_noise;

    let condition = condition_number(&s);
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(Error::SingularInnovation { step, condition });
    }
    let kt = s
        .lu()
        .solve(&hp)
        .ok_or(Error::SingularInnovation { step, condition })?;
    let k = kt.transpose();

    let x = &state.x + &k * (z - h * &state.x);
    let n = model.state_dim();
    let p = (DMatrix::identity(n, n) - &k * h) * &state.p;
    let p = (&p + p.transpose()) * 0.5;
    let next = KalmanState { x, p };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite("kalman correct"))
    }
}

pub fn kf_correct(model: &KalmanModel, state: &KalmanState, z: &DVector<f64>) -> Result<KalmanState> {
    correct_at(model, state, z, 0)
}

fn condition_number(s: &DMatrix<f64>) -> f64 {
    if s.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = s.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Predict-then-correct over `min(ranger, measurements.len())` measurements.
pub fn run_filter(
    model: &KalmanModel,
    initial: &KalmanState,
    measurements: &[DVector<f64>],
    ranger: usize,
) -> Result<KalmanState> {
    if measurements.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut state = initial.clone();
    for (step, z) in measurements.iter().take(ranger).enumerate() {
        state = kf_predict(model, &state)
            .and_then(|predicted| correct_at(model, &predicted, z, step))
            .map_err(|e| e.in_stage("kalman filter", None))?;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    #[serde(default = "default_ranger")]
    pub ranger: usize,
    #[serde(default = "default_measurement_noise")]
    pub measurement_noise: f64,
    /// Diagonal process noise `q·I`; zero disables it.
    #[serde(default)]
    pub process_noise: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_ranger() -> usize {
    1000
}

fn default_measurement_noise() -> f64 {
    1.0
}

fn default_horizon() -> usize {
    1
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            ranger: default_ranger(),
            measurement_noise: default_measurement_noise(),
            process_noise: 0.0,
            horizon: default_horizon(),
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ranger == 0 {
            return Err(Error::InvalidArgument("ranger must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        for (name, v) in [
            ("measurement_noise", self.measurement_noise),
            ("process_noise", self.process_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedStep {
    pub horizon_step: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ConsolidatedStep {
    pub fn model(&self) -> LinearModel {
        LinearModel::new(self.weights.clone(), self.bias)
    }
}

/// Stacks each epoch record as `[w_0..w_{d-1}, bias, loss]`.
pub fn trajectory_measurements(trajectory: &Trajectory) -> Vec<DVector<f64>> {
    trajectory
        .records()
        .iter()
        .map(|r| {
            DVector::from_iterator(
                r.weights.len() + 2,
                r.weights.iter().copied().chain([r.bias, r.loss]),
            )
        })
        .collect()
}

/// Filters the trajectory with identity dynamics and steps it forward
/// `horizon` times, returning the weight/bias part after each forward step.
///
/// The first record seeds the state (with `P = I`); the remaining records
/// are assimilated, at most `ranger` of them.
pub fn consolidate(trajectory: &Trajectory, config: &KalmanConfig) -> Result<Vec<ConsolidatedStep>> {
    let (model, mut state) = assimilate(trajectory, config)?;
    let d = trajectory.dim();
    let mut out = Vec::with_capacity(config.horizon);
    for step in 1..=config.horizon {
        state = kf_predict(&model, &state)?;
        out.push(ConsolidatedStep {
            horizon_step: step,
            weights: state.x.rows(0, d).iter().copied().collect(),
            bias: state.x[d],
        });
    }
    Ok(out)
}

/// The filter model and posterior state after assimilating the trajectory,
/// before any forward step.
pub fn assimilate(trajectory: &Trajectory, config: &KalmanConfig) -> Result<(KalmanModel, KalmanState)> {
    config.validate()?;
    if trajectory.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "consolidation needs at least 2 trajectory records, got {}",
            trajectory.len()
        )));
    }
    let d = trajectory.dim();
    let s = d + 2;
    let mut model = KalmanModel::identity(s, config.measurement_noise)?;
    if config.process_noise > 0.0 {
        model = model.with_process_noise(DMatrix::identity(s, s) * config.process_noise)?;
    }
    let measurements = trajectory_measurements(trajectory);
    let initial = KalmanState::new(measurements[0].clone(), DMatrix::identity(s, s))?;
    let state = run_filter(&model, &initial, &measurements[1..], config.ranger)?;
    Ok((model, state))
}

/// CSV with columns `horizon_step, w_0..w_{d-1}, bias`.
pub fn write_consolidated_csv<W: Write>(steps: &[ConsolidatedStep], writer: W) -> Result<()> {
    let d = steps.first().map_or(0, |s| s.weights.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["horizon_step".to_string()];
    header.extend((0..d).map(|j| format!("w_{j}")));
    header.push("bias".into());
    w.write_record(&header)?;
    for s in steps {
        let mut row = vec![s.horizon_step.to_string()];
        row.extend(s.weights.iter().map(f64::to_string));
        row.push(s.bias.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
