//! Per-sample stochastic gradient descent for linear regression.
//!
//! The per-sample loss is the plain squared error `e² = (ŷ − y)²`, so the
//! gradients are `2·e·x` for the weights and `2·e` for the bias. After each
//! epoch the trainer records the weights, the bias and the mean squared
//! error of that end-of-epoch model over the whole training set.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{uniform, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Init {
    #[default]
    Zeros,
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle_each_epoch: bool,
    #[serde(default)]
    pub init: Init,
}

fn default_shuffle() -> bool {
    true
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            epochs,
            seed,
            shuffle_each_epoch: true,
            init: Init::Zeros,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        match self.init {
            Init::Constant { value } if !value.is_finite() => Err(Error::InvalidArgument(
                "constant init value must be finite".into(),
            )),
            Init::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => Err(
                Error::InvalidArgument(format!("uniform init needs finite lo <= hi, got [{lo}, {hi}]")),
            ),
            _ => Ok(()),
        }
    }
}

/// `y = weights · x + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0.0; d], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

pub fn predict(model: &LinearModel, features: &DMatrix<f64>) -> Result<DVector<f64>> {
    if features.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: features.ncols(),
        });
    }
    let w = DVector::from_column_slice(&model.weights);
    let mut out = features * w;
    out.add_scalar_mut(model.bias);
    Ok(out)
}

/// Gradient of `(ŷ − y)²` with respect to `(weights, bias)`: `(2e·x, 2e)`.
pub fn squared_error_gradient(model: &LinearModel, x: &[f64], y: f64) -> (Vec<f64>, f64) {
    let g = 2.0 * (model.predict_one(x) - y);
    (x.iter().map(|xi| g * xi).collect(), g)
}

/// One update `w ← w − α·2e·x`, `b ← b − α·2e` with `e = ŷ − y`.
pub fn sgd_step(model: &LinearModel, x: &[f64], y: f64, learning_rate: f64) -> Result<LinearModel> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.len(),
        });
    }
    let (grad_w, grad_b) = squared_error_gradient(model, x, y);
    let next = LinearModel {
        weights: model
            .weights
            .iter()
            .zip(&grad_w)
            .map(|(w, g)| w - learning_rate * g)
            .collect(),
        bias: model.bias - learning_rate * grad_b,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite("sgd step"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: f64,
}

impl EpochRecord {
    pub fn model(&self) -> LinearModel {
        LinearModel::new(self.weights.clone(), self.bias)
    }
}

/// Per-epoch `(weights, bias, loss)` history of one SGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    records: Vec<EpochRecord>,
    final_model: LinearModel,
}

impl Trajectory {
    pub fn from_records(records: Vec<EpochRecord>) -> Result<Self> {
        let last = records.last().ok_or(Error::EmptyInput)?;
        let d = last.weights.len();
        for r in &records {
            if r.weights.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.weights.len(),
                });
            }
            if !(r.loss.is_finite() && r.loss >= 0.0) || !r.model().is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "epoch {} has a non-finite or negative entry",
                    r.epoch
                )));
            }
        }
        let final_model = last.model();
        Ok(Self {
            records,
            final_model,
        })
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn final_model(&self) -> &LinearModel {
        &self.final_model
    }

    pub fn dim(&self) -> usize {
        self.final_model.dim()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    /// CSV with columns `epoch, w_0..w_{d-1}, bias, loss`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["epoch".to_string()];
        header.extend((0..self.dim()).map(|j| format!("w_{j}")));
        header.push("bias".into());
        header.push("loss".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.weights.iter().map(f64::to_string));
            row.push(r.bias.to_string());
            row.push(r.loss.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let width = header.len();
        let expected: Vec<String> = std::iter::once("epoch".to_string())
            .chain((0..width.saturating_sub(3)).map(|j| format!("w_{j}")))
            .chain(["bias".to_string(), "loss".to_string()])
            .collect();
        if width < 4 || header != expected {
            return Err(Error::Csv(format!(
                "trajectory header must be {}, got {}",
                expected.join(","),
                header.join(",")
            )));
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums = rec
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                        row: i + 1,
                        column: header[j].clone(),
                        value: cell.to_owned(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let epoch = rec[0].parse::<usize>().map_err(|_| Error::NonNumeric {
                row: i + 1,
                column: "epoch".into(),
                value: rec[0].to_owned(),
            })?;
            records.push(EpochRecord {
                epoch,
                weights: nums[1..width - 2].to_vec(),
                bias: nums[width - 2],
                loss: nums[width - 1],
            });
        }
        Self::from_records(records)
    }
}

fn init_model(d: usize, init: Init, rng: &mut ChaCha8Rng) -> LinearModel {
    match init {
        Init::Zeros => LinearModel::zeros(d),
        Init::Constant { value } => LinearModel::new(vec![value; d], value),
        Init::Uniform { lo, hi } => {
            let weights = (0..d).map(|_| uniform(rng, lo, hi)).collect();
            LinearModel::new(weights, uniform(rng, lo, hi))
        }
    }
}

/// Mean squared error of `model` over the whole dataset.
pub fn dataset_loss(model: &LinearModel, data: &Dataset) -> Result<f64> {
    let pred = predict(model, data.features())?;
    let n = data.n_samples() as f64;
    Ok((pred - data.targets()).norm_squared() / n)
}

/// Runs `config.epochs` passes of per-sample SGD over `train_data`.
pub fn train(train_data: &Dataset, config: &TrainConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = train_data.n_samples();
    let d = train_data.n_features();
    let x = train_data.features();
    let y = train_data.targets();
    // Row-major copy so each sample is a contiguous slice.
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(d, config.init, &mut rng);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            model = sgd_step(&model, &rows[i], y[i], config.learning_rate)
                .map_err(|_| Error::Diverged { epoch, sample: i })?;
        }
        let loss = dataset_loss(&model, train_data)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                sample: order[n - 1],
            });
        }
        records.push(EpochRecord {
            epoch,
            weights: model.weights.clone(),
            bias: model.bias,
            loss,
        });
    }
    Trajectory::from_records(records)
}
