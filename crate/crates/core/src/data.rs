//! Dataset loading, synthesis, splitting and standardization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// Feature matrix plus target vector with column labels.
///
/// Rows are samples. Construction through [`Dataset::new`] guarantees at
/// least two rows, at least one feature, finite entries and matching label
/// counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    feature_names: Vec<String>,
    target_name: String,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        targets: DVector<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        if feature_names.len() != d {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                d
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self {
            features,
            targets,
            feature_names,
            target_name: target_name.into(),
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows);
        let targets = self.targets.select_rows(rows);
        Self::new(
            features,
            targets,
            self.feature_names.clone(),
            self.target_name.clone(),
        )
    }

    /// Writes the dataset as CSV: feature columns first, target last.
    ///
    /// Values use Rust's shortest round-trip formatting, so reloading yields
    /// bit-identical numbers.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
            .map_err(|e| match e {
                Error::Csv(msg) => Error::Csv(format!("{}: {msg}", path.display())),
                other => other,
            })
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut record: Vec<String> =
                self.features.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.targets[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Loads a CSV with a header row. `target_column` becomes the target and
/// every other column a feature.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, delimiter: u8) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target_column, delimiter)
}

pub fn read_csv<R: std::io::Read>(reader: R, target_column: &str, delimiter: u8) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // Data rows are numbered from 1, the header being row 0.
        let row = i + 1;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: cell.to_owned(),
                });
            }
            if j == target_idx {
                targets.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = targets.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let d = feature_names.len();
    let features = DMatrix::from_row_slice(n, d, &values);
    Dataset::new(features, DVector::from_vec(targets), feature_names, target_column)
}

/// Generates `targets = features · true_weights + true_bias + N(0, noise_std)`
/// with standard-normal features, fully determined by `seed`.
pub fn make_synthetic(
    n: usize,
    d: usize,
    true_weights: &[f64],
    true_bias: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if d == 0 || true_weights.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: true_weights.len(),
        });
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be finite and >= 0, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let noise = Normal::new(0.0, noise_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let w = DVector::from_column_slice(true_weights);
    let mut targets = &features * &w;
    for t in targets.iter_mut() {
        *t += true_bias;
        if noise_std > 0.0 {
            *t += noise.sample(&mut rng);
        }
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Dataset::new(features, targets, names, "y")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Seeded shuffle-and-cut partition with `test.N = round(N · test_fraction)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.n_samples();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} on {n} rows leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_rows = order[..n_test].to_vec();
    let train_rows = order[n_test..].to_vec();
    // A one-row side cannot form a Dataset; surface that as a split error.
    let part = |rows: &[usize]| {
        dataset.select_rows(rows).map_err(|_| {
            Error::InvalidArgument(format!(
                "test_fraction {test_fraction} on {n} rows leaves a part with fewer than 2 rows"
            ))
        })
    };
    Ok(SplitDataset {
        train: part(&train_rows)?,
        test: part(&test_rows)?,
        train_rows,
        test_rows,
        seed,
        test_fraction,
    })
}

/// Per-column z-score parameters, population convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

pub fn fit_standardizer(train: &Dataset) -> Standardizer {
    let x = train.features();
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut stddevs = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        means.push(mean);
        // Constant columns map to zero instead of dividing by ~0.
        stddevs.push(if sd <= 1e-12 * mean.abs().max(1.0) { 1.0 } else { sd });
    }
    Standardizer { means, stddevs }
}

impl Standardizer {
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: data.n_features(),
            });
        }
        let mut x = data.features().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.stddevs[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Dataset::new(
            x,
            data.targets().clone(),
            data.feature_names().to_vec(),
            data.target_name(),
        )
    }
}

pub fn apply_standardizer(s: &Standardizer, data: &Dataset) -> Result<Dataset> {
    s.apply(data)
}

/// Uniform draw helper shared by seeded initializers.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}
