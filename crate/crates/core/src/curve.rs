//! Weight-versus-loss curves and their trapezoidal area.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgd::Trajectory;

/// How a `(weights, bias)` pair becomes the curve's x coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    /// Euclidean norm of `[weights ‖ bias]`.
    #[default]
    Norm,
    /// First weight coordinate.
    First,
    /// Mean of `[weights ‖ bias]`.
    Mean,
}

impl Scalarization {
    pub fn apply(self, weights: &[f64], bias: f64) -> f64 {
        match self {
            Scalarization::Norm => weights
                .iter()
                .chain(std::iter::once(&bias))
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt(),
            Scalarization::First => weights.first().copied().unwrap_or(bias),
            Scalarization::Mean => {
                (weights.iter().sum::<f64>() + bias) / (weights.len() + 1) as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub weight: f64,
    pub loss: f64,
}

impl CurvePoint {
    pub fn new(weight: f64, loss: f64) -> Self {
        Self { weight, loss }
    }
}

/// Points sorted ascending by weight; equal weights keep their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    points: Vec<CurvePoint>,
    source_id: String,
}

impl Curve {
    /// Sorts `points` (stably) and validates them.
    pub fn from_points(mut points: Vec<CurvePoint>, source_id: impl Into<String>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateCurve(points.len()));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.weight.is_finite() && p.loss.is_finite() && p.loss >= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "curve point ({}, {}) must be finite with non-negative loss",
                p.weight, p.loss
            )));
        }
        points.sort_by(|a, b| a.weight.total_cmp(&b.weight));
        let distinct = 1 + points.windows(2).filter(|w| w[1].weight != w[0].weight).count();
        if distinct < 2 {
            return Err(Error::DegenerateCurve(distinct));
        }
        Ok(Self {
            points,
            source_id: source_id.into(),
        })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn weight_span(&self) -> (f64, f64) {
        (self.points[0].weight, self.points[self.points.len() - 1].weight)
    }

    /// Line equations of every non-vertical consecutive segment.
    pub fn segments(&self) -> Vec<SegmentEquation> {
        self.points
            .windows(2)
            .filter_map(|w| segment_equation(w[0], w[1]).ok())
            .collect()
    }

    /// CSV with columns `weight_scalar, loss`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["weight_scalar", "loss"])?;
        for p in &self.points {
            w.write_record([p.weight.to_string(), p.loss.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, source_id: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != ["weight_scalar", "loss"] {
            return Err(Error::Csv(format!(
                "curve header must be weight_scalar,loss, got {}",
                header.join(",")
            )));
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| {
                rec[j].parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: i + 1,
                    column: header[j].clone(),
                    value: rec[j].to_owned(),
                })
            };
            points.push(CurvePoint::new(parse(0)?, parse(1)?));
        }
        Self::from_points(points, source_id)
    }
}

pub fn build_curve(trajectory: &Trajectory, id: impl Into<String>, scalarization: Scalarization) -> Result<Curve> {
    if trajectory.len() < 2 {
        return Err(Error::DegenerateCurve(trajectory.len()));
    }
    let points = trajectory
        .records()
        .iter()
        .map(|r| CurvePoint::new(scalarization.apply(&r.weights, r.bias), r.loss))
        .collect();
    Curve::from_points(points, id)
}

/// `loss = slope · weight + intercept` over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEquation {
    pub slope: f64,
    pub intercept: f64,
    pub span: (f64, f64),
}

impl SegmentEquation {
    pub fn eval(&self, weight: f64) -> f64 {
        self.slope * weight + self.intercept
    }
}

/// Line through two points (two-point form).
pub fn segment_equation(p1: CurvePoint, p2: CurvePoint) -> Result<SegmentEquation> {
    if p1.weight == p2.weight {
        return Err(Error::DegenerateSegment(p1.weight));
    }
    let slope = (p2.loss - p1.loss) / (p2.weight - p1.weight);
    Ok(SegmentEquation {
        slope,
        intercept: p1.loss - slope * p1.weight,
        span: (p1.weight.min(p2.weight), p1.weight.max(p2.weight)),
    })
}

/// Trapezoidal rule over the sorted points. Zero-width steps add nothing.
pub fn auc_trapezoid(curve: &Curve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| {
            let width = w[1].weight - w[0].weight;
            let average_height = (w[1].loss + w[0].loss) / 2.0;
            width * average_height
        })
        .sum()
}
