//! Top-hat classification benchmark: data, metric, the directly trained
//! circuit baseline, evaluation sweeps and timing measurements.

mod scaling;
mod vqc;

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

pub use scaling::{scaling_report, ScalingConfig, ScalingReport, ScalingRow};
pub use vqc::{train_vqc_direct, VqcBaseline, VqcTrainConfig};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub label: u8,
}

/// `-[y ln p + (1 - y) ln(1 - p)]` with `p` clamped away from 0 and 1.
pub fn bce_loss(pred: f64, label: u8) -> f64 {
    let p = pred.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`bce_loss`] in `pred`; zero where the clamp is active.
pub fn bce_grad(pred: f64, label: u8) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&pred) {
        return 0.0;
    }
    if label == 1 {
        -1.0 / pred
    } else {
        1.0 / (1.0 - pred)
    }
}

/// Anything that maps a scalar input to a scalar output.
pub trait Predictor {
    fn predict(&self, x: f64) -> Result<f64>;
}

impl Predictor for crate::softu::SoftUnitaryModel {
    fn predict(&self, x: f64) -> Result<f64> {
        self.forward(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopHat {
    pub domain: (f64, f64),
    pub edges: (f64, f64),
}

impl Default for TopHat {
    /// Domain `[0, 2pi)` with the plateau on the middle third.
    fn default() -> Self {
        Self { domain: (0.0, 2.0 * PI), edges: (2.0 * PI / 3.0, 4.0 * PI / 3.0) }
    }
}

impl TopHat {
    pub fn validate(&self) -> Result<()> {
        let ((lo, hi), (a, b)) = (self.domain, self.edges);
        if !(lo.is_finite() && hi.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(invalid("top-hat bounds must be finite"));
        }
        if !(lo < hi && lo <= a && a < b && b <= hi) {
            return Err(invalid(format!("need lo <= a < b <= hi with lo < hi, got domain {:?} edges {:?}", self.domain, self.edges)));
        }
        Ok(())
    }

    pub fn label(&self, x: f64) -> u8 {
        u8::from(x >= self.edges.0 && x <= self.edges.1)
    }

    /// `count` evenly spaced points over the closed domain.
    pub fn grid(&self, count: usize) -> Vec<f64> {
        let (lo, hi) = self.domain;
        match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<Sample>,
    pub shape: TopHat,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `count` points drawn uniformly from the domain, labelled 1 on the plateau.
pub fn make_tophat_dataset(count: usize, shape: TopHat, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(invalid("dataset needs at least one point"));
    }
    shape.validate()?;
    let mut rng = rng::seeded(seed);
    let (lo, hi) = shape.domain;
    let points = (0..count)
        .map(|_| {
            let x = rng.random_range(lo..hi);
            Sample { x, label: shape.label(x) }
        })
        .collect();
    Ok(Dataset { points, shape })
}

/// `(x, output)` for every grid point.
pub fn evaluate_model(model: &dyn Predictor, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(invalid("evaluation grid must not be empty"));
    }
    grid.iter().map(|&x| Ok((x, model.predict(x)?))).collect()
}

pub fn mean_squared_difference(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let n = a.len().min(b.len()).max(1) as f64;
    a.iter().zip(b).map(|(p, q)| (p.1 - q.1).powi(2)).sum::<f64>() / n
}

/// Mean BCE of `model` over `points`.
pub fn mean_bce(model: &dyn Predictor, points: &[Sample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in points {
        sum += bce_loss(model.predict(s.x)?, s.label);
    }
    Ok(sum / points.len().max(1) as f64)
}

/// One row of `grid_eval.csv`; absent models leave their cell empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub soft: Option<f64>,
    pub aligned: Option<f64>,
    pub vqc: Option<f64>,
    pub truth: u8,
}

pub fn write_grid_csv<W: std::io::Write>(rows: &[GridRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
