//! Per-epoch timing of the three training stages against dataset size and
//! gate count. Only the shape of each curve is meaningful; absolute times
//! depend on the machine.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{make_tophat_dataset, train_vqc_direct, TopHat, VqcBaseline, VqcTrainConfig};
use crate::alignment::{align, AlignConfig, AlignmentProblem};
use crate::circuit::LayerTemplate;
use crate::encoding::EncodingSpec;
use crate::error::{invalid, Result};
use crate::softu::{train_soft, SoftUnitaryModel, TrainConfig, TrainHistory};

pub const SERIES_SOFT_VS_GATES: &str = "soft_vs_gates";
pub const SERIES_SOFT_VS_DATA: &str = "soft_vs_data";
pub const SERIES_VQC_VS_GATES: &str = "vqc_vs_gates";
pub const SERIES_ALIGN_VS_DATA: &str = "align_vs_data";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub n_qubits: usize,
    pub n_blocks: usize,
    /// Layer counts quoted for the soft series; soft training never sees them.
    pub soft_gate_layers: Vec<usize>,
    pub soft_datapoints: Vec<usize>,
    pub vqc_layers: Vec<usize>,
    pub vqc_datapoints: usize,
    pub align_datapoints: Vec<usize>,
    pub align_layers: usize,
    /// Epochs timed per measurement.
    pub epochs: usize,
    /// Interleaved repeats of every measurement; the median is kept.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n_qubits: 3,
            n_blocks: 4,
            soft_gate_layers: vec![10, 69],
            soft_datapoints: vec![250, 500, 1000],
            vqc_layers: vec![2, 4, 8],
            vqc_datapoints: 40,
            align_datapoints: vec![250, 1000],
            align_layers: crate::alignment::default_layers_per_target(3),
            epochs: 30,
            rounds: default_rounds(),
            seed: 0,
        }
    }
}

fn default_rounds() -> usize {
    11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub series: String,
    pub n_qubits: usize,
    pub datapoints: usize,
    pub layers: usize,
    pub seconds_per_epoch: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn series(&self, name: &str) -> Vec<&ScalingRow> {
        self.rows.iter().filter(|r| r.series == name).collect()
    }

    /// Largest `|t / (a d) - 1|` over the soft-vs-data rows, where `a` is the
    /// least-squares slope of a fit through the origin.
    pub fn soft_linear_fit_error(&self) -> f64 {
        let rows = self.series(SERIES_SOFT_VS_DATA);
        let sxy: f64 = rows.iter().map(|r| r.datapoints as f64 * r.seconds_per_epoch).sum();
        let sxx: f64 = rows.iter().map(|r| (r.datapoints as f64).powi(2)).sum();
        let slope = sxy / sxx;
        rows.iter().map(|r| (r.seconds_per_epoch / (slope * r.datapoints as f64) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Whether VQC epoch time strictly increases with layer count.
    pub fn vqc_monotone(&self) -> bool {
        let mut rows = self.series(SERIES_VQC_VS_GATES);
        rows.sort_by_key(|r| r.layers);
        rows.windows(2).all(|w| w[1].seconds_per_epoch > w[0].seconds_per_epoch)
    }

    /// `max / min` of alignment epoch time across dataset sizes.
    pub fn align_spread(&self) -> f64 {
        spread(&self.series(SERIES_ALIGN_VS_DATA))
    }

    /// `max / min` of soft epoch time across quoted gate counts.
    pub fn soft_gate_spread(&self) -> f64 {
        spread(&self.series(SERIES_SOFT_VS_GATES))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn spread(rows: &[&ScalingRow]) -> f64 {
    let max = rows.iter().map(|r| r.seconds_per_epoch).fold(f64::MIN, f64::max);
    let min = rows.iter().map(|r| r.seconds_per_epoch).fold(f64::MAX, f64::min);
    max / min
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Single epochs can be shorter than a millisecond; timing the whole run
/// keeps clock granularity and jumps small next to the measured span.
fn mean_epoch(history: &TrainHistory) -> f64 {
    history.rows.iter().map(|r| r.wall_s).sum::<f64>() / history.len() as f64
}

/// Times `measure` on every item for `rounds` rounds, visiting the items in
/// turn within each round so that a slow stretch of machine time hits all of
/// them alike, and keeps the median round per item. The median also shrugs
/// off clocks that jump in either direction, which a minimum does not.
fn interleaved_median<T>(rounds: usize, items: &[T], mut measure: impl FnMut(&T) -> Result<f64>) -> Result<Vec<f64>> {
    let mut samples = vec![Vec::with_capacity(rounds); items.len()];
    for _ in 0..rounds.max(1) {
        for (s, item) in samples.iter_mut().zip(items) {
            s.push(measure(item)?);
        }
    }
    Ok(samples.into_iter().map(median).collect())
}

/// Runs every series at desk scale, single-threaded.
pub fn scaling_report(config: &ScalingConfig) -> Result<ScalingReport> {
    if config.epochs == 0 {
        return Err(invalid("scaling needs at least one timed epoch"));
    }
    let n = config.n_qubits;
    let enc = EncodingSpec::exponential(n, crate::encoding::DEFAULT_BASE)?;
    let soft_init = SoftUnitaryModel::random(n, config.n_blocks, enc.clone(), config.seed)?;
    let soft_cfg = TrainConfig { epochs: config.epochs, seed: config.seed, ..Default::default() };
    let mut rows = Vec::new();
    let mut row = |series: &str, datapoints: usize, layers: usize, seconds_per_epoch: f64| {
        rows.push(ScalingRow { series: series.to_string(), n_qubits: n, datapoints, layers, seconds_per_epoch });
    };

    let soft_data = config
        .soft_datapoints
        .iter()
        .map(|&d| make_tophat_dataset(d, TopHat::default(), config.seed))
        .collect::<Result<Vec<_>>>()?;
    let soft_times = interleaved_median(config.rounds, &soft_data, |data| {
        Ok(mean_epoch(&train_soft(&soft_init, &data.points, &soft_cfg)?.1))
    })?;
    for (&d, &t) in config.soft_datapoints.iter().zip(&soft_times) {
        row(SERIES_SOFT_VS_DATA, d, 0, t);
    }

    // The soft trainer takes no gate count, so one measurement stands for all.
    if let (Some(&d), Some(&t)) = (config.soft_datapoints.first(), soft_times.first()) {
        for &g in &config.soft_gate_layers {
            row(SERIES_SOFT_VS_GATES, d, g, t);
        }
    }

    let vqc_data = make_tophat_dataset(config.vqc_datapoints, TopHat::default(), config.seed)?;
    let vqc_cfg = VqcTrainConfig { epochs: config.epochs, seed: config.seed, ..Default::default() };
    let baselines = config
        .vqc_layers
        .iter()
        .map(|&layers| VqcBaseline::random(n, config.n_blocks, layers, enc.clone(), config.seed))
        .collect::<Result<Vec<_>>>()?;
    let vqc_times = interleaved_median(config.rounds, &baselines, |b| {
        Ok(mean_epoch(&train_vqc_direct(b, &vqc_data.points, &vqc_cfg)?.1))
    })?;
    for (&layers, &t) in config.vqc_layers.iter().zip(&vqc_times) {
        row(SERIES_VQC_VS_GATES, config.vqc_datapoints, layers, t);
    }

    let align_cfg = AlignConfig {
        layers_per_target: config.align_layers,
        template: LayerTemplate::Rot,
        epochs: config.epochs,
        seed: config.seed,
        ..AlignConfig::for_qubits(n)
    };
    let problems = config
        .align_datapoints
        .iter()
        .map(|&d| {
            let data = make_tophat_dataset(d, TopHat::default(), config.seed)?;
            let (soft, _) = train_soft(&soft_init, &data.points, &TrainConfig { epochs: 1, ..soft_cfg.clone() })?;
            AlignmentProblem::new(soft.blocks().to_vec(), n, align_cfg.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let align_times = interleaved_median(config.rounds, &problems, |p| {
        let start = Instant::now();
        align(p)?;
        Ok(start.elapsed().as_secs_f64() / config.epochs as f64)
    })?;
    for (&d, &t) in config.align_datapoints.iter().zip(&align_times) {
        row(SERIES_ALIGN_VS_DATA, d, config.align_layers, t);
    }
    Ok(ScalingReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScalingConfig {
        ScalingConfig {
            n_qubits: 2,
            n_blocks: 2,
            soft_gate_layers: vec![10, 69],
            soft_datapoints: vec![20, 40],
            vqc_layers: vec![1, 2],
            vqc_datapoints: 5,
            align_datapoints: vec![10, 20],
            align_layers: 2,
            epochs: 2,
            rounds: 2,
            seed: 1,
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_has_every_series() {
        let r = scaling_report(&tiny()).unwrap();
        assert_eq!(r.series(SERIES_SOFT_VS_DATA).len(), 2);
        assert_eq!(r.series(SERIES_SOFT_VS_GATES).len(), 2);
        assert_eq!(r.series(SERIES_VQC_VS_GATES).len(), 2);
        assert_eq!(r.series(SERIES_ALIGN_VS_DATA).len(), 2);
        assert_eq!(r.soft_gate_spread(), 1.0);
        assert!(r.rows.iter().all(|row| row.seconds_per_epoch > 0.0));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("series,n_qubits,datapoints,layers,seconds_per_epoch\n"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn linear_fit_error_is_zero_for_proportional_rows() {
        let rows = [100, 200, 400]
            .iter()
            .map(|&d| ScalingRow { series: SERIES_SOFT_VS_DATA.into(), n_qubits: 3, datapoints: d, layers: 0, seconds_per_epoch: d as f64 * 1e-4 })
            .collect();
        assert!(ScalingReport { rows }.soft_linear_fit_error() < 1e-12);
    }
}
