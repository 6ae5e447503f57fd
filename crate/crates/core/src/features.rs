//! Per-node benchmark forecasts (the "features" of the aggregation step).
//!
//! Two internal generators are provided — an auto-regressive model on
//! daily and weekly lags, and a regression random forest grown on
//! lagged consumption plus exogenous variables — together with the
//! exogenous preprocessing they rely on (exponentially smoothed
//! temperature, calendar encodings, regional meteo mixing) and a CSV
//! ingestion path for features produced by an external model.

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};
use crate::panel::{half_hour, PanelFrame};

/// Default exponential-smoothing constant for temperature.
pub const DEFAULT_SMOOTHING: f64 = 0.999;

/// Steps in the daily lag.
pub const LAG_DAY: usize = 48;
/// Steps in the weekly lag.
pub const LAG_WEEK: usize = 336;

// ---------------------------------------------------------------------------
// Exogenous variables
// ---------------------------------------------------------------------------

/// Per-instant exogenous records: weather and calendar variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExogenousFrame {
    pub timestamps: Vec<DateTime<Utc>>,
    /// Temperature (°C).
    pub temperature: Vec<f64>,
    /// Exponentially smoothed temperature (°C).
    pub smoothed_temperature: Vec<f64>,
    /// Visibility index in [0, 10].
    pub visibility: Vec<f64>,
    /// Relative humidity in [0, 100].
    pub humidity: Vec<f64>,
    /// Day of week, 1 (Monday) .. 7 (Sunday).
    pub day_of_week: Vec<u8>,
    /// Half-hour of day, 1 .. 48.
    pub half_hour: Vec<u8>,
    /// Position within the calendar year in [0, 1].
    pub year_position: Vec<f64>,
}

impl ExogenousFrame {
    /// Build from raw weather series, deriving the smoothed temperature
    /// and calendar variables.
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        temperature: Vec<f64>,
        visibility: Vec<f64>,
        humidity: Vec<f64>,
        smoothing: f64,
    ) -> Result<Self> {
        let n = timestamps.len();
        if temperature.len() != n || visibility.len() != n || humidity.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: temperature.len().min(visibility.len()).min(humidity.len()),
            });
        }
        let smoothed_temperature = smooth_temperature(&temperature, smoothing);
        let day_of_week = timestamps
            .iter()
            .map(|t| t.weekday().number_from_monday() as u8)
            .collect();
        let half_hour = timestamps
            .iter()
            .map(|t| (t.hour() * 2 + t.minute() / 30 + 1) as u8)
            .collect();
        let year_position = timestamps.iter().map(|t| year_position(*t)).collect();
        Ok(ExogenousFrame {
            timestamps,
            temperature,
            smoothed_temperature,
            visibility,
            humidity,
            day_of_week,
            half_hour,
            year_position,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Fraction of the calendar year elapsed at `t`: 0 at Jan 1 00:00,
/// approaching 1 at the end of December 31.
pub fn year_position(t: DateTime<Utc>) -> f64 {
    let start = Utc.with_ymd_and_hms(t.year(), 1, 1, 0, 0, 0).unwrap();
    let end = Utc.with_ymd_and_hms(t.year() + 1, 1, 1, 0, 0, 0).unwrap();
    let elapsed = (t - start).num_seconds() as f64;
    let total = (end - start).num_seconds() as f64;
    elapsed / total
}

/// Exponential smoothing: τ̄_t = a·τ̄_{t−1} + (1−a)·τ_t, with τ̄₁ = τ₁.
pub fn smooth_temperature(raw: &[f64], a: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut prev = match raw.first() {
        Some(&v) => v,
        None => return out,
    };
    out.push(prev);
    for &t in &raw[1..] {
        prev = a * prev + (1.0 - a) * t;
        out.push(prev);
    }
    out
}

/// Mix regional exogenous frames into one frame for a node.
///
/// The weight of region `n` is the share of the node's historical
/// consumption contributed by its households in that region:
/// w_n = Σ_{i ∈ node ∩ region n} ȳ_i / Σ_{i ∈ node} ȳ_i.
pub fn mix_regional_meteo(
    node_id: &str,
    node_households: &[String],
    household_region: &HashMap<String, usize>,
    household_means: &HashMap<String, f64>,
    regional: &[ExogenousFrame],
) -> Result<ExogenousFrame> {
    if node_households.is_empty() {
        return Err(Error::EmptyNode(node_id.to_string()));
    }
    let mut weights = vec![0.0; regional.len()];
    let mut total = 0.0;
    for hh in node_households {
        let region = *household_region
            .get(hh)
            .ok_or_else(|| Error::UnknownNode(hh.clone()))?;
        let mean = *household_means
            .get(hh)
            .ok_or_else(|| Error::UnknownNode(hh.clone()))?;
        weights[region] += mean;
        total += mean;
    }
    if total <= 0.0 {
        return Err(Error::EmptyNode(node_id.to_string()));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    mix_frames(&weights, regional)
}

/// Convex combination of regional frames with the given weights;
/// calendar variables are shared and copied from the first frame.
pub fn mix_frames(weights: &[f64], regional: &[ExogenousFrame]) -> Result<ExogenousFrame> {
    let first = regional.first().ok_or(Error::EmptyPartition("regions".into()))?;
    let n = first.len();
    let combine = |get: fn(&ExogenousFrame) -> &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|t| {
                weights
                    .iter()
                    .zip(regional.iter())
                    .map(|(&w, frame)| w * get(frame)[t])
                    .sum()
            })
            .collect()
    };
    Ok(ExogenousFrame {
        timestamps: first.timestamps.clone(),
        temperature: combine(|f| &f.temperature),
        smoothed_temperature: combine(|f| &f.smoothed_temperature),
        visibility: combine(|f| &f.visibility),
        humidity: combine(|f| &f.humidity),
        day_of_week: first.day_of_week.clone(),
        half_hour: first.half_hour.clone(),
        year_position: first.year_position.clone(),
    })
}

// ---------------------------------------------------------------------------
// Auto-regressive model on daily and weekly lags
// ---------------------------------------------------------------------------

/// y_t ≈ a1·y_{t−48} + a7·y_{t−336}, one shared coefficient pair for
/// all 48 half-hours, no intercept.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ArModel {
    pub a1: f64,
    pub a7: f64,
}

/// Ordinary least squares over all instants with both lags available.
pub fn ar_fit(series: &[f64]) -> Result<ArModel> {
    if series.len() < LAG_WEEK + 2 {
        return Err(Error::InsufficientHistory);
    }
    // Normal equations for the two-regressor no-intercept OLS.
    let (mut s11, mut s12, mut s22, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in LAG_WEEK..series.len() {
        let x1 = series[t - LAG_DAY];
        let x2 = series[t - LAG_WEEK];
        let y = series[t];
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        sy1 += y * x1;
        sy2 += y * x2;
    }
    let det = s11 * s22 - s12 * s12;
    let scale = s11 * s22;
    if scale <= 0.0 || det.abs() < 1e-12 * scale {
        return Err(Error::DegenerateDesign);
    }
    Ok(ArModel {
        a1: (s22 * sy1 - s12 * sy2) / det,
        a7: (s11 * sy2 - s12 * sy1) / det,
    })
}

pub fn ar_predict(model: &ArModel, lag_day: f64, lag_week: f64) -> f64 {
    model.a1 * lag_day + model.a7 * lag_week
}

// ---------------------------------------------------------------------------
// Regression random forest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of trees.
    pub trees: usize,
    /// Bootstrap sample size; `None` means the training size.
    pub sample_size: Option<usize>,
    /// Minimum points required to attempt a split.
    pub min_node: usize,
    /// Variables sampled per split; `None` means ⌈2/3 · n_features⌉.
    pub vars_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 500,
            sample_size: None,
            min_node: 5,
            vars_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeSplit {
    Leaf {
        value: f64,
    },
    Node {
        variable: usize,
        threshold: f64,
        left: Box<TreeSplit>,
        right: Box<TreeSplit>,
    },
}

impl TreeSplit {
    pub fn predict(&self, record: &[f64]) -> f64 {
        match self {
            TreeSplit::Leaf { value } => *value,
            TreeSplit::Node {
                variable,
                threshold,
                left,
                right,
            } => {
                if record[*variable] <= *threshold {
                    left.predict(record)
                } else {
                    right.predict(record)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<TreeSplit>,
    pub n_features: usize,
}

fn mean(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.sum::<f64>() / count as f64
}

fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values.iter().cloned(), values.len());
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Weighted within-group variance of a candidate split:
/// |N_L|/n·Var(N_L) + |N_R|/n·Var(N_R), with `n` the node size.
pub fn split_criterion(left: &[f64], right: &[f64]) -> f64 {
    let n = (left.len() + right.len()) as f64;
    (left.len() as f64 / n) * variance(left) + (right.len() as f64 / n) * variance(right)
}

/// Best (variable, threshold, criterion) among the sampled variables,
/// with thresholds at midpoints between consecutive sorted unique
/// values. Returns `None` when no variable separates the points.
fn best_split(
    records: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    variables: &[usize],
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for &var in variables {
        let mut values: Vec<f64> = indices.iter().map(|&i| records[i][var]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let mut left = Vec::new();
            let mut right = Vec::new();
            for &i in indices {
                if records[i][var] <= threshold {
                    left.push(targets[i]);
                } else {
                    right.push(targets[i]);
                }
            }
            let crit = split_criterion(&left, &right);
            let better = match best {
                None => true,
                Some((_, _, c)) => crit < c,
            };
            if better {
                best = Some((var, threshold, crit));
            }
        }
    }
    best
}

fn grow_tree(
    records: &[Vec<f64>],
    targets: &[f64],
    indices: Vec<usize>,
    config: &ForestConfig,
    n_vars: usize,
    rng: &mut StdRng,
) -> TreeSplit {
    let node_targets: Vec<f64> = indices.iter().map(|&i| targets[i]).collect();
    let node_mean = mean(node_targets.iter().cloned(), node_targets.len());
    if indices.len() < config.min_node || variance(&node_targets) == 0.0 {
        return TreeSplit::Leaf { value: node_mean };
    }
    let n_features = records[0].len();
    let mut all_vars: Vec<usize> = (0..n_features).collect();
    all_vars.shuffle(rng);
    let sampled = &all_vars[..n_vars.min(n_features)];
    match best_split(records, targets, &indices, sampled) {
        None => TreeSplit::Leaf { value: node_mean },
        Some((variable, threshold, _)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| records[i][variable] <= threshold);
            if left_idx.is_empty() || right_idx.is_empty() {
                return TreeSplit::Leaf { value: node_mean };
            }
            TreeSplit::Node {
                variable,
                threshold,
                left: Box::new(grow_tree(records, targets, left_idx, config, n_vars, rng)),
                right: Box::new(grow_tree(records, targets, right_idx, config, n_vars, rng)),
            }
        }
    }
}

/// Grow one tree on the full sample considering every variable at every
/// split. Deterministic; used to audit split optimality against
/// exhaustive search.
pub fn fit_tree_all_variables(
    records: &[Vec<f64>],
    targets: &[f64],
    min_node: usize,
) -> Result<TreeSplit> {
    if records.is_empty() || targets.len() != records.len() {
        return Err(Error::EmptyTraining);
    }
    let config = ForestConfig {
        trees: 1,
        min_node,
        ..ForestConfig::default()
    };
    let n_features = records[0].len();
    let mut rng = StdRng::seed_from_u64(config.seed);
    Ok(grow_tree(
        records,
        targets,
        (0..records.len()).collect(),
        &config,
        n_features,
        &mut rng,
    ))
}

/// Grow a forest on a training table; each tree sees a bootstrap
/// sample and samples a subset of variables at every split.
pub fn forest_fit(
    records: &[Vec<f64>],
    targets: &[f64],
    config: &ForestConfig,
) -> Result<RegressionForest> {
    if records.is_empty() || targets.len() != records.len() {
        return Err(Error::EmptyTraining);
    }
    let n_features = records[0].len();
    let n = config.sample_size.unwrap_or(records.len());
    let n_vars = config
        .vars_per_split
        .unwrap_or((2 * n_features).div_ceil(3))
        .max(1);
    // Per-tree rng streams derive deterministically from the seed, so
    // parallel growth keeps results reproducible.
    let trees: Vec<TreeSplit> = (0..config.trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = StdRng::seed_from_u64(config.seed.wrapping_add(k as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..records.len())).collect();
            grow_tree(records, targets, indices, config, n_vars, &mut rng)
        })
        .collect();
    Ok(RegressionForest { trees, n_features })
}

/// Mean of the per-tree forecasts.
pub fn forest_predict(forest: &RegressionForest, record: &[f64]) -> f64 {
    forest
        .trees
        .iter()
        .map(|t| t.predict(record))
        .sum::<f64>()
        / forest.trees.len() as f64
}

/// Forest input record: weekly lag, daily lag, and the instant's
/// exogenous variables.
pub fn forest_record(lag_week: f64, lag_day: f64, exo: &ExogenousFrame, t: usize) -> Vec<f64> {
    vec![
        lag_week,
        lag_day,
        exo.temperature[t],
        exo.smoothed_temperature[t],
        exo.visibility[t],
        exo.humidity[t],
        exo.year_position[t],
        exo.day_of_week[t] as f64,
        exo.half_hour[t] as f64,
    ]
}

/// Assemble the forest training table from a consumption series and its
/// exogenous frame, dropping instants missing a lag.
pub fn forest_training_table(
    series: &[f64],
    exo: &ExogenousFrame,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if series.len() != exo.len() {
        return Err(Error::DimensionMismatch {
            expected: exo.len(),
            got: series.len(),
        });
    }
    if series.len() <= LAG_WEEK {
        return Err(Error::InsufficientHistory);
    }
    let mut records = Vec::new();
    let mut targets = Vec::new();
    for t in LAG_WEEK..series.len() {
        records.push(forest_record(
            series[t - LAG_WEEK],
            series[t - LAG_DAY],
            exo,
            t,
        ));
        targets.push(series[t]);
    }
    Ok((records, targets))
}

// ---------------------------------------------------------------------------
// External feature ingestion
// ---------------------------------------------------------------------------

/// Read a long-format CSV `timestamp,node_id,value` into a dense panel
/// aligned to the given node order.
pub fn ingest_external_features<R: Read>(reader: R, nodes: &[String]) -> Result<PanelFrame> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let node_index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut cells: HashMap<DateTime<Utc>, Vec<Option<f64>>> = HashMap::new();
    for row in csv_reader.deserialize::<(DateTime<Utc>, String, f64)>() {
        let (ts, node, value) = row?;
        let &idx = node_index
            .get(node.as_str())
            .ok_or_else(|| Error::UnknownNode(node.clone()))?;
        let row_vals = cells
            .entry(ts)
            .or_insert_with(|| vec![None; nodes.len()]);
        if row_vals[idx].is_some() {
            return Err(Error::GapInTimestamps(ts.to_rfc3339()));
        }
        row_vals[idx] = Some(value);
    }
    let mut timestamps: Vec<DateTime<Utc>> = cells.keys().cloned().collect();
    timestamps.sort();
    if timestamps.is_empty() {
        return Err(Error::EmptyTraining);
    }
    for pair in timestamps.windows(2) {
        if pair[1] - pair[0] != half_hour() {
            return Err(Error::GapInTimestamps(pair[1].to_rfc3339()));
        }
    }
    let mut rows = Vec::with_capacity(timestamps.len());
    for ts in &timestamps {
        let row_vals = &cells[ts];
        let mut row = Vec::with_capacity(nodes.len());
        for (idx, v) in row_vals.iter().enumerate() {
            match v {
                Some(x) => row.push(*x),
                None => return Err(Error::MissingNode(nodes[idx].clone())),
            }
        }
        rows.push(row);
    }
    PanelFrame::from_rows(nodes.to_vec(), timestamps, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::half_hourly_axis;

    #[test]
    fn smoothing_limits() {
        let raw = vec![3.0, 7.0, -1.0, 4.0];
        assert_eq!(smooth_temperature(&raw, 0.0), raw);
        assert_eq!(smooth_temperature(&raw, 1.0), vec![3.0; 4]);
        assert_eq!(smooth_temperature(&[0.0, 10.0], 0.5), vec![0.0, 5.0]);
    }

    #[test]
    fn calendar_fields() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let ts = half_hourly_axis(start, 96);
        let n = ts.len();
        let exo = ExogenousFrame::new(ts, vec![0.0; n], vec![5.0; n], vec![50.0; n], 0.9).unwrap();
        // Jan 1 2020 is a Wednesday.
        assert_eq!(exo.day_of_week[0], 3);
        assert_eq!(exo.half_hour[0], 1);
        assert_eq!(exo.half_hour[47], 48);
        assert_eq!(exo.half_hour[48], 1);
        assert_eq!(exo.year_position[0], 0.0);
        assert!(exo.year_position[95] > exo.year_position[0]);
    }

    fn constant_frame(len: usize, temp: f64) -> ExogenousFrame {
        let ts = half_hourly_axis(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), len);
        ExogenousFrame::new(ts, vec![temp; len], vec![5.0; len], vec![50.0; len], 0.9).unwrap()
    }

    #[test]
    fn meteo_mixing_weights_follow_consumption_shares() {
        let regions = vec![constant_frame(4, 0.0), constant_frame(4, 10.0)];
        let mut region_of = HashMap::new();
        let mut means = HashMap::new();
        for (hh, (r, m)) in [("a", (0usize, 3.0)), ("b", (1usize, 3.0))] {
            region_of.insert(hh.to_string(), r);
            means.insert(hh.to_string(), m);
        }
        let mixed = mix_regional_meteo(
            "node",
            &["a".into(), "b".into()],
            &region_of,
            &means,
            &regions,
        )
        .unwrap();
        assert!((mixed.temperature[0] - 5.0).abs() < 1e-12);

        // Single-region node gets that region's frame verbatim.
        let solo = mix_regional_meteo("node", &["b".into()], &region_of, &means, &regions).unwrap();
        assert_eq!(solo.temperature, regions[1].temperature);
    }

    #[test]
    fn meteo_mixing_three_region_shares() {
        let regions = vec![
            constant_frame(2, 1.0),
            constant_frame(2, 2.0),
            constant_frame(2, 3.0),
        ];
        let mut region_of = HashMap::new();
        let mut means = HashMap::new();
        for (hh, (r, m)) in [
            ("a", (0usize, 5.0)),
            ("b", (1usize, 3.0)),
            ("c", (2usize, 2.0)),
        ] {
            region_of.insert(hh.to_string(), r);
            means.insert(hh.to_string(), m);
        }
        let mixed = mix_regional_meteo(
            "node",
            &["a".into(), "b".into(), "c".into()],
            &region_of,
            &means,
            &regions,
        )
        .unwrap();
        let expected = 0.5 * 1.0 + 0.3 * 2.0 + 0.2 * 3.0;
        assert!((mixed.temperature[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_node_rejected() {
        let regions = vec![constant_frame(2, 1.0)];
        let r = mix_regional_meteo("node", &[], &HashMap::new(), &HashMap::new(), &regions);
        assert!(matches!(r, Err(Error::EmptyNode(_))));
    }

    #[test]
    fn ar_recovers_noiseless_coefficients() {
        let mut series = vec![0.0; 5000];
        let mut rng = StdRng::seed_from_u64(1);
        for s in series.iter_mut().take(LAG_WEEK) {
            *s = rng.gen_range(-1.0..1.0);
        }
        for t in LAG_WEEK..5000 {
            series[t] = 0.6 * series[t - LAG_DAY] + 0.4 * series[t - LAG_WEEK];
        }
        let model = ar_fit(&series).unwrap();
        assert!((model.a1 - 0.6).abs() < 1e-8);
        assert!((model.a7 - 0.4).abs() < 1e-8);
        assert!((ar_predict(&ArModel { a1: 0.5, a7: 0.5 }, 10.0, 20.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn ar_rejects_constant_series() {
        let series = vec![2.0; 1000];
        assert!(matches!(ar_fit(&series), Err(Error::DegenerateDesign)));
    }

    #[test]
    fn ar_rejects_short_history() {
        assert!(matches!(
            ar_fit(&vec![1.0; 100]),
            Err(Error::InsufficientHistory)
        ));
    }

    #[test]
    fn ar_on_white_noise_has_small_coefficients() {
        let mut rng = StdRng::seed_from_u64(2);
        let series: Vec<f64> = (0..20000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = ar_fit(&series).unwrap();
        assert!(model.a1.abs() < 0.1 && model.a7.abs() < 0.1);
    }

    #[test]
    fn single_tree_reproduces_pure_split() {
        // Two constant halves separated by one threshold on variable 0.
        let records: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { 0.0 } else { 1.0 }, 0.5])
            .collect();
        let targets: Vec<f64> = (0..20).map(|i| if i < 10 { -3.0 } else { 5.0 }).collect();
        let config = ForestConfig {
            trees: 25,
            sample_size: None,
            min_node: 2,
            vars_per_split: Some(2),
            seed: 7,
        };
        let forest = forest_fit(&records, &targets, &config).unwrap();
        assert!((forest_predict(&forest, &[0.0, 0.5]) - (-3.0)).abs() < 1e-12);
        assert!((forest_predict(&forest, &[1.0, 0.5]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn huge_min_node_gives_global_mean() {
        let records: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let config = ForestConfig {
            trees: 3,
            min_node: 100,
            seed: 1,
            ..ForestConfig::default()
        };
        let forest = forest_fit(&records, &targets, &config).unwrap();
        // Each tree is a single leaf at its bootstrap mean; predictions
        // are constant in the record.
        let p1 = forest_predict(&forest, &[0.0]);
        let p2 = forest_predict(&forest, &[9.0]);
        assert_eq!(p1, p2);
    }

    #[test]
    fn forest_predictions_bounded_by_training_targets() {
        let mut rng = StdRng::seed_from_u64(3);
        let records: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..100).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let config = ForestConfig {
            trees: 20,
            seed: 4,
            ..ForestConfig::default()
        };
        let forest = forest_fit(&records, &targets, &config).unwrap();
        let lo = targets.iter().cloned().fold(f64::MAX, f64::min);
        let hi = targets.iter().cloned().fold(f64::MIN, f64::max);
        for _ in 0..50 {
            let rec: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = forest_predict(&forest, &rec);
            assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn forest_is_deterministic_given_seed() {
        let records: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let targets: Vec<f64> = (0..50).map(|i| (i % 5) as f64).collect();
        let config = ForestConfig {
            trees: 10,
            seed: 9,
            ..ForestConfig::default()
        };
        let f1 = forest_fit(&records, &targets, &config).unwrap();
        let f2 = forest_fit(&records, &targets, &config).unwrap();
        for _ in 0..10 {
            let rec = vec![2.0, 1.0];
            assert_eq!(
                forest_predict(&f1, &rec).to_bits(),
                forest_predict(&f2, &rec).to_bits()
            );
        }
    }

    #[test]
    fn ingest_round_trip_and_errors() {
        let nodes = vec!["a".to_string(), "b".to_string()];
        let csv = "timestamp,node_id,value\n\
            2020-01-01T00:00:00Z,a,1.0\n\
            2020-01-01T00:00:00Z,b,2.0\n\
            2020-01-01T00:30:00Z,a,3.0\n\
            2020-01-01T00:30:00Z,b,4.0\n";
        let panel = ingest_external_features(csv.as_bytes(), &nodes).unwrap();
        assert_eq!(panel.len(), 2);
        assert_eq!(panel.get(1, 1), 4.0);

        let missing = "timestamp,node_id,value\n2020-01-01T00:00:00Z,a,1.0\n";
        assert!(matches!(
            ingest_external_features(missing.as_bytes(), &nodes),
            Err(Error::MissingNode(n)) if n == "b"
        ));

        let dup = "timestamp,node_id,value\n\
            2020-01-01T00:00:00Z,a,1.0\n\
            2020-01-01T00:00:00Z,a,1.5\n\
            2020-01-01T00:00:00Z,b,2.0\n";
        assert!(matches!(
            ingest_external_features(dup.as_bytes(), &nodes),
            Err(Error::GapInTimestamps(_))
        ));

        let unknown = "timestamp,node_id,value\n2020-01-01T00:00:00Z,zz,1.0\n";
        assert!(matches!(
            ingest_external_features(unknown.as_bytes(), &nodes),
            Err(Error::UnknownNode(_))
        ));

        let gap = "timestamp,node_id,value\n\
            2020-01-01T00:00:00Z,a,1.0\n\
            2020-01-01T00:00:00Z,b,2.0\n\
            2020-01-01T01:30:00Z,a,3.0\n\
            2020-01-01T01:30:00Z,b,4.0\n";
        assert!(matches!(
            ingest_external_features(gap.as_bytes(), &nodes),
            Err(Error::GapInTimestamps(_))
        ));
    }
}
