//! End-to-end orchestration.
//!
//! From raw household consumption to the evaluation report: build a
//! household partition, assemble the hierarchy and its node series,
//! generate per-node benchmark features, standardize, run per-node
//! online learners under delayed feedback, project every forecast onto
//! the summation constraints, and score the four strategies on the
//! evaluation window.

use chrono::{DateTime, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{HashMap, VecDeque};
use std::io::Write;

use crate::aggregate::{
    lifted_loss_bound, online_grid_select, Algorithm, DelayedAggregator, L1LiftedLearner, Learner,
    RidgeState, SimplexKind,
};
use crate::cluster::{
    attribute_clustering, nmf_clustering, random_clustering, Clustering, HouseholdTable,
    Provenance,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    bottom_up, constrained_comparator, regret_trace, strategy_errors, EvaluationReport, NodeSet,
    Strategy,
};
use crate::features::{
    ar_fit, ar_predict, forest_fit, forest_predict, forest_record, forest_training_table,
    ingest_external_features, mix_regional_meteo, ExogenousFrame, ForestConfig, LAG_DAY, LAG_WEEK,
};
use crate::hierarchy::{
    build_constraint_matrix, build_projector, enumerate_crossed_nodes, ConstraintMatrix,
    HierarchySpec, Projector,
};
use crate::panel::PanelFrame;
use crate::standardize::{
    fit_standardizer, fit_standardizer_regularized, StandardizationStats,
};
use crate::synth::SyntheticFleet;

/// Default observation delay: one day of half-hours.
pub const DEFAULT_DELAY: usize = 48;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DateRanges {
    pub train_start: DateTime<Utc>,
    /// End of training; the init window starts here.
    pub train_end: DateTime<Utc>,
    /// End of the warm-up window excluded from evaluation.
    pub init_end: DateTime<Utc>,
    pub eval_end: DateTime<Utc>,
}

impl DateRanges {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_start < self.train_end
            && self.train_end < self.init_end
            && self.init_end < self.eval_end)
        {
            return Err(Error::InvalidDateRange(format!(
                "expected train_start < train_end < init_end < eval_end, got {} / {} / {} / {}",
                self.train_start, self.train_end, self.init_end, self.eval_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyMode {
    /// Root plus one node per cluster.
    TwoLevel,
    /// Regions crossed with clusters.
    Crossed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusterMethod {
    Nmf { r: usize },
    Random,
    Attribute { column: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    #[serde(flatten)]
    pub method: ClusterMethod,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FeatureMethod {
    Ar,
    Forest { trees: usize },
    External { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregationSettings {
    pub algorithm: Algorithm,
    /// Ridge regularizer when no grid is searched.
    pub lambda: f64,
    /// L1 radius for the simplex learners when no grid is searched.
    pub alpha: f64,
    pub delay: usize,
    /// Optional grid of values (λ for ridge, α otherwise) searched
    /// online; `None` runs the single configured value.
    pub grid: Option<Vec<f64>>,
    /// When true, each node selects its own grid value from its own
    /// error account; the default shares one selection across nodes.
    #[serde(default)]
    pub per_node_selection: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoPaths {
    pub households: String,
    pub meteo: String,
    pub attributes: Option<String>,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub hierarchy: HierarchyMode,
    pub clustering: ClusteringConfig,
    pub features: FeatureMethod,
    pub aggregation: AggregationSettings,
    pub dates: DateRanges,
    #[serde(default)]
    pub io: Option<IoPaths>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dates.validate()?;
        if let Some(grid) = &self.aggregation.grid {
            if grid.is_empty() {
                return Err(Error::EmptyGrid);
            }
        }
        match self.aggregation.algorithm {
            Algorithm::NlRidge if self.aggregation.lambda <= 0.0 => {
                return Err(Error::NonPositiveLambda(self.aggregation.lambda))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        format!("{:x}", h.finalize())
    }
}

/// Raw inputs of a run: household series, their regions, regional
/// weather, and optional categorical attributes.
#[derive(Debug, Clone)]
pub struct FleetData {
    pub households: PanelFrame,
    pub household_region: HashMap<String, usize>,
    pub regional_meteo: Vec<ExogenousFrame>,
    pub attributes: Option<HouseholdTable>,
}

impl From<SyntheticFleet> for FleetData {
    fn from(fleet: SyntheticFleet) -> Self {
        FleetData {
            households: fleet.households,
            household_region: fleet.household_region,
            regional_meteo: fleet.regional_meteo,
            attributes: None,
        }
    }
}

/// Everything a run produces, kept in memory; the CLI persists it.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EvaluationReport,
    pub hierarchy: HierarchySpec,
    pub clustering: Clustering,
    pub stats: StandardizationStats,
    /// Observations over the evaluation window.
    pub eval_observations: PanelFrame,
    /// Per-strategy forecasts over the evaluation window.
    pub forecasts: Vec<(Strategy, PanelFrame)>,
    /// Largest relative constraint violation ‖Kỹ‖_∞ / ‖ỹ‖ seen at any
    /// projected instant.
    pub max_constraint_violation: f64,
}

// ---------------------------------------------------------------------------
// Stage helpers
// ---------------------------------------------------------------------------

fn timestamp_index(panel: &PanelFrame, ts: DateTime<Utc>) -> Result<usize> {
    panel
        .timestamps
        .iter()
        .position(|&t| t == ts)
        .ok_or_else(|| Error::InvalidDateRange(format!("{ts} is not on the data axis")))
}

/// Partition of households by region, as a clustering with 1-based ids.
fn region_partition(data: &FleetData) -> Clustering {
    let labels: Vec<usize> = data
        .households
        .nodes
        .iter()
        .map(|id| data.household_region[id])
        .collect();
    Clustering::from_labels(
        &data.households.nodes,
        &labels,
        Provenance::Attribute {
            column: "region".into(),
        },
    )
}

fn build_clustering(config: &RunConfig, data: &FleetData, train: &PanelFrame) -> Result<Clustering> {
    match &config.clustering.method {
        ClusterMethod::Nmf { r } => {
            nmf_clustering(train, *r, config.clustering.k, config.seed)
        }
        ClusterMethod::Random => {
            random_clustering(&data.households.nodes, config.clustering.k, config.seed)
        }
        ClusterMethod::Attribute { column } => {
            let table = data
                .attributes
                .as_ref()
                .ok_or_else(|| Error::UnknownColumn(column.clone()))?;
            Ok(attribute_clustering(table, column, 1)?.0)
        }
    }
}

/// Node id → member households, for every node of the hierarchy.
fn node_membership(
    spec: &HierarchySpec,
    regions: &Clustering,
    clusters: &Clustering,
    mode: HierarchyMode,
) -> HashMap<String, Vec<String>> {
    let mut members: HashMap<String, Vec<String>> = HashMap::new();
    let all: Vec<String> = clusters.households();
    members.insert(spec.root().to_string(), all.clone());
    match mode {
        HierarchyMode::TwoLevel => {
            for c in 1..=clusters.k {
                members.insert(format!("C{c}"), clusters.members(c));
            }
        }
        HierarchyMode::Crossed => {
            for r in 1..=regions.k {
                members.insert(format!("R{r}"), regions.members(r));
            }
            for c in 1..=clusters.k {
                members.insert(format!("C{c}"), clusters.members(c));
            }
            for id in &all {
                let leaf = format!("R{}|C{}", regions.assignment[id], clusters.assignment[id]);
                members.entry(leaf).or_default().push(id.clone());
            }
        }
    }
    members
}

/// Sum household series into one column per hierarchy node.
fn aggregate_nodes(
    spec: &HierarchySpec,
    membership: &HashMap<String, Vec<String>>,
    households: &PanelFrame,
) -> Result<PanelFrame> {
    let mut panel = PanelFrame::zeros(spec.node_order.clone(), households.timestamps.clone());
    for (g, node) in spec.node_order.iter().enumerate() {
        let member_ids = membership
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.clone()))?;
        let idx: Vec<usize> = member_ids
            .iter()
            .map(|id| {
                households
                    .node_index(id)
                    .ok_or_else(|| Error::UnknownNode(id.clone()))
            })
            .collect::<Result<_>>()?;
        for t in 0..households.len() {
            let row = households.row(t);
            panel.set(t, g, idx.iter().map(|&i| row[i]).sum());
        }
    }
    Ok(panel)
}

/// Per-node benchmark features over the full axis; instants lacking the
/// weekly lag keep a zero feature and are excluded from fitting windows.
fn generate_features(
    config: &RunConfig,
    data: &FleetData,
    nodes: &PanelFrame,
    membership: &HashMap<String, Vec<String>>,
    train_range: (usize, usize),
) -> Result<PanelFrame> {
    let (train_start, train_end) = train_range;
    let mut features = PanelFrame::zeros(nodes.nodes.clone(), nodes.timestamps.clone());
    match &config.features {
        FeatureMethod::External { path } => {
            let file = std::fs::File::open(path)?;
            let panel = ingest_external_features(file, &nodes.nodes)?;
            if panel.timestamps != nodes.timestamps {
                return Err(Error::MisalignedPanels);
            }
            return Ok(panel);
        }
        FeatureMethod::Ar => {
            for g in 0..nodes.n_nodes() {
                let series = nodes.column(g);
                let fit_slice = &series[train_start..train_end];
                let model = ar_fit(fit_slice)?;
                for t in LAG_WEEK..series.len() {
                    features.set(
                        t,
                        g,
                        ar_predict(&model, series[t - LAG_DAY], series[t - LAG_WEEK]),
                    );
                }
            }
        }
        FeatureMethod::Forest { trees } => {
            // Household means over training drive the meteo mixing.
            let mut means = HashMap::new();
            for (i, id) in data.households.nodes.iter().enumerate() {
                let col = data.households.column(i);
                let m: f64 = col[train_start..train_end].iter().sum::<f64>()
                    / (train_end - train_start) as f64;
                means.insert(id.clone(), m);
            }
            for g in 0..nodes.n_nodes() {
                let node_id = &nodes.nodes[g];
                let exo = mix_regional_meteo(
                    node_id,
                    &membership[node_id],
                    &data.household_region,
                    &means,
                    &data.regional_meteo,
                )?;
                let series = nodes.column(g);
                let train_series = &series[train_start..train_end];
                let train_exo = slice_exo(&exo, train_start, train_end);
                let (records, targets) = forest_training_table(train_series, &train_exo)?;
                let forest = forest_fit(
                    &records,
                    &targets,
                    &ForestConfig {
                        trees: *trees,
                        seed: config.seed.wrapping_add(g as u64),
                        ..ForestConfig::default()
                    },
                )?;
                for t in LAG_WEEK..series.len() {
                    let record =
                        forest_record(series[t - LAG_WEEK], series[t - LAG_DAY], &exo, t);
                    features.set(t, g, forest_predict(&forest, &record));
                }
            }
        }
    }
    Ok(features)
}

fn slice_exo(exo: &ExogenousFrame, start: usize, end: usize) -> ExogenousFrame {
    ExogenousFrame {
        timestamps: exo.timestamps[start..end].to_vec(),
        temperature: exo.temperature[start..end].to_vec(),
        smoothed_temperature: exo.smoothed_temperature[start..end].to_vec(),
        visibility: exo.visibility[start..end].to_vec(),
        humidity: exo.humidity[start..end].to_vec(),
        day_of_week: exo.day_of_week[start..end].to_vec(),
        half_hour: exo.half_hour[start..end].to_vec(),
        year_position: exo.year_position[start..end].to_vec(),
    }
}

fn build_learner(
    algorithm: Algorithm,
    dim: usize,
    value: f64,
    loss_bound_e: f64,
) -> Result<Learner> {
    Ok(match algorithm {
        Algorithm::NlRidge => Learner::Ridge(RidgeState::new(dim, value)?),
        Algorithm::Boa => Learner::Lifted(L1LiftedLearner::new(
            dim,
            SimplexKind::Boa,
            value,
            loss_bound_e,
        )?),
        Algorithm::MlPol => Learner::Lifted(L1LiftedLearner::new(
            dim,
            SimplexKind::MlPol,
            value,
            loss_bound_e,
        )?),
    })
}

/// One grid value's per-node learners plus error bookkeeping.
struct Bank {
    aggregators: Vec<DelayedAggregator>,
    /// Real-space predictions awaiting their observations, in step order.
    pending_predictions: VecDeque<Vec<f64>>,
    /// Squared error accumulated per node from delivered observations.
    node_errors: Vec<f64>,
}

impl Bank {
    fn total_error(&self) -> f64 {
        self.node_errors.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// The run itself
// ---------------------------------------------------------------------------

/// Everything the run needs before online learning starts: clustering,
/// hierarchy, projector, node series, and per-node features.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub clustering: Clustering,
    pub hierarchy: HierarchySpec,
    pub constraints: ConstraintMatrix,
    pub projector: Projector,
    pub nodes: PanelFrame,
    pub features: PanelFrame,
    /// Data-axis indices of train start, train end, init end, eval end.
    pub indices: (usize, usize, usize, usize),
}

/// Run the offline stages: clustering, hierarchy construction, node
/// aggregation, and feature generation.
pub fn prepare_run(config: &RunConfig, data: &FleetData) -> Result<PreparedRun> {
    config.validate()?;
    let households = &data.households;
    let train_start = timestamp_index(households, config.dates.train_start)?;
    let train_end = timestamp_index(households, config.dates.train_end)?;
    let init_end = timestamp_index(households, config.dates.init_end)?;
    let eval_end = timestamp_index(households, config.dates.eval_end).or_else(|_| {
        if config.dates.eval_end
            == *households.timestamps.last().unwrap() + crate::panel::half_hour()
        {
            Ok(households.len())
        } else {
            Err(Error::InvalidDateRange(format!(
                "{} is not on the data axis",
                config.dates.eval_end
            )))
        }
    })?;

    // Stage: clustering.
    let train_panel = households.slice_time(train_start, train_end);
    let clustering =
        build_clustering(config, data, &train_panel).map_err(|e| e.in_stage("cluster"))?;
    let regions = region_partition(data);

    // Stage: hierarchy.
    let spec = match config.hierarchy {
        HierarchyMode::TwoLevel => HierarchySpec::two_level(
            "TOTAL",
            (1..=clustering.k).map(|c| format!("C{c}")).collect(),
        ),
        HierarchyMode::Crossed => enumerate_crossed_nodes(&regions, &clustering, "R", "C"),
    }
    .map_err(|e| e.in_stage("hierarchy"))?;
    let constraints = build_constraint_matrix(&spec).map_err(|e| e.in_stage("hierarchy"))?;
    let projector = build_projector(&constraints).map_err(|e| e.in_stage("hierarchy"))?;

    // Stage: node aggregation.
    let membership = node_membership(&spec, &regions, &clustering, config.hierarchy);
    let nodes = aggregate_nodes(&spec, &membership, households)
        .map_err(|e| e.in_stage("aggregate_nodes"))?;

    // Stage: features.
    let features = generate_features(config, data, &nodes, &membership, (train_start, train_end))
        .map_err(|e| e.in_stage("features"))?;

    Ok(PreparedRun {
        clustering,
        hierarchy: spec,
        constraints,
        projector,
        nodes,
        features,
        indices: (train_start, train_end, init_end, eval_end),
    })
}

/// Execute a configured run on in-memory fleet data.
pub fn run_pipeline(config: &RunConfig, data: &FleetData) -> Result<PipelineOutput> {
    let prepared = prepare_run(config, data)?;
    let PreparedRun {
        clustering,
        hierarchy: spec,
        projector,
        nodes,
        features,
        indices: (train_start, train_end, init_end, eval_end),
        ..
    } = prepared;

    // Stage: standardizer, fit on the training window past the warm-up
    // lags. Per-node benchmarks of hierarchically constrained series
    // can be near-collinear; fall back to a lightly regularized
    // whitener when the exact Gram is singular.
    let std_start = train_start.max(LAG_WEEK);
    let std_obs = nodes.slice_time(std_start, train_end);
    let std_feat = features.slice_time(std_start, train_end);
    let stats = match fit_standardizer(&std_obs, &std_feat) {
        Ok(stats) => stats,
        Err(Error::SingularGram(_)) => {
            fit_standardizer_regularized(&std_obs, &std_feat, 1e-8)
                .map_err(|e| e.in_stage("standardize"))?
        }
        Err(e) => return Err(e.in_stage("standardize")),
    };

    // Stage: online aggregation with delayed feedback over init + eval.
    let run = run_learners(config, &nodes, &features, &stats, &projector, train_end, eval_end)
        .map_err(|e| e.in_stage("aggregate"))?;

    // Stage: evaluation on the eval window only.
    let output = evaluate_run(
        config, &spec, &projector, &nodes, &features, run, init_end, eval_end, clustering, stats,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    Ok(output)
}

struct LearnerRun {
    /// Aggregation forecasts per run instant (train_end..eval_end).
    aggregation: Vec<Vec<f64>>,
    /// Aggregation-then-projection forecasts.
    projected: Vec<Vec<f64>>,
    max_constraint_violation: f64,
}

fn run_learners(
    config: &RunConfig,
    nodes: &PanelFrame,
    features: &PanelFrame,
    stats: &StandardizationStats,
    projector: &Projector,
    run_start: usize,
    run_end: usize,
) -> Result<LearnerRun> {
    let n = nodes.n_nodes();
    let delay = config.aggregation.delay;
    let loss_bound = lifted_loss_bound(
        config.aggregation.alpha.max(1.0),
        stats.empirical_bound.max(1.0),
    );
    let single_value = match config.aggregation.algorithm {
        Algorithm::NlRidge => config.aggregation.lambda,
        _ => config.aggregation.alpha,
    };
    let grid: Vec<f64> = config
        .aggregation
        .grid
        .clone()
        .unwrap_or_else(|| vec![single_value]);

    let mut banks: Vec<Bank> = grid
        .iter()
        .map(|&value| -> Result<Bank> {
            let aggregators = (0..n)
                .map(|_| {
                    Ok(DelayedAggregator::new(
                        build_learner(config.aggregation.algorithm, n, value, loss_bound)?,
                        delay,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Bank {
                aggregators,
                pending_predictions: VecDeque::new(),
                node_errors: vec![0.0; n],
            })
        })
        .collect::<Result<_>>()?;

    let k_matrix = &projector; // projected via matrix below
    let mut aggregation = Vec::with_capacity(run_end - run_start);
    let mut projected = Vec::with_capacity(run_end - run_start);
    let mut max_violation = 0.0f64;
    let constraint_rows = constraint_rows_of(projector);

    for (j, t) in (run_start..run_end).enumerate() {
        let x = features.row_vector(t);
        let x_std = &stats.whitener * &x;

        // Every bank predicts every node (needed for its error account).
        let mut bank_preds: Vec<Vec<f64>> = Vec::with_capacity(banks.len());
        for bank in &banks {
            let preds: Vec<f64> = (0..n)
                .map(|g| {
                    let y_bar = bank.aggregators[g].predict(&x_std);
                    stats.scales[g] * y_bar + x[g]
                })
                .collect();
            bank_preds.push(preds);
        }

        // The emitted forecast comes from the bank selected on errors
        // accumulated from delivered observations, shared across nodes
        // unless per-node selection is requested.
        let y_hat: Vec<f64> = if config.aggregation.per_node_selection {
            (0..n)
                .map(|g| -> Result<f64> {
                    let errs: Vec<f64> = banks.iter().map(|b| b.node_errors[g]).collect();
                    let value = online_grid_select(&grid, j + 1, &errs)?;
                    let idx = grid.iter().position(|&v| v == value).unwrap();
                    Ok(bank_preds[idx][g])
                })
                .collect::<Result<_>>()?
        } else {
            let cum_errors: Vec<f64> = banks.iter().map(|b| b.total_error()).collect();
            let selected_value = online_grid_select(&grid, j + 1, &cum_errors)?;
            let selected = grid
                .iter()
                .position(|&v| v == selected_value)
                .expect("selected value comes from the grid");
            bank_preds[selected].clone()
        };

        let y_hat_vec = DVector::from_column_slice(&y_hat);
        let y_tilde = &k_matrix.matrix * &y_hat_vec;
        if let Some(rows) = &constraint_rows {
            let residual = rows * &y_tilde;
            let norm = y_tilde.norm();
            if norm > 0.0 {
                max_violation = max_violation.max(residual.amax() / norm);
            }
        }
        aggregation.push(y_hat);
        projected.push(y_tilde.iter().cloned().collect());

        // Register features and stash predictions for delayed scoring.
        for (bank, preds) in banks.iter_mut().zip(bank_preds) {
            for agg in bank.aggregators.iter_mut() {
                agg.submit_feature(x_std.clone());
            }
            bank.pending_predictions.push_back(preds);
        }

        // Deliver the observation of step t − delay, if it exists.
        if j >= delay {
            let s = t - delay;
            let obs_row = nodes.row(s);
            let feat_row = features.row(s);
            for bank in banks.iter_mut() {
                let preds = bank
                    .pending_predictions
                    .pop_front()
                    .ok_or(Error::OutOfOrderObservation)?;
                for g in 0..n {
                    let e = obs_row[g] - preds[g];
                    bank.node_errors[g] += e * e;
                }
                for (g, agg) in bank.aggregators.iter_mut().enumerate() {
                    let y_std = (obs_row[g] - feat_row[g]) / stats.scales[g];
                    agg.submit_observation(y_std)?;
                }
            }
        }
    }

    Ok(LearnerRun {
        aggregation,
        projected,
        max_constraint_violation: max_violation,
    })
}

/// Recover the constraint matrix rows used to measure violations; the
/// projector alone suffices for projection, so the rows are rebuilt
/// from I − Π being the projector onto the row space of K. Returns
/// `None` when there are no constraints.
fn constraint_rows_of(projector: &Projector) -> Option<nalgebra::DMatrix<f64>> {
    let n = projector.matrix.nrows();
    let complement = nalgebra::DMatrix::identity(n, n) - &projector.matrix;
    if complement.amax() < 1e-14 {
        None
    } else {
        Some(complement)
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate_run(
    config: &RunConfig,
    spec: &HierarchySpec,
    projector: &Projector,
    nodes: &PanelFrame,
    features: &PanelFrame,
    run: LearnerRun,
    init_end: usize,
    eval_end: usize,
    clustering: Clustering,
    stats: StandardizationStats,
) -> Result<PipelineOutput> {
    let run_start = eval_end - run.aggregation.len();
    let eval_obs = nodes.slice_time(init_end, eval_end);
    let eval_feat = features.slice_time(init_end, eval_end);
    let names = spec.node_order.clone();
    let ts = eval_obs.timestamps.clone();

    let benchmark = eval_feat.clone();
    let mut projection_rows = Vec::with_capacity(eval_obs.len());
    for t in 0..eval_feat.len() {
        let proj = &projector.matrix * eval_feat.row_vector(t);
        projection_rows.push(proj.iter().cloned().collect());
    }
    let projection = PanelFrame::from_rows(names.clone(), ts.clone(), projection_rows)?;
    let aggregation = PanelFrame::from_rows(
        names.clone(),
        ts.clone(),
        run.aggregation[(init_end - run_start)..].to_vec(),
    )?;
    let agg_projection = PanelFrame::from_rows(
        names.clone(),
        ts.clone(),
        run.projected[(init_end - run_start)..].to_vec(),
    )?;

    let mut report = EvaluationReport {
        hierarchy_hash: projector.source_hash.clone(),
        config_digest: config.digest(),
        ..EvaluationReport::default()
    };

    let strategies: Vec<(Strategy, &PanelFrame)> = vec![
        (Strategy::Benchmark, &benchmark),
        (Strategy::Projection, &projection),
        (Strategy::Aggregation, &aggregation),
        (Strategy::AggregationProjection, &agg_projection),
    ];
    for set in [NodeSet::All, NodeSet::Leaves, NodeSet::Root] {
        let idx = set.indices(spec)?;
        for (strategy, panel) in &strategies {
            let errs = strategy_errors(&eval_obs, panel, &idx)?;
            report.push(*strategy, set, &errs);
        }
    }

    // Bottom-up baseline at the root.
    let root_forecast = bottom_up(&eval_feat, spec)?;
    let mut bu_panel = eval_feat.clone();
    for (t, &v) in root_forecast.iter().enumerate() {
        bu_panel.set(t, 0, v);
    }
    let bu_errs = strategy_errors(&eval_obs, &bu_panel, &[0])?;
    report.push(Strategy::BottomUp, NodeSet::Root, &bu_errs);

    // Regrets vs the constrained comparator on the eval window.
    let (comparator, _) = constrained_comparator(&eval_obs, &eval_feat, projector)?;
    for (strategy, panel) in &strategies {
        let trace = regret_trace(&eval_obs, panel, &eval_feat, &comparator)?;
        report
            .regrets
            .insert(strategy.name().to_string(), *trace.last().unwrap());
    }

    let forecasts = vec![
        (Strategy::Benchmark, benchmark),
        (Strategy::Projection, projection),
        (Strategy::Aggregation, aggregation),
        (Strategy::AggregationProjection, agg_projection),
    ];
    Ok(PipelineOutput {
        report,
        hierarchy: spec.clone(),
        clustering,
        stats,
        eval_observations: eval_obs,
        forecasts,
        max_constraint_violation: run.max_constraint_violation,
    })
}

/// Long-format forecast CSV: `timestamp,node_id,strategy,value`.
pub fn write_forecasts_csv<W: Write>(output: &PipelineOutput, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["timestamp", "node_id", "strategy", "value"])?;
    for (strategy, panel) in &output.forecasts {
        for t in 0..panel.len() {
            for (g, node) in panel.nodes.iter().enumerate() {
                out.write_record([
                    panel.timestamps[t].to_rfc3339(),
                    node.clone(),
                    strategy.name().to_string(),
                    format!("{:.17e}", panel.get(t, g)),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_fleet, SyntheticFleetSpec};
    use chrono::TimeZone;

    fn quick_fleet(seed: u64, days: usize) -> FleetData {
        let mut spec = SyntheticFleetSpec::default_fleet(
            Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            seed,
        );
        spec.households = 24;
        spec.days = days;
        generate_fleet(&spec).unwrap().into()
    }

    fn quick_config(start: DateTime<Utc>, days: usize) -> RunConfig {
        let day = chrono::Duration::days(1);
        RunConfig {
            seed: 5,
            hierarchy: HierarchyMode::TwoLevel,
            clustering: ClusteringConfig {
                method: ClusterMethod::Random,
                k: 3,
            },
            features: FeatureMethod::Ar,
            aggregation: AggregationSettings {
                algorithm: Algorithm::MlPol,
                lambda: 1.0,
                alpha: 2.0,
                delay: 4,
                grid: None,
                per_node_selection: false,
            },
            dates: DateRanges {
                train_start: start,
                train_end: start + day * (days as i32 - 8),
                init_end: start + day * (days as i32 - 6),
                eval_end: start + day * days as i32,
            },
            io: None,
        }
    }

    #[test]
    fn pipeline_runs_and_orders_strategies() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let data = quick_fleet(1, 40);
        let config = quick_config(start, 40);
        let output = run_pipeline(&config, &data).unwrap();
        assert!(output.max_constraint_violation <= 1e-6);
        let get = |s, n| output.report.entry(s, n).unwrap().error;
        // Projection dominates pointwise, so also in average error.
        assert!(
            get(Strategy::Projection, NodeSet::All) <= get(Strategy::Benchmark, NodeSet::All) + 1e-9
        );
        assert!(
            get(Strategy::AggregationProjection, NodeSet::All)
                <= get(Strategy::Aggregation, NodeSet::All) + 1e-9
        );
    }

    #[test]
    fn pipeline_is_deterministic() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let data = quick_fleet(2, 30);
        let config = quick_config(start, 30);
        let a = run_pipeline(&config, &data).unwrap();
        let b = run_pipeline(&config, &data).unwrap();
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
    }

    #[test]
    fn invalid_dates_rejected() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let data = quick_fleet(3, 30);
        let mut config = quick_config(start, 30);
        config.dates.init_end = config.dates.train_end;
        assert!(matches!(
            run_pipeline(&config, &data),
            Err(Error::InvalidDateRange(_))
        ));
    }

    #[test]
    fn stage_tagging_on_failure() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let data = quick_fleet(4, 30);
        let mut config = quick_config(start, 30);
        // Attribute clustering without a table fails inside the cluster
        // stage.
        config.clustering.method = ClusterMethod::Attribute {
            column: "region".into(),
        };
        match run_pipeline(&config, &data) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "cluster"),
            other => panic!("expected stage-tagged error, got {other:?}"),
        }
    }

    #[test]
    fn run_config_json_round_trip() {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let config = quick_config(start, 30);
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.digest(), config.digest());
    }
}
