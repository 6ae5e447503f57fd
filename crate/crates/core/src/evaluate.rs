//! Error and regret metrics for the forecasting strategies.
//!
//! Four strategies are compared on identical (instant, node) grids:
//! the raw benchmark features, their projection onto the summation
//! constraints, the per-node online aggregation, and the aggregation
//! followed by projection; a bottom-up root forecast serves as a naive
//! baseline. Regrets are measured against the best constant linear
//! map from features to forecasts whose outputs satisfy the
//! constraints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, Projector};
use crate::panel::PanelFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Benchmark,
    Projection,
    Aggregation,
    AggregationProjection,
    BottomUp,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Benchmark => "benchmark",
            Strategy::Projection => "projection",
            Strategy::Aggregation => "aggregation",
            Strategy::AggregationProjection => "aggregation_projection",
            Strategy::BottomUp => "bottom_up",
        }
    }
}

/// Node subsets over which errors are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSet {
    All,
    Leaves,
    Root,
}

impl NodeSet {
    pub fn name(&self) -> &'static str {
        match self {
            NodeSet::All => "all_nodes",
            NodeSet::Leaves => "leaves",
            NodeSet::Root => "root",
        }
    }

    /// Resolve to node indices in the panel order.
    pub fn indices(&self, spec: &HierarchySpec) -> Result<Vec<usize>> {
        match self {
            NodeSet::All => Ok((0..spec.n_nodes()).collect()),
            NodeSet::Root => Ok(vec![0]),
            NodeSet::Leaves => {
                let leaves = spec.leaves();
                if leaves.is_empty() {
                    return Err(Error::NoLeaves);
                }
                leaves
                    .iter()
                    .map(|l| {
                        spec.node_index(l)
                            .ok_or_else(|| Error::UnknownNode(l.clone()))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StrategyErrors {
    /// Sum over the node set of per-node mean squared errors.
    pub error: f64,
    /// Spread of per-(instant, node) squared errors around `error`.
    pub sigma: f64,
    pub t: usize,
}

/// E_T(Λ) = Σ_{γ∈Λ} (1/T) Σ_t ε_t^γ with ε the squared error, and
/// σ_T² = (1/T) Σ_t Σ_{γ∈Λ} (ε_t^γ − E_T(Λ))².
pub fn strategy_errors(
    observations: &PanelFrame,
    forecasts: &PanelFrame,
    nodes: &[usize],
) -> Result<StrategyErrors> {
    if !observations.aligned_with(forecasts) {
        return Err(Error::MisalignedPanels);
    }
    let t_len = observations.len();
    let mut error = 0.0;
    for &g in nodes {
        let mut node_sum = 0.0;
        for t in 0..t_len {
            let e = observations.get(t, g) - forecasts.get(t, g);
            node_sum += e * e;
        }
        error += node_sum / t_len as f64;
    }
    let mut sigma_sq = 0.0;
    for t in 0..t_len {
        for &g in nodes {
            let e = observations.get(t, g) - forecasts.get(t, g);
            let dev = e * e - error;
            sigma_sq += dev * dev;
        }
    }
    sigma_sq /= t_len as f64;
    Ok(StrategyErrors {
        error,
        sigma: sigma_sq.sqrt(),
        t: t_len,
    })
}

/// Best constant linear map C (forecast = C·x) whose image satisfies
/// the constraints, and its cumulative squared loss Σ_t ‖y_t − C x_t‖².
///
/// C = Π · (Σ y_t x_tᵀ)(Σ x_t x_tᵀ)⁻¹ solves the constrained least
/// squares exactly: the unconstrained row-wise solution is projected,
/// and the projected gradient Π(Σ(y − Cx)xᵀ) then vanishes.
pub fn constrained_comparator(
    observations: &PanelFrame,
    features: &PanelFrame,
    projector: &Projector,
) -> Result<(DMatrix<f64>, f64)> {
    if !observations.aligned_with(features) {
        return Err(Error::MisalignedPanels);
    }
    let n = observations.n_nodes();
    let t_len = observations.len();
    let mut gram = DMatrix::zeros(n, n);
    let mut cross = DMatrix::zeros(n, n);
    for t in 0..t_len {
        let x = features.row_vector(t);
        let y = observations.row_vector(t);
        gram += &x * x.transpose();
        cross += &y * x.transpose();
    }
    // Near-collinear features make the Gram rank deficient; fall back
    // to the eigenvalue-truncated pseudo-inverse, which still yields
    // the minimum-norm least-squares map.
    let gram_inv = match gram.clone().try_inverse() {
        Some(inv) => inv,
        None => {
            let eig = gram.clone().symmetric_eigen();
            let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            // Negated comparison on purpose: a NaN eigenvalue must
            // also bail out.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(lambda_max > 0.0) {
                return Err(Error::SingularRunGram);
            }
            let cutoff = lambda_max * 1e-12;
            let inv_diag = DVector::from_iterator(
                n,
                eig.eigenvalues
                    .iter()
                    .map(|&l| if l > cutoff { 1.0 / l } else { 0.0 }),
            );
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose()
        }
    };
    let c = &projector.matrix * cross * gram_inv;
    let mut loss = 0.0;
    for t in 0..t_len {
        let resid = observations.row_vector(t) - &c * features.row_vector(t);
        loss += resid.norm_squared();
    }
    Ok((c, loss))
}

/// Cumulative regret R_t = Σ_{s≤t} ‖y_s − ŷ_s‖² − ‖y_s − C x_s‖².
pub fn regret_trace(
    observations: &PanelFrame,
    forecasts: &PanelFrame,
    features: &PanelFrame,
    comparator: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    if !observations.aligned_with(forecasts) || !observations.aligned_with(features) {
        return Err(Error::MisalignedPanels);
    }
    let mut out = Vec::with_capacity(observations.len());
    let mut cum = 0.0;
    for t in 0..observations.len() {
        let y = observations.row_vector(t);
        let strat = (&y - forecasts.row_vector(t)).norm_squared();
        let comp = (&y - comparator * features.row_vector(t)).norm_squared();
        cum += strat - comp;
        out.push(cum);
    }
    Ok(out)
}

/// Per-node cumulative regret against a fixed weight vector `u`:
/// R_t^γ = Σ_{s≤t} (y_s^γ − ŷ_s^γ)² − (y_s^γ − u·x_s)².
pub fn per_node_regret_trace(
    observations: &PanelFrame,
    forecasts: &PanelFrame,
    features: &PanelFrame,
    node: usize,
    u: &DVector<f64>,
) -> Result<Vec<f64>> {
    if !observations.aligned_with(forecasts) || !observations.aligned_with(features) {
        return Err(Error::MisalignedPanels);
    }
    let mut out = Vec::with_capacity(observations.len());
    let mut cum = 0.0;
    for t in 0..observations.len() {
        let y = observations.get(t, node);
        let strat = (y - forecasts.get(t, node)).powi(2);
        let comp = (y - u.dot(&features.row_vector(t))).powi(2);
        cum += strat - comp;
        out.push(cum);
    }
    Ok(out)
}

/// Root forecast by summation of the leaf features at each instant.
pub fn bottom_up(features: &PanelFrame, spec: &HierarchySpec) -> Result<Vec<f64>> {
    let leaf_idx = NodeSet::Leaves.indices(spec)?;
    Ok((0..features.len())
        .map(|t| leaf_idx.iter().map(|&g| features.get(t, g)).sum())
        .collect())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub strategy: String,
    pub node_set: String,
    pub error: f64,
    /// σ_T/√T, the half-width of the reported error margin.
    pub half_width: f64,
    pub t: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[derive(Default)]
pub struct EvaluationReport {
    pub entries: Vec<ReportEntry>,
    /// Final cumulative regret vs the constrained comparator, per strategy.
    pub regrets: BTreeMap<String, f64>,
    pub hierarchy_hash: String,
    pub config_digest: String,
}

impl EvaluationReport {
    pub fn push(
        &mut self,
        strategy: Strategy,
        node_set: NodeSet,
        errors: &StrategyErrors,
    ) {
        self.entries.push(ReportEntry {
            strategy: strategy.name().to_string(),
            node_set: node_set.name().to_string(),
            error: errors.error,
            half_width: errors.sigma / (errors.t as f64).sqrt(),
            t: errors.t,
        });
    }

    pub fn entry(&self, strategy: Strategy, node_set: NodeSet) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.strategy == strategy.name() && e.node_set == node_set.name())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Error ± half-width grid: one row per node set, one column pair
    /// per strategy.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut strategies: Vec<&str> = self.entries.iter().map(|e| e.strategy.as_str()).collect();
        strategies.dedup();
        let mut header = vec!["node_set".to_string()];
        for s in &strategies {
            header.push(format!("{s}_error"));
            header.push(format!("{s}_half_width"));
        }
        out.write_record(&header)?;
        let mut node_sets: Vec<&str> = self.entries.iter().map(|e| e.node_set.as_str()).collect();
        node_sets.sort_unstable();
        node_sets.dedup();
        for ns in node_sets {
            let mut row = vec![ns.to_string()];
            for s in &strategies {
                match self
                    .entries
                    .iter()
                    .find(|e| e.strategy == *s && e.node_set == ns)
                {
                    Some(e) => {
                        row.push(format!("{:.6}", e.error));
                        row.push(format!("{:.6}", e.half_width));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
