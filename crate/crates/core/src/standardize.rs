//! Per-node scaling and feature whitening.
//!
//! Online learners across very differently sized nodes share one set of
//! hyper-parameters once the data is standardized: observations are
//! replaced by scaled residuals around the benchmark, and feature
//! vectors are whitened so their empirical Gram over the fit window is
//! the identity. Predictions in standardized space map back exactly,
//! and regrets in the two spaces agree up to the squared scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelFrame;

/// Floor applied to per-node scales so perfectly predicted nodes do not
/// divide by zero.
const SCALE_FLOOR: f64 = 1e-9;

/// Relative eigenvalue threshold below which the feature Gram is
/// treated as singular.
const EIGEN_FLOOR: f64 = 1e-10;

/// Statistics fitted on a historical window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub nodes: Vec<String>,
    /// Per-node scale: the largest absolute residual between observation
    /// and benchmark over the window (floored).
    pub scales: Vec<f64>,
    /// Inverse square root of the normalized feature Gram.
    pub whitener: DMatrix<f64>,
    /// Number of historical instants the fit used.
    pub window_len: usize,
    /// Largest absolute standardized feature or observation seen in the
    /// window; downstream loss bounds derive from it.
    pub empirical_bound: f64,
}

impl StandardizationStats {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, id: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Inverse of the whitener (the square root of the normalized Gram).
    pub fn whitener_inverse(&self) -> DMatrix<f64> {
        self.whitener
            .clone()
            .try_inverse()
            .expect("whitener is positive definite by construction")
    }
}

/// Fit scales and whitener on aligned observation/feature history.
pub fn fit_standardizer(
    history_obs: &PanelFrame,
    history_feat: &PanelFrame,
) -> Result<StandardizationStats> {
    fit_impl(history_obs, history_feat, None)
}

/// Like [`fit_standardizer`], but adds `ridge · λ_max` to the Gram's
/// diagonal before inverting, accepting near-collinear features (as
/// arise when per-node benchmarks of hierarchically constrained series
/// are almost identical linear maps of their inputs).
pub fn fit_standardizer_regularized(
    history_obs: &PanelFrame,
    history_feat: &PanelFrame,
    ridge: f64,
) -> Result<StandardizationStats> {
    fit_impl(history_obs, history_feat, Some(ridge))
}

fn fit_impl(
    history_obs: &PanelFrame,
    history_feat: &PanelFrame,
    ridge: Option<f64>,
) -> Result<StandardizationStats> {
    if !history_obs.aligned_with(history_feat) {
        return Err(Error::MisalignedPanels);
    }
    let n = history_obs.n_nodes();
    let t0 = history_obs.len();
    if t0 < n {
        return Err(Error::WindowTooShort { len: t0, nodes: n });
    }

    let mut scales = vec![0.0f64; n];
    for t in 0..t0 {
        for (g, scale) in scales.iter_mut().enumerate() {
            let r = (history_obs.get(t, g) - history_feat.get(t, g)).abs();
            if r > *scale {
                *scale = r;
            }
        }
    }
    for s in scales.iter_mut() {
        *s = s.max(SCALE_FLOOR);
    }

    let mut gram = DMatrix::zeros(n, n);
    for t in 0..t0 {
        let x = history_feat.row_vector(t);
        gram += &x * x.transpose();
    }
    gram /= t0 as f64;

    let eig = gram.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    // Negated comparison on purpose: a NaN eigenvalue must also bail out.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lambda_max > 0.0) {
        return Err(Error::SingularGram(lambda_min));
    }
    let shift = match ridge {
        Some(r) => r * lambda_max,
        None => {
            if lambda_min < EIGEN_FLOOR * lambda_max {
                return Err(Error::SingularGram(lambda_min));
            }
            0.0
        }
    };
    let inv_sqrt = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&l| (l + shift).powf(-0.5)),
    );
    let whitener = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();

    let mut stats = StandardizationStats {
        nodes: history_obs.nodes.clone(),
        scales,
        whitener,
        window_len: t0,
        empirical_bound: 0.0,
    };
    let mut bound = 0.0f64;
    for t in 0..t0 {
        let (y_std, x_std) = transform(
            &stats,
            history_obs.row(t),
            &history_feat.row_vector(t),
        )?;
        for v in y_std.iter().chain(x_std.iter()) {
            bound = bound.max(v.abs());
        }
    }
    stats.empirical_bound = bound;
    Ok(stats)
}

/// Standardize one instant: residual observations and whitened features.
pub fn transform(
    stats: &StandardizationStats,
    y_t: &[f64],
    x_t: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = stats.n_nodes();
    if y_t.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y_t.len(),
        });
    }
    if x_t.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_t.len(),
        });
    }
    let y_std = DVector::from_iterator(
        n,
        (0..n).map(|g| (y_t[g] - x_t[g]) / stats.scales[g]),
    );
    let x_std = &stats.whitener * x_t;
    Ok((y_std, x_std))
}

/// Map a standardized prediction back to the real scale of one node.
pub fn inverse_transform(
    stats: &StandardizationStats,
    node: &str,
    y_bar: f64,
    x_t_node: f64,
) -> Result<f64> {
    let g = stats.node_index(node)?;
    Ok(stats.scales[g] * y_bar + x_t_node)
}
