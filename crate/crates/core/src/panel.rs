//! Time-indexed panels of per-node values.

use chrono::{DateTime, Duration, Utc};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-hour step used throughout: timestamps advance by 30 minutes.
pub const STEPS_PER_DAY: usize = 48;

pub fn half_hour() -> Duration {
    Duration::minutes(30)
}

/// A dense time-by-node matrix with aligned node order.
///
/// Rows are instants, columns follow `nodes`. Observations, features and
/// forecasts all travel in this shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelFrame {
    pub nodes: Vec<String>,
    pub timestamps: Vec<DateTime<Utc>>,
    /// Row-major `len x nodes.len()` values.
    values: Vec<f64>,
}

impl PanelFrame {
    pub fn zeros(nodes: Vec<String>, timestamps: Vec<DateTime<Utc>>) -> Self {
        let values = vec![0.0; nodes.len() * timestamps.len()];
        PanelFrame {
            nodes,
            timestamps,
            values,
        }
    }

    pub fn from_rows(
        nodes: Vec<String>,
        timestamps: Vec<DateTime<Utc>>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != timestamps.len() {
            return Err(Error::DimensionMismatch {
                expected: timestamps.len(),
                got: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(nodes.len() * timestamps.len());
        for row in &rows {
            if row.len() != nodes.len() {
                return Err(Error::DimensionMismatch {
                    expected: nodes.len(),
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(PanelFrame {
            nodes,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn get(&self, t: usize, node: usize) -> f64 {
        self.values[t * self.nodes.len() + node]
    }

    pub fn set(&mut self, t: usize, node: usize, v: f64) {
        self.values[t * self.nodes.len() + node] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn row_vector(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(t))
    }

    pub fn set_row(&mut self, t: usize, row: &[f64]) {
        let n = self.nodes.len();
        self.values[t * n..(t + 1) * n].copy_from_slice(row);
    }

    /// Column of a single node across all instants.
    pub fn column(&self, node: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.get(t, node)).collect()
    }

    /// Sub-panel over the instant range `[start, end)`.
    pub fn slice_time(&self, start: usize, end: usize) -> PanelFrame {
        let n = self.nodes.len();
        PanelFrame {
            nodes: self.nodes.clone(),
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values[start * n..end * n].to_vec(),
        }
    }

    /// True when `other` shares this panel's node order and timestamps.
    pub fn aligned_with(&self, other: &PanelFrame) -> bool {
        self.nodes == other.nodes && self.timestamps == other.timestamps
    }
}

/// Build a contiguous half-hourly timestamp axis of `len` instants.
pub fn half_hourly_axis(start: DateTime<Utc>, len: usize) -> Vec<DateTime<Utc>> {
    (0..len as i64).map(|i| start + half_hour() * i as i32).collect()
}
