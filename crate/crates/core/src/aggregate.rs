//! Per-node online learners over a shared feature vector.
//!
//! Each node runs its own learner which, at every instant, emits a
//! weight vector over the features (one feature per node) and predicts
//! their weighted combination. Three learners are provided:
//!
//! * sequential non-linear ridge regression (unconstrained weights),
//! * Bernstein online aggregation (BOA) with the gradient trick
//!   (simplex weights),
//! * the polynomially weighted average forecaster with multiple
//!   learning rates (ML-Pol) with the gradient trick (simplex weights).
//!
//! The simplex learners extend to an L1 ball of radius `alpha` by
//! running them on lifted features `(αx | −αx)` and mapping the simplex
//! weights back through the surjection ψ. A delayed-feedback wrapper
//! handles observations arriving a fixed number of steps late, and an
//! online selector picks a hyper-parameter from a finite grid by past
//! average error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Steps between full re-inversions of the ridge Gram matrix; in
/// between, the inverse is maintained by rank-1 updates.
const REINVERT_EVERY: u64 = 1024;

/// Tolerance for simplex / L1-ball membership checks.
const SET_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NlRidge,
    Boa,
    MlPol,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub algorithm: Algorithm,
    /// Ridge regularizer.
    pub lambda: f64,
    /// L1-ball radius for the lifted simplex learners.
    pub alpha: f64,
    /// Bound on pseudo prediction errors.
    pub loss_bound_e: f64,
    /// Steps of observation delay.
    pub delay: usize,
}

impl AggregatorConfig {
    pub fn validate(&self) -> Result<()> {
        match self.algorithm {
            Algorithm::NlRidge => {
                if self.lambda <= 0.0 {
                    return Err(Error::NonPositiveLambda(self.lambda));
                }
            }
            Algorithm::Boa | Algorithm::MlPol => {
                if self.loss_bound_e <= 0.0 {
                    return Err(Error::NonPositiveE(self.loss_bound_e));
                }
                if self.alpha <= 0.0 {
                    return Err(Error::L1RadiusExceeded {
                        norm: 0.0,
                        radius: self.alpha,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Bound on lifted pseudo prediction errors: 2α(α+1)C².
pub fn lifted_loss_bound(alpha: f64, c: f64) -> f64 {
    2.0 * alpha * (alpha + 1.0) * c * c
}

// ---------------------------------------------------------------------------
// Sequential non-linear ridge regression
// ---------------------------------------------------------------------------

/// State of the sequential ridge learner.
///
/// `gram` is `λI + Σ_{s≤t} x_s x_sᵀ` over the steps observed so far and
/// `bvec` is `Σ_{s≤t} y_s x_s`. The weight used at step `t+1` with
/// feature `x` is `(gram + x xᵀ)⁻¹ bvec`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeState {
    pub lambda: f64,
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    pub bvec: DVector<f64>,
    pub t: u64,
}

impl RidgeState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::NonPositiveLambda(lambda));
        }
        Ok(RidgeState {
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            bvec: DVector::zeros(dim),
            t: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.bvec.len()
    }

    /// Inverse of `gram + x xᵀ` by the Sherman–Morrison identity.
    fn inv_with(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let ax = &self.gram_inv * x;
        let denom = 1.0 + x.dot(&ax);
        &self.gram_inv - (&ax * ax.transpose()) / denom
    }

    /// Weights that would be used to predict on `x`, without mutating.
    pub fn peek_weights(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inv_with(x) * &self.bvec
    }

    /// Predict on `x`, then fold in the observation `y`.
    pub fn step(&mut self, x: &DVector<f64>, y: f64) -> f64 {
        let inv = self.inv_with(x);
        let u = &inv * &self.bvec;
        let pred = u.dot(x);
        self.gram += x * x.transpose();
        self.gram_inv = inv;
        self.bvec += y * x;
        self.t += 1;
        if self.t.is_multiple_of(REINVERT_EVERY) {
            // Refresh the maintained inverse to bound rank-1 drift.
            if let Some(fresh) = self.gram.clone().try_inverse() {
                self.gram_inv = fresh;
            }
        }
        pred
    }
}

// ---------------------------------------------------------------------------
// Simplex learners: BOA and ML-Pol with the gradient trick
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimplexKind {
    Boa,
    MlPol,
}

/// Shared state for the two simplex learners.
///
/// `cum` holds the regularized cumulative quantity Q̃ for BOA and the
/// cumulative pseudo-regret R̃ for ML-Pol; `cum_sq` holds Σ r̃² per
/// feature and `eta` the per-feature learning rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexLearner {
    pub kind: SimplexKind,
    pub loss_bound_e: f64,
    pub cum: DVector<f64>,
    pub cum_sq: DVector<f64>,
    pub eta: DVector<f64>,
    pub weights: DVector<f64>,
    pub t: u64,
}

impl SimplexLearner {
    pub fn new(dim: usize, kind: SimplexKind, loss_bound_e: f64) -> Result<Self> {
        if loss_bound_e <= 0.0 {
            return Err(Error::NonPositiveE(loss_bound_e));
        }
        Ok(SimplexLearner {
            kind,
            loss_bound_e,
            cum: DVector::zeros(dim),
            cum_sq: DVector::zeros(dim),
            eta: DVector::zeros(dim),
            weights: DVector::from_element(dim, 1.0 / dim as f64),
            t: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Current simplex weights (independent of the incoming feature).
    pub fn peek_weights(&self) -> DVector<f64> {
        self.weights.clone()
    }

    /// Predict on `x` with the current weights, then update them with
    /// the pseudo prediction errors derived from `y`.
    pub fn step(&mut self, x: &DVector<f64>, y: f64) -> f64 {
        let d = self.dim();
        let pred = self.weights.dot(x);
        let r: DVector<f64> =
            DVector::from_iterator(d, x.iter().map(|&xi| 2.0 * (pred - y) * (pred - xi)));
        match self.kind {
            SimplexKind::Boa => {
                // Q̃ uses the learning rate from the previous step.
                for i in 0..d {
                    self.cum[i] += r[i] * (1.0 + self.eta[i] * r[i]);
                    self.cum_sq[i] += r[i] * r[i];
                }
                let half = 1.0 / (2.0 * self.loss_bound_e);
                let ln_d = (d as f64).ln();
                for i in 0..d {
                    self.eta[i] = if self.cum_sq[i] > 0.0 {
                        half.min((ln_d / self.cum_sq[i]).sqrt())
                    } else {
                        half
                    };
                }
                // Max-shift in the exponent keeps the normalization finite.
                let shift = (0..d)
                    .map(|i| self.eta[i] * self.cum[i])
                    .fold(f64::MIN, f64::max);
                let mut w =
                    DVector::from_iterator(d, (0..d).map(|i| (self.eta[i] * self.cum[i] - shift).exp()));
                w /= w.sum();
                self.weights = w;
            }
            SimplexKind::MlPol => {
                for i in 0..d {
                    self.cum[i] += r[i];
                    self.cum_sq[i] += r[i] * r[i];
                    self.eta[i] = 1.0 / (self.loss_bound_e + self.cum_sq[i]);
                }
                let scores: DVector<f64> =
                    DVector::from_iterator(d, (0..d).map(|i| self.eta[i] * self.cum[i].max(0.0)));
                let total = scores.sum();
                self.weights = if total > 0.0 {
                    scores / total
                } else {
                    // All truncated regrets zero: fall back to uniform.
                    DVector::from_element(d, 1.0 / d as f64)
                };
            }
        }
        self.t += 1;
        pred
    }
}

// ---------------------------------------------------------------------------
// L1-ball lift
// ---------------------------------------------------------------------------

/// Map simplex weights over lifted features back to the L1 ball:
/// ψ(ū) = α(ū⁺ − ū⁻).
pub fn psi(u_bar: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    let d2 = u_bar.len();
    let d = d2 / 2;
    if !d2.is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            got: d2,
        });
    }
    let sum: f64 = u_bar.sum();
    if u_bar.iter().any(|&v| v < -SET_TOL) || (sum - 1.0).abs() > SET_TOL {
        return Err(Error::NotInSimplex);
    }
    Ok(DVector::from_iterator(
        d,
        (0..d).map(|i| alpha * (u_bar[i] - u_bar[d + i])),
    ))
}

/// Section of ψ: any vector with ‖u‖₁ ≤ α gets a simplex preimage.
pub fn psi_inverse(u: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    let d = u.len();
    let norm1: f64 = u.iter().map(|v| v.abs()).sum();
    if norm1 > alpha + SET_TOL {
        return Err(Error::L1RadiusExceeded {
            norm: norm1,
            radius: alpha,
        });
    }
    let slack = (alpha - norm1).max(0.0) / (2.0 * d as f64);
    let mut out = DVector::zeros(2 * d);
    for i in 0..d {
        out[i] = (slack + u[i].max(0.0)) / alpha;
        out[d + i] = (slack + (-u[i]).max(0.0)) / alpha;
    }
    Ok(out)
}

/// Concatenate `(αx | −αx)`.
pub fn lift_features(x: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let d = x.len();
    DVector::from_iterator(
        2 * d,
        x.iter().map(|&v| alpha * v).chain(x.iter().map(|&v| -alpha * v)),
    )
}

/// A simplex learner run on lifted features, reporting weights in the
/// L1 ball of radius `alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1LiftedLearner {
    pub alpha: f64,
    pub inner: SimplexLearner,
}

impl L1LiftedLearner {
    pub fn new(dim: usize, kind: SimplexKind, alpha: f64, loss_bound_e: f64) -> Result<Self> {
        Ok(L1LiftedLearner {
            alpha,
            inner: SimplexLearner::new(2 * dim, kind, loss_bound_e)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim() / 2
    }

    pub fn peek_weights(&self) -> DVector<f64> {
        psi(&self.inner.weights, self.alpha).expect("inner weights stay in the simplex")
    }

    pub fn step(&mut self, x: &DVector<f64>, y: f64) -> f64 {
        let lifted = lift_features(x, self.alpha);
        self.inner.step(&lifted, y)
    }
}

// ---------------------------------------------------------------------------
// Unified learner and delayed-feedback wrapper
// ---------------------------------------------------------------------------

/// Any of the per-node learners, behind one interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Learner {
    Ridge(RidgeState),
    Simplex(SimplexLearner),
    Lifted(L1LiftedLearner),
}

impl Learner {
    /// Build from a validated configuration; `dim` is the number of
    /// features and `c` the empirical bound used to derive E when the
    /// configured bound is absent (≤ 0 means derive).
    pub fn from_config(config: &AggregatorConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(match config.algorithm {
            Algorithm::NlRidge => Learner::Ridge(RidgeState::new(dim, config.lambda)?),
            Algorithm::Boa => Learner::Lifted(L1LiftedLearner::new(
                dim,
                SimplexKind::Boa,
                config.alpha,
                config.loss_bound_e,
            )?),
            Algorithm::MlPol => Learner::Lifted(L1LiftedLearner::new(
                dim,
                SimplexKind::MlPol,
                config.alpha,
                config.loss_bound_e,
            )?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Learner::Ridge(s) => s.dim(),
            Learner::Simplex(s) => s.dim(),
            Learner::Lifted(s) => s.dim(),
        }
    }

    /// Weights this learner would use to predict on `x` right now.
    pub fn peek_weights(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Learner::Ridge(s) => s.peek_weights(x),
            Learner::Simplex(s) => s.peek_weights(),
            Learner::Lifted(s) => s.peek_weights(),
        }
    }

    pub fn step(&mut self, x: &DVector<f64>, y: f64) -> f64 {
        match self {
            Learner::Ridge(s) => s.step(x, y),
            Learner::Simplex(s) => s.step(x, y),
            Learner::Lifted(s) => s.step(x, y),
        }
    }
}

/// Wrapper for observation streams arriving `delay` steps late.
///
/// At instant `t` the caller asks for weights (computed from all
/// observations delivered so far, i.e. those up to `t − delay`),
/// registers the instant's feature vector, and later delivers the
/// matching observation. Each delivered observation is paired with the
/// oldest pending feature vector. With `delay = 0` the sequence
/// predict / register / deliver reproduces the undelayed learner
/// exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayedAggregator {
    pub inner: Learner,
    pub delay: usize,
    pending: VecDeque<DVector<f64>>,
}

impl DelayedAggregator {
    pub fn new(inner: Learner, delay: usize) -> Self {
        DelayedAggregator {
            inner,
            delay,
            pending: VecDeque::new(),
        }
    }

    /// Weights used to predict at the current instant.
    pub fn predict_weights(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.peek_weights(x)
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.predict_weights(x).dot(x)
    }

    /// Register the feature vector of the current instant.
    pub fn submit_feature(&mut self, x: DVector<f64>) {
        self.pending.push_back(x);
    }

    /// Deliver the observation matching the oldest registered feature.
    pub fn submit_observation(&mut self, y: f64) -> Result<()> {
        let x = self
            .pending
            .pop_front()
            .ok_or(Error::OutOfOrderObservation)?;
        self.inner.step(&x, y);
        Ok(())
    }

    /// Number of features awaiting their observation.
    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

// ---------------------------------------------------------------------------
// Online hyper-parameter selection on a finite grid
// ---------------------------------------------------------------------------

/// Default hyper-parameter grid {4^i : i = −5..5}.
pub fn default_grid() -> Vec<f64> {
    (-5..=5).map(|i| 4f64.powi(i)).collect()
}

/// Median of the grid, used before any feedback is available.
pub fn grid_median(grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Pick the grid value minimizing cumulative past error; before step 49
/// the grid median is used, and ties break to the smallest value.
///
/// `cum_errors[i]` must hold the cumulative (equivalently average, the
/// normalization being shared) squared error of the bank run with
/// `grid[i]` over all steps whose observations have arrived.
pub fn online_grid_select(grid: &[f64], t: usize, cum_errors: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if cum_errors.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: cum_errors.len(),
        });
    }
    if t <= 48 {
        return grid_median(grid);
    }
    let mut best = 0usize;
    for i in 1..grid.len() {
        let better = cum_errors[i] < cum_errors[best]
            || (cum_errors[i] == cum_errors[best] && grid[i] < grid[best]);
        if better {
            best = i;
        }
    }
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn vecd(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn ridge_first_prediction_is_zero() {
        let mut s = RidgeState::new(3, 1.0).unwrap();
        let x = vecd(&[1.0, -2.0, 0.5]);
        assert_eq!(s.peek_weights(&x).amax(), 0.0);
        assert_eq!(s.step(&x, 1.0), 0.0);
    }

    #[test]
    fn ridge_one_dim_hand_trace() {
        // λ=1, x₁=1, y₁=1, x₂=1: A₂=3, b₁=1, u₂=1/3.
        let mut s = RidgeState::new(1, 1.0).unwrap();
        let x = vecd(&[1.0]);
        s.step(&x, 1.0);
        let u2 = s.peek_weights(&x);
        assert!((u2[0] - 1.0 / 3.0).abs() < 1e-12);
        let pred = s.step(&x, 0.0);
        assert!((pred - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_matches_batch_closed_form() {
        let mut rng = StdRng::seed_from_u64(42);
        let dim = 4;
        let lambda = 0.7;
        let mut s = RidgeState::new(dim, lambda).unwrap();
        let mut xs: Vec<DVector<f64>> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for t in 0..300 {
            let x = DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-1.0..1.0)));
            let y: f64 = rng.gen_range(-1.0..1.0);
            // Batch: u_t = (λI + Σ_{s≤t} x_s x_sᵀ)⁻¹ Σ_{s<t} y_s x_s.
            let mut a = DMatrix::identity(dim, dim) * lambda;
            for xv in xs.iter() {
                a += xv * xv.transpose();
            }
            a += &x * x.transpose();
            let mut b = DVector::zeros(dim);
            for (xv, &yv) in xs.iter().zip(ys.iter()) {
                b += yv * xv;
            }
            let batch_u = a.try_inverse().unwrap() * b;
            let seq_u = s.peek_weights(&x);
            if t % 37 == 0 {
                assert!((&batch_u - &seq_u).amax() < 1e-8, "step {t}");
            }
            s.step(&x, y);
            xs.push(x);
            ys.push(y);
        }
    }

    #[test]
    fn simplex_learners_start_uniform_and_stay_in_simplex() {
        for kind in [SimplexKind::Boa, SimplexKind::MlPol] {
            let mut s = SimplexLearner::new(4, kind, 1.0).unwrap();
            assert!(s.peek_weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
            let mut rng = StdRng::seed_from_u64(3);
            for _ in 0..200 {
                let x = DVector::from_iterator(4, (0..4).map(|_| rng.gen_range(-1.0..1.0)));
                s.step(&x, rng.gen_range(-1.0..1.0));
                let w = s.peek_weights();
                assert!(w.iter().all(|&v| v >= 0.0));
                assert!((w.sum() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_features_keep_uniform_weights() {
        for kind in [SimplexKind::Boa, SimplexKind::MlPol] {
            let mut s = SimplexLearner::new(3, kind, 1.0).unwrap();
            for t in 0..50 {
                let x = vecd(&[0.8, 0.8, 0.8]);
                s.step(&x, (t as f64 * 0.7).sin());
                let w = s.peek_weights();
                assert!(w.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn boa_concentrates_on_the_exact_feature() {
        let mut s = SimplexLearner::new(2, SimplexKind::Boa, 4.0).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..2000 {
            let y: f64 = rng.gen_range(-1.0..1.0);
            let x = vecd(&[y, 0.9]);
            s.step(&x, y);
        }
        assert!(s.peek_weights()[0] >= 0.99);
    }

    #[test]
    fn mlpol_concentrates_on_the_exact_feature() {
        let mut s = SimplexLearner::new(2, SimplexKind::MlPol, 4.0).unwrap();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..300 {
            let y: f64 = rng.gen_range(-1.0..1.0);
            let x = vecd(&[y, 0.9]);
            s.step(&x, y);
        }
        assert!(s.peek_weights()[0] >= 0.95);
    }

    #[test]
    fn psi_examples() {
        // ψ⁻¹(0) with α=1, two features, spreads mass uniformly.
        let z = psi_inverse(&vecd(&[0.0, 0.0]), 1.0).unwrap();
        assert!(z.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // ψ(e₁) with α=2 lands on (2, 0).
        let u = psi(&vecd(&[1.0, 0.0, 0.0, 0.0]), 2.0).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-15 && u[1].abs() < 1e-15);
    }

    #[test]
    fn psi_round_trip_on_random_ball_vectors() {
        let mut rng = StdRng::seed_from_u64(9);
        let alpha = 1.5;
        for _ in 0..1000 {
            let mut u = DVector::from_iterator(3, (0..3).map(|_| rng.gen_range(-1.0..1.0f64)));
            let norm: f64 = u.iter().map(|v| v.abs()).sum();
            if norm > alpha {
                u *= alpha / norm * rng.gen_range(0.0..1.0);
            }
            let bar = psi_inverse(&u, alpha).unwrap();
            assert!(bar.iter().all(|&v| v >= 0.0));
            assert!((bar.sum() - 1.0).abs() < 1e-12);
            let back = psi(&bar, alpha).unwrap();
            assert!((&back - &u).amax() < 1e-12);
        }
    }

    #[test]
    fn psi_rejects_out_of_set_inputs() {
        assert!(matches!(
            psi(&vecd(&[0.9, 0.3, 0.0, 0.0]), 1.0),
            Err(Error::NotInSimplex)
        ));
        assert!(matches!(
            psi_inverse(&vecd(&[2.0, 2.0]), 1.0),
            Err(Error::L1RadiusExceeded { .. })
        ));
    }

    #[test]
    fn lifted_scalar_product_identity() {
        let mut rng = StdRng::seed_from_u64(10);
        let alpha = 2.0;
        for _ in 0..100 {
            // Random simplex vector over the lifted space.
            let mut bar = DVector::from_iterator(6, (0..6).map(|_| rng.gen_range(0.0f64..1.0)));
            bar /= bar.sum();
            let x = DVector::from_iterator(3, (0..3).map(|_| rng.gen_range(-1.0..1.0)));
            let lifted = lift_features(&x, alpha);
            let lhs = bar.dot(&lifted);
            let rhs = psi(&bar, alpha).unwrap().dot(&x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn lifted_learner_stays_in_the_ball() {
        let alpha = 1.2;
        let mut s = L1LiftedLearner::new(3, SimplexKind::MlPol, alpha, 4.0).unwrap();
        // At uniform inner weights the ball weights vanish.
        assert!(s.peek_weights().amax() < 1e-15);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = DVector::from_iterator(3, (0..3).map(|_| rng.gen_range(-1.0..1.0)));
            s.step(&x, rng.gen_range(-1.0..1.0));
            let norm: f64 = s.peek_weights().iter().map(|v| v.abs()).sum();
            assert!(norm <= alpha + 1e-10);
        }
    }

    #[test]
    fn gradient_trick_inequality() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..500 {
            let x = DVector::from_iterator(3, (0..3).map(|_| rng.gen_range(-1.0..1.0)));
            let mut u = DVector::from_iterator(3, (0..3).map(|_| rng.gen_range(0.0f64..1.0)));
            u /= u.sum();
            let y: f64 = rng.gen_range(-1.0..1.0);
            let pred: f64 = rng.gen_range(-1.0..1.0);
            let lhs = (y - pred).powi(2) - (y - u.dot(&x)).powi(2);
            let rhs = 2.0 * (pred - y) * (pred - u.dot(&x));
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn delayed_wrapper_zero_delay_matches_inner() {
        let mut rng = StdRng::seed_from_u64(13);
        let mut plain = RidgeState::new(2, 1.0).unwrap();
        let mut wrapped =
            DelayedAggregator::new(Learner::Ridge(RidgeState::new(2, 1.0).unwrap()), 0);
        for _ in 0..100 {
            let x = DVector::from_iterator(2, (0..2).map(|_| rng.gen_range(-1.0..1.0)));
            let y: f64 = rng.gen_range(-1.0..1.0);
            let wrapped_pred = wrapped.predict(&x);
            wrapped.submit_feature(x.clone());
            wrapped.submit_observation(y).unwrap();
            let plain_pred = plain.step(&x, y);
            assert_eq!(wrapped_pred.to_bits(), plain_pred.to_bits());
        }
    }

    #[test]
    fn delayed_wrapper_uses_only_delivered_observations() {
        // Delay 1, three steps: the prediction at the second step is
        // built from (x₁, y₁) only.
        let mut w = DelayedAggregator::new(Learner::Ridge(RidgeState::new(1, 1.0).unwrap()), 1);
        let x1 = vecd(&[1.0]);
        let x2 = vecd(&[1.0]);
        assert_eq!(w.predict(&x1), 0.0);
        w.submit_feature(x1);
        // Before y₁ arrives nothing is learned.
        w.submit_observation(1.0).unwrap(); // y₁ delivered at step 2
        let pred2 = w.predict(&x2);
        assert!((pred2 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn delayed_wrapper_rejects_spurious_observation() {
        let mut w = DelayedAggregator::new(Learner::Ridge(RidgeState::new(1, 1.0).unwrap()), 1);
        assert!(matches!(
            w.submit_observation(1.0),
            Err(Error::OutOfOrderObservation)
        ));
    }

    #[test]
    fn default_grid_has_eleven_values() {
        let g = default_grid();
        assert_eq!(g.len(), 11);
        assert!((g[0] - 4f64.powi(-5)).abs() < 1e-15);
        assert!((g[10] - 4f64.powi(5)).abs() < 1e-9);
        assert_eq!(grid_median(&g).unwrap(), 1.0);
    }

    #[test]
    fn grid_select_prefers_lowest_error_then_smallest_value() {
        let grid = [0.5, 2.0];
        assert_eq!(online_grid_select(&grid, 100, &[10.0, 9.5]).unwrap(), 2.0);
        assert_eq!(online_grid_select(&grid, 100, &[0.0, 9.5]).unwrap(), 0.5);
        assert_eq!(online_grid_select(&grid, 100, &[3.0, 3.0]).unwrap(), 0.5);
        // Warm-up: median regardless of errors.
        assert_eq!(online_grid_select(&grid, 10, &[10.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(
            online_grid_select(&[], 100, &[]),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn config_validation() {
        let bad = AggregatorConfig {
            algorithm: Algorithm::NlRidge,
            lambda: 0.0,
            alpha: 1.0,
            loss_bound_e: 1.0,
            delay: 0,
        };
        assert!(matches!(bad.validate(), Err(Error::NonPositiveLambda(_))));
        let bad_e = AggregatorConfig {
            algorithm: Algorithm::Boa,
            lambda: 1.0,
            alpha: 1.0,
            loss_bound_e: 0.0,
            delay: 0,
        };
        assert!(matches!(bad_e.validate(), Err(Error::NonPositiveE(_))));
    }

    #[test]
    fn learner_state_json_round_trip() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.step(&vecd(&[1.0, 0.5]), 0.3);
        let learner = Learner::Ridge(s);
        let json = serde_json::to_string(&learner).unwrap();
        let back: Learner = serde_json::from_str(&json).unwrap();
        let x = vecd(&[0.2, -0.4]);
        assert_eq!(
            learner.peek_weights(&x)[0].to_bits(),
            back.peek_weights(&x)[0].to_bits()
        );
    }
}
