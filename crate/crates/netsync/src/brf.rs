//! Pairwise clock estimation by recursive Bayesian filtering.
//!
//! A child node estimates its clock relative to a designated parent from
//! successive exchange rounds. Each round after the first runs a
//! predict / measurement-update / fuse cycle on the state
//! `[1/skew, offset/skew]` (both relative to the parent's clock):
//!
//! * prediction pushes the previous posterior through the affine map
//!   `A = [[1, 0], [dt, 1]]`, `u = [0, -dt/skew_prev]`, where `dt` is the
//!   parent-clock time elapsed between the rounds' first stamps — the mean
//!   is unchanged while skew uncertainty widens the offset uncertainty;
//! * the measurement update solves the two-row system built from the
//!   difference of forward stamps across rounds and the sum of the four
//!   stamps within the round;
//! * fusion multiplies the two Gaussians in information form.

use nalgebra::{Matrix2, Vector2};

use crate::clock::ClockParams;
use crate::error::{Result, SyncError};
use crate::gaussian::{Gaussian2, ThetaState};
use crate::timestamp::{LinkModel, TimestampRecord};

/// Variance floor (ns^2) substituted when exactly one of the two
/// measurement noise rows would be exactly zero. Both rows zero is the
/// exact-measurement mode and produces a point mass instead.
const MIXED_ZERO_NOISE_FLOOR: f64 = 1e-12;

/// Prediction step: propagates the previous posterior over the
/// parent-clock interval `c_j_t1_k - c_j_t1_km1`.
///
/// The first mean component (the inverse-skew estimate) is unchanged; the
/// input vector cancels the deterministic time evolution of the second
/// component. The covariance is widened to `A Q A' + process_noise`.
pub fn predict(
    prev: &ThetaState,
    c_j_t1_k: f64,
    c_j_t1_km1: f64,
    process_noise: &Matrix2<f64>,
) -> Result<Gaussian2> {
    let dt = c_j_t1_k - c_j_t1_km1;
    if !(dt > 0.0) {
        return Err(SyncError::NonIncreasingStamps(format!(
            "initiator stamps must advance between rounds: {c_j_t1_km1} then {c_j_t1_k}"
        )));
    }
    if prev.0.is_non_informative() {
        return Ok(Gaussian2::non_informative());
    }
    // Inverse-skew estimate read from the state; skew defaults to 1 if the
    // component happens to be uninformed.
    let inv_skew = prev.0.mean_anchored(&Vector2::new(1.0, 0.0))?[0];
    let a = Matrix2::new(1.0, 0.0, dt, 1.0);
    let u = Vector2::new(0.0, -inv_skew * dt);
    prev.0.affine_transform(&a, &u)?.add_covariance(process_noise)
}

/// Measurement update from two consecutive rounds.
///
/// Builds `B theta = r + z` with
/// `B = [[c_i(t2,k) - c_i(t2,k-1), 0], [c_i(t2,k) + c_i(t3,k), -2]]`,
/// `r = [c_j(t1,k) - c_j(t1,k-1), c_j(t1,k) + c_j(t4,k)]` and noise
/// covariance `diag(2 sigma_t^2, sigma_t^2 + sigma_r^2)`, and returns the
/// Gaussian `N(B^-1 r, B^-1 R B^-T)` in information form. Zero noise on
/// both rows yields an exact constraint at `B^-1 r`.
pub fn measurement_update(
    rec_k: &TimestampRecord,
    rec_km1: &TimestampRecord,
    link: &LinkModel,
) -> Result<Gaussian2> {
    let d_c2 = rec_k.c_i_t2 - rec_km1.c_i_t2;
    let scale = rec_k.c_i_t2.abs().max(1.0);
    if d_c2.abs() <= scale * 1e-15 {
        return Err(SyncError::SingularObservation(format!(
            "responder stamps did not advance between rounds ({} then {})",
            rec_km1.c_i_t2, rec_k.c_i_t2
        )));
    }
    let b = Matrix2::new(d_c2, 0.0, rec_k.c_i_t2 + rec_k.c_i_t3, -2.0);
    let r_vec = Vector2::new(
        rec_k.c_j_t1 - rec_km1.c_j_t1,
        rec_k.c_j_t1 + rec_k.c_j_t4,
    );
    let var_diff = 2.0 * link.sigma_t_ns * link.sigma_t_ns;
    let var_sum = link.sigma_t_ns * link.sigma_t_ns + link.sigma_r_ns * link.sigma_r_ns;

    let b_inv = Matrix2::new(
        1.0 / d_c2,
        0.0,
        (rec_k.c_i_t2 + rec_k.c_i_t3) / (2.0 * d_c2),
        -0.5,
    );
    let mean = b_inv * r_vec;

    if var_diff == 0.0 && var_sum == 0.0 {
        return Ok(Gaussian2::constraint(mean));
    }
    let var_diff = if var_diff == 0.0 {
        MIXED_ZERO_NOISE_FLOOR
    } else {
        var_diff
    };
    // precision = B' R^-1 B, info = B' R^-1 r
    let r_inv = Matrix2::new(1.0 / var_diff, 0.0, 0.0, 1.0 / var_sum);
    let precision = b.transpose() * r_inv * b;
    let info = b.transpose() * (r_inv * r_vec);
    Gaussian2::from_information(precision, info)
}

/// Running state of the pairwise filter against one parent.
#[derive(Debug, Clone)]
pub struct BrfState {
    /// Current posterior over the relative `[1/skew, offset/skew]`.
    pub state: ThetaState,
    /// Most recent record, buffered for the next round's difference row.
    pub last_record: Option<TimestampRecord>,
    /// Number of rounds consumed so far.
    pub round: usize,
    /// Optional process noise added at every prediction (zero by default:
    /// skew is assumed constant within a synchronization period).
    pub process_noise: Matrix2<f64>,
}

impl BrfState {
    /// Starts the filter from a prior.
    pub fn new(prior: ThetaState) -> Self {
        BrfState {
            state: prior,
            last_record: None,
            round: 0,
            process_noise: Matrix2::zeros(),
        }
    }

    pub fn with_process_noise(mut self, process_noise: Matrix2<f64>) -> Self {
        self.process_noise = process_noise;
        self
    }

    /// Consumes one exchange record. The first record is only buffered
    /// (the measurement rows need two rounds); every later record runs the
    /// full predict / update / fuse cycle.
    pub fn step(&self, record: TimestampRecord, link: &LinkModel) -> Result<BrfState> {
        let Some(prev_record) = self.last_record else {
            return Ok(BrfState {
                state: self.state.clone(),
                last_record: Some(record),
                round: self.round + 1,
                process_noise: self.process_noise,
            });
        };
        let predicted = predict(
            &self.state,
            record.c_j_t1,
            prev_record.c_j_t1,
            &self.process_noise,
        )?;
        let update = measurement_update(&record, &prev_record, link)?;
        let fused = predicted.product(&update)?;
        Ok(BrfState {
            state: ThetaState(fused),
            last_record: Some(record),
            round: self.round + 1,
            process_noise: self.process_noise,
        })
    }

    /// Relative clock estimate from the current posterior mean:
    /// `skew = 1/mean[0]`, `offset = mean[1]/mean[0]`.
    pub fn estimate(&self) -> Result<ClockParams> {
        self.state.estimate()
    }

    /// Estimate with uninformed directions anchored at `anchor` (the prior
    /// mean), usable before the posterior is fully informed.
    pub fn estimate_anchored(&self, anchor: &Vector2<f64>) -> Result<ClockParams> {
        self.state.estimate_anchored(anchor)
    }
}
