//! Two-way time-stamp exchange over a stochastic link.
//!
//! One round follows the PTP pattern: the initiator `j` sends at reference
//! time `t1`, the responder `i` receives at `t2 = t1 + d + T`, replies at
//! `t3` after a turnaround delay, and `j` receives at `t4 = t3 + d + R`.
//! The four stamps are the nodes' local clock readings of those instants.
//! `d` is the deterministic symmetric path delay; `T` and `R` aggregate the
//! random transmit/receive path between the time-stamping point and the
//! medium, drawn zero-mean Gaussian per round.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::ClockParams;
use crate::error::{Result, SyncError};

/// Stochastic model of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// Deterministic propagation-plus-mean-path delay in ns, identical in
    /// both directions.
    pub delay_ns: f64,
    /// Standard deviation (ns) of the forward stamping noise.
    pub sigma_t_ns: f64,
    /// Standard deviation (ns) of the reverse stamping noise.
    pub sigma_r_ns: f64,
}

impl LinkModel {
    pub fn new(delay_ns: f64, sigma_t_ns: f64, sigma_r_ns: f64) -> Result<Self> {
        if !(delay_ns > 0.0) || !delay_ns.is_finite() {
            return Err(SyncError::Config(format!(
                "link delay must be positive, got {delay_ns}"
            )));
        }
        if sigma_t_ns < 0.0 || sigma_r_ns < 0.0 {
            return Err(SyncError::Config(format!(
                "stamping noise must be non-negative, got sigma_t {sigma_t_ns}, sigma_r {sigma_r_ns}"
            )));
        }
        Ok(LinkModel {
            delay_ns,
            sigma_t_ns,
            sigma_r_ns,
        })
    }
}

/// The four local-clock readings collected in one exchange round.
///
/// `c_j_t1`/`c_j_t4` are the initiator's stamps, `c_i_t2`/`c_i_t3` the
/// responder's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampRecord {
    pub round: usize,
    pub c_j_t1: f64,
    pub c_i_t2: f64,
    pub c_i_t3: f64,
    pub c_j_t4: f64,
}

/// The noise actually drawn for one round, kept for diagnostics and
/// residual checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub t: f64,
    pub r: f64,
}

/// Runs one exchange round and also returns the drawn noise.
///
/// `turnaround_ns` is the responder's reply delay measured on its own
/// clock. The returned stamps satisfy the exchange equations exactly for
/// the drawn noise.
pub fn exchange_round_with_noise(
    clock_i: &ClockParams,
    clock_j: &ClockParams,
    link: &LinkModel,
    t1_ref: f64,
    turnaround_ns: f64,
    round: usize,
    rng: &mut impl Rng,
) -> (TimestampRecord, NoiseDraw) {
    let noise_t = draw_noise(link.sigma_t_ns, rng);
    let noise_r = draw_noise(link.sigma_r_ns, rng);

    let t1 = t1_ref;
    let t2 = t1 + link.delay_ns + noise_t;
    let t3 = t2 + turnaround_ns / clock_i.skew;
    let t4 = t3 + link.delay_ns + noise_r;

    let record = TimestampRecord {
        round,
        c_j_t1: clock_j.read(t1),
        c_i_t2: clock_i.read(t2),
        c_i_t3: clock_i.read(t3),
        c_j_t4: clock_j.read(t4),
    };

    // The exchange equations must hold exactly for the drawn noise:
    // (c_i(t2) - theta_i)/gamma_i = (c_j(t1) - theta_j)/gamma_j + d + T
    // (c_i(t3) - theta_i)/gamma_i = (c_j(t4) - theta_j)/gamma_j - d - R
    debug_assert!(
        (clock_i.invert(record.c_i_t2)
            - (clock_j.invert(record.c_j_t1) + link.delay_ns + noise_t))
            .abs()
            < 1e-6
    );
    debug_assert!(
        (clock_i.invert(record.c_i_t3)
            - (clock_j.invert(record.c_j_t4) - link.delay_ns - noise_r))
            .abs()
            < 1e-6
    );

    (record, NoiseDraw { t: noise_t, r: noise_r })
}

/// Runs one exchange round between responder `clock_i` and initiator
/// `clock_j`.
pub fn exchange_round(
    clock_i: &ClockParams,
    clock_j: &ClockParams,
    link: &LinkModel,
    t1_ref: f64,
    turnaround_ns: f64,
    round: usize,
    rng: &mut impl Rng,
) -> TimestampRecord {
    exchange_round_with_noise(clock_i, clock_j, link, t1_ref, turnaround_ns, round, rng).0
}

fn draw_noise(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    }
}

/// Runs `k_rounds` exchange rounds, round `k` starting at reference time
/// `t0 + (k - 1) * delta_ns`. Rounds must not overlap:
/// `delta_ns > turnaround_ns + 2 * delay`.
pub fn run_rounds(
    clock_i: &ClockParams,
    clock_j: &ClockParams,
    link: &LinkModel,
    k_rounds: usize,
    t0: f64,
    delta_ns: f64,
    turnaround_ns: f64,
    rng: &mut impl Rng,
) -> Result<Vec<TimestampRecord>> {
    if k_rounds == 0 {
        return Err(SyncError::Config("at least one round required".into()));
    }
    if turnaround_ns < 0.0 {
        return Err(SyncError::Config(format!(
            "turnaround must be non-negative, got {turnaround_ns}"
        )));
    }
    if delta_ns <= turnaround_ns + 2.0 * link.delay_ns {
        return Err(SyncError::OverlappingRounds {
            delta: delta_ns,
            turnaround: turnaround_ns,
            delay: link.delay_ns,
        });
    }
    Ok((1..=k_rounds)
        .map(|k| {
            let t1_ref = t0 + (k - 1) as f64 * delta_ns;
            exchange_round(clock_i, clock_j, link, t1_ref, turnaround_ns, k, rng)
        })
        .collect())
}
