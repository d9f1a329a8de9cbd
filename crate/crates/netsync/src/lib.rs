//! Clock offset and skew estimation over simulated packet networks.
//!
//! The crate simulates two-way time-stamp exchange between drifting clocks
//! and estimates per-node clock offset and skew three ways:
//!
//! * [`brf`] — pairwise recursive Bayesian filtering of a child clock
//!   against a parent, one update per exchange round;
//! * [`gbp`] — network-wide Gaussian belief propagation on the factor
//!   graph built from stacked per-edge observations;
//! * [`hybrid`] — belief propagation on the backhaul mesh combined with
//!   pairwise filtering at edge nodes, composed into absolute estimates.
//!
//! [`scenario`] and [`montecarlo`] generate randomized networks and
//! aggregate estimation error over repeated trials; the `netsync` binary in
//! the companion CLI crate drives them from JSON scenario files.

pub mod brf;
pub mod gbp;
pub mod graph;
pub mod clock;
pub mod error;
pub mod gaussian;
pub mod timestamp;

pub use clock::{compose_estimates, relative_params, ClockParams};
pub use error::{Result, SyncError};
pub use gbp::{build_observation, run_bp, BpOptions, BpRun, ObservationPair};
pub use graph::{Role, SyncGraph, Topology};
pub use gaussian::{theta_vector, Gaussian2, ThetaState};
pub use timestamp::{LinkModel, TimestampRecord};
