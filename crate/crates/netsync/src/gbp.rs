//! Network-wide clock estimation by Gaussian belief propagation.
//!
//! Every edge's K exchange rounds are stacked into a pairwise linear
//! observation `A_ji x_i + A_ij x_j = z`, `z ~ N(0, sigma2 I_K)`, over the
//! two nodes' `[1/skew, offset/skew]` states (row k of `A_ji` is
//! `[c_i(t2,k) + c_i(t3,k), -2]`, of `A_ij` is `-[c_j(t1,k) + c_j(t4,k), -2]`).
//! Messages flow synchronously: in each iteration every node recomputes its
//! outgoing messages from the previous iteration's incoming ones, then
//! updates its belief as prior precision plus incoming message precisions.
//!
//! The message from `j` to `i` has covariance
//! `[A_ji' Omega^-1 A_ji]^-1` with
//! `Omega = sigma2 I_K + A_ij Lambda^-1 A_ij'`, where `Lambda` is the
//! precision of `j`'s prior combined with its other incoming messages.
//! When `Lambda` is singular (always the case in the first iteration under
//! an unbounded offset prior), the algebraically identical marginalization
//! form `J_ii - J_ij (J_jj + Lambda)^-1 J_ji` is used, which is the exact
//! limit of the `Omega` form.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::clock::ClockParams;
use crate::error::{Result, SyncError};
use crate::gaussian::{estimate_from_mean, invert_spd, Gaussian2, FLAT_PRECISION_TOL};
use crate::graph::{Role, SyncGraph};
use crate::timestamp::{LinkModel, TimestampRecord};

/// Noise floor (ns^2) substituted for an exactly noiseless link: the factor
/// weight is 1/sigma2, so zero variance would make the stacked observation
/// an exact constraint the Gaussian factor cannot represent. The floor
/// keeps noiseless runs accurate to ~1e-4 ns.
pub const NOISELESS_SIGMA2_FLOOR: f64 = 1e-8;

/// Stacked K-round observation of one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPair {
    /// K x 2 coefficients of the responder's state; row k is
    /// `[c_i(t2,k) + c_i(t3,k), -2]`.
    pub a_ji: DMatrix<f64>,
    /// K x 2 coefficients of the initiator's state; row k is
    /// `[-(c_j(t1,k) + c_j(t4,k)), 2]`.
    pub a_ij: DMatrix<f64>,
    /// Per-row noise variance `sigma_t^2 + sigma_r^2` (ns^2).
    pub sigma2: f64,
}

/// Builds the stacked observation from one edge's exchange records.
/// At least two rounds are required for the two-parameter model to be
/// well posed under weak priors.
pub fn build_observation(
    records: &[TimestampRecord],
    link: &LinkModel,
) -> Result<ObservationPair> {
    if records.len() < 2 {
        return Err(SyncError::Config(format!(
            "observation needs at least 2 rounds, got {}",
            records.len()
        )));
    }
    let k = records.len();
    let mut a_ji = DMatrix::zeros(k, 2);
    let mut a_ij = DMatrix::zeros(k, 2);
    for (row, rec) in records.iter().enumerate() {
        a_ji[(row, 0)] = rec.c_i_t2 + rec.c_i_t3;
        a_ji[(row, 1)] = -2.0;
        a_ij[(row, 0)] = -(rec.c_j_t1 + rec.c_j_t4);
        a_ij[(row, 1)] = 2.0;
    }
    let sigma2 = link.sigma_t_ns * link.sigma_t_ns + link.sigma_r_ns * link.sigma_r_ns;
    Ok(ObservationPair {
        a_ji,
        a_ij,
        sigma2: if sigma2 > 0.0 {
            sigma2
        } else {
            NOISELESS_SIGMA2_FLOOR
        },
    })
}

/// 2x2 normal-equation blocks of one factor: `J_xy = A_x' A_y / sigma2`.
fn normal_block(a_x: &DMatrix<f64>, a_y: &DMatrix<f64>, sigma2: f64) -> Matrix2<f64> {
    let m = a_x.transpose() * a_y / sigma2;
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Computes the message sent over one factor towards the node whose
/// coefficients are `a_dest`. `source` is the sender's pseudo-belief: its
/// prior combined with the incoming messages from all neighbors except the
/// destination.
pub fn compute_message(
    a_dest: &DMatrix<f64>,
    a_src: &DMatrix<f64>,
    sigma2: f64,
    source: &Gaussian2,
) -> Result<Gaussian2> {
    let k = a_dest.nrows();
    match source {
        // Exact sender (master node): Omega = sigma2 I, and the sender's
        // state is pinned at its mean.
        Gaussian2::Constraint { mean } => {
            let precision = crate::gaussian::symmetrize(&normal_block(a_dest, a_dest, sigma2));
            check_full_rank(&precision)?;
            let info = -(normal_block(a_dest, a_src, sigma2) * mean);
            Gaussian2::from_information(precision, info)
        }
        Gaussian2::Info {
            precision: lambda,
            info: eta,
        } => {
            let s = crate::gaussian::spectrum_lambda_min(lambda);
            if s > FLAT_PRECISION_TOL {
                // Dense Omega route, as written: Omega = sigma2 I + A Lambda^-1 A'.
                let cov = invert_spd(lambda).ok_or(SyncError::SingularMessage)?;
                let nu = cov * eta;
                let cov_d = DMatrix::from_iterator(2, 2, cov.iter().copied());
                let mut omega = a_src * cov_d * a_src.transpose();
                for i in 0..k {
                    omega[(i, i)] += sigma2;
                }
                let chol = omega
                    .cholesky()
                    .ok_or(SyncError::SingularMessage)?;
                let x = chol.solve(a_dest);
                let precision_d = a_dest.transpose() * x;
                let precision = Matrix2::new(
                    precision_d[(0, 0)],
                    0.5 * (precision_d[(0, 1)] + precision_d[(1, 0)]),
                    0.5 * (precision_d[(0, 1)] + precision_d[(1, 0)]),
                    precision_d[(1, 1)],
                );
                check_full_rank(&precision)?;
                let src_nu = a_src * DVector::from_column_slice(&[nu[0], nu[1]]);
                let y = chol.solve(&src_nu);
                let info_d = -(a_dest.transpose() * y);
                Gaussian2::from_information(precision, Vector2::new(info_d[0], info_d[1]))
            } else {
                // Marginalization (Schur) route: the exact limit of the
                // Omega form for a singular Lambda.
                let j_dd = normal_block(a_dest, a_dest, sigma2);
                check_full_rank(&j_dd)?;
                let j_ds = normal_block(a_dest, a_src, sigma2);
                let j_ss = normal_block(a_src, a_src, sigma2);
                let m = j_ss + lambda;
                let m_inv = invert_spd(&m).ok_or(SyncError::SingularMessage)?;
                let precision =
                    crate::gaussian::symmetrize(&(j_dd - j_ds * m_inv * j_ds.transpose()));
                let info = -(j_ds * (m_inv * eta));
                Gaussian2::from_information(precision, info)
            }
        }
    }
}

fn check_full_rank(precision: &Matrix2<f64>) -> Result<()> {
    if crate::gaussian::spectrum_lambda_min(precision) <= 0.0 {
        return Err(SyncError::SingularMessage);
    }
    Ok(())
}

/// A node's marginal belief at one iteration.
#[derive(Debug, Clone)]
pub struct NodeBelief {
    pub node: usize,
    pub iteration: usize,
    pub gaussian: Gaussian2,
}

/// Belief update: prior precision plus incoming message precisions, summed
/// in a fixed order (prior first, then messages in the caller's order) so
/// repeated runs are bit-identical. An exact prior dominates.
pub fn update_belief(
    node: usize,
    iteration: usize,
    prior: &Gaussian2,
    incoming: &[Gaussian2],
) -> NodeBelief {
    let gaussian = match prior {
        Gaussian2::Constraint { mean } => Gaussian2::constraint(*mean),
        Gaussian2::Info { precision, info } => {
            let mut p = *precision;
            let mut eta = *info;
            for msg in incoming {
                match msg {
                    Gaussian2::Info { precision, info } => {
                        p += precision;
                        eta += info;
                    }
                    Gaussian2::Constraint { mean } => {
                        // Messages over noisy factors are never exact;
                        // tolerate it defensively by pinning the belief.
                        debug_assert!(false, "constraint message in belief update");
                        return NodeBelief {
                            node,
                            iteration,
                            gaussian: Gaussian2::constraint(*mean),
                        };
                    }
                }
            }
            Gaussian2::Info {
                precision: p,
                info: eta,
            }
        }
    };
    NodeBelief {
        node,
        iteration,
        gaussian,
    }
}

/// Clock estimate from a belief: `skew = 1/mean[0]`,
/// `offset = mean[1]/mean[0]`, with uninformed directions anchored at the
/// node's prior mean.
pub fn bp_estimate(belief: &NodeBelief, anchor: &Vector2<f64>) -> Result<ClockParams> {
    estimate_from_mean(&belief.gaussian.mean_anchored(anchor)?)
}

/// Options for a belief-propagation run.
#[derive(Debug, Clone)]
pub struct BpOptions {
    /// Iteration cap L.
    pub max_iterations: usize,
    /// Convergence threshold on the mixed max-norm
    /// `max(|d_offset| ns, |d_skew| ppm)` over all nodes.
    pub epsilon: f64,
    /// Stop at convergence (`true`) or always run `max_iterations`
    /// (`false`, used when recording full error trajectories).
    pub stop_on_convergence: bool,
    /// Allow running without a master node (convergence is then not
    /// guaranteed; refused by default).
    pub allow_no_master: bool,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            max_iterations: 10,
            epsilon: 0.01,
            stop_on_convergence: true,
            allow_no_master: false,
        }
    }
}

/// Result of a belief-propagation run.
#[derive(Debug, Clone)]
pub struct BpRun {
    /// Estimate trajectory: `estimates[l][node]`, `l = 0..=iterations_run`,
    /// where entry 0 is the prior-derived estimate.
    pub estimates: Vec<Vec<ClockParams>>,
    /// Beliefs at the last executed iteration.
    pub beliefs: Vec<NodeBelief>,
    /// Max-norm estimate change per iteration (index 0 is iteration 1).
    pub max_change: Vec<f64>,
    /// First iteration whose change fell below epsilon.
    pub converged_at: Option<usize>,
    /// Number of message-passing iterations executed.
    pub iterations_run: usize,
}

/// Runs synchronous Gaussian belief propagation on `graph` with one stacked
/// observation per graph edge (aligned with `graph.edges`).
pub fn run_bp(
    graph: &SyncGraph,
    observations: &[ObservationPair],
    opts: &BpOptions,
) -> Result<BpRun> {
    if observations.len() != graph.edges.len() {
        return Err(SyncError::Config(format!(
            "expected {} observations, got {}",
            graph.edges.len(),
            observations.len()
        )));
    }
    if graph.master_nodes().is_empty() && !opts.allow_no_master {
        return Err(SyncError::Graph(
            "no master node in graph; convergence is not guaranteed \
             (set allow_no_master to override)"
                .into(),
        ));
    }

    let n = graph.len();
    // Directed message slots: 2 per edge; slot 2e is a->b, 2e+1 is b->a.
    let n_dir = 2 * graph.edges.len();
    let mut messages: Vec<Gaussian2> = vec![Gaussian2::non_informative(); n_dir];

    let prior_estimates: Vec<ClockParams> = (0..n)
        .map(|i| {
            let p = &graph.priors[i];
            p.state
                .estimate_anchored(&p.anchor)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut estimates = vec![prior_estimates];
    let mut max_change = Vec::new();
    let mut converged_at = None;
    let mut iterations_run = 0;

    for iteration in 1..=opts.max_iterations {
        let mut next = messages.clone();
        for (e, edge) in graph.edges.iter().enumerate() {
            let pair = &observations[e];
            for (slot, (from, to)) in [(2 * e, (edge.a, edge.b)), (2 * e + 1, (edge.b, edge.a))] {
                let (a_dest, a_src) = if to == edge.responder() {
                    (&pair.a_ji, &pair.a_ij)
                } else {
                    (&pair.a_ij, &pair.a_ji)
                };
                let source = pseudo_belief(graph, &messages, from, to);
                next[slot] = compute_message(a_dest, a_src, pair.sigma2, &source)?;
            }
        }
        messages = next;
        iterations_run = iteration;

        let current: Vec<ClockParams> = (0..n)
            .map(|i| {
                let belief = belief_of(graph, &messages, i, iteration);
                bp_estimate(&belief, &graph.priors[i].anchor)
            })
            .collect::<Result<Vec<_>>>()?;

        let prev = estimates.last().unwrap();
        let change = current
            .iter()
            .zip(prev.iter())
            .map(|(c, p)| {
                (c.offset - p.offset)
                    .abs()
                    .max(((c.skew - p.skew) * 1e6).abs())
            })
            .fold(0.0f64, f64::max);
        max_change.push(change);
        estimates.push(current);

        if change < opts.epsilon {
            if converged_at.is_none() {
                converged_at = Some(iteration);
            }
            if opts.stop_on_convergence {
                break;
            }
        }
    }

    let beliefs = (0..n)
        .map(|i| belief_of(graph, &messages, i, iterations_run))
        .collect();

    Ok(BpRun {
        estimates,
        beliefs,
        max_change,
        converged_at,
        iterations_run,
    })
}

/// The sender's prior combined with its incoming messages except the one
/// from the destination.
fn pseudo_belief(
    graph: &SyncGraph,
    messages: &[Gaussian2],
    node: usize,
    except_peer: usize,
) -> Gaussian2 {
    match &graph.priors[node].state.0 {
        Gaussian2::Constraint { mean } => Gaussian2::constraint(*mean),
        Gaussian2::Info { precision, info } => {
            let mut p = *precision;
            let mut eta = *info;
            for &ei in graph.edges_of(node) {
                let edge = &graph.edges[ei];
                let peer = edge.peer(node);
                if peer == except_peer {
                    continue;
                }
                let slot = if edge.a == peer { 2 * ei } else { 2 * ei + 1 };
                if let Gaussian2::Info {
                    precision: mp,
                    info: mi,
                } = &messages[slot]
                {
                    p += mp;
                    eta += mi;
                }
            }
            Gaussian2::Info {
                precision: p,
                info: eta,
            }
        }
    }
}

fn belief_of(
    graph: &SyncGraph,
    messages: &[Gaussian2],
    node: usize,
    iteration: usize,
) -> NodeBelief {
    let incoming: Vec<Gaussian2> = graph
        .edges_of(node)
        .iter()
        .map(|&ei| {
            let edge = &graph.edges[ei];
            let peer = edge.peer(node);
            let slot = if edge.a == peer { 2 * ei } else { 2 * ei + 1 };
            messages[slot].clone()
        })
        .collect();
    update_belief(node, iteration, &graph.priors[node].state.0, &incoming)
}

/// True when `role` participates in message passing.
pub fn is_bp_participant(role: Role) -> bool {
    matches!(role, Role::Mn | Role::Bp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ClockParams;
    use crate::gaussian::theta_vector;
    use crate::graph::{LinkDefaults, Topology};
    use crate::timestamp::{exchange_round_with_noise, run_rounds};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn records_for(
        resp: &ClockParams,
        init: &ClockParams,
        link: &LinkModel,
        k: usize,
        seed: u64,
    ) -> Vec<TimestampRecord> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let t0 = -((k - 1) as f64) * 0.5 * 1e7;
        run_rounds(resp, init, link, k, t0, 1e7, 1000.0, &mut rng).unwrap()
    }

    #[test]
    fn observation_columns_and_noise_scale() {
        let link = LinkModel::new(250.0, 4.0, 4.0).unwrap();
        let recs = records_for(
            &ClockParams::new(1.0002, 40.0).unwrap(),
            &ClockParams::new(0.9999, -12.0).unwrap(),
            &link,
            10,
            3,
        );
        let obs = build_observation(&recs, &link).unwrap();
        assert_eq!(obs.a_ji.nrows(), 10);
        assert_eq!(obs.sigma2, 32.0);
        for row in 0..10 {
            assert_eq!(obs.a_ji[(row, 1)], -2.0);
            assert_eq!(obs.a_ij[(row, 1)], 2.0);
        }
        assert!(matches!(
            build_observation(&recs[..1], &link),
            Err(SyncError::Config(_))
        ));
    }

    #[test]
    fn observation_residual_is_zero_for_unit_truth() {
        // Identical reference clocks: A_ji theta + A_ij theta must vanish,
        // the symmetric delay cancels in the sum rows.
        let link = LinkModel::new(250.0, 0.0, 0.0).unwrap();
        let c = ClockParams::reference();
        let recs = records_for(&c, &c, &link, 10, 0);
        let obs = build_observation(&recs, &link).unwrap();
        let theta = theta_vector(&c);
        for row in 0..10 {
            let resid = obs.a_ji[(row, 0)] * theta[0] + obs.a_ji[(row, 1)] * theta[1]
                + obs.a_ij[(row, 0)] * theta[0]
                + obs.a_ij[(row, 1)] * theta[1];
            assert!(resid.abs() < 1e-9, "row {row} residual {resid}");
        }
    }

    #[test]
    fn observation_residual_matches_drawn_noise() {
        let link = LinkModel::new(275.0, 4.0, 4.0).unwrap();
        let resp = ClockParams::new(1.00013, 612.0).unwrap();
        let init = ClockParams::new(0.99992, -230.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut recs = Vec::new();
        let mut draws = Vec::new();
        for k in 0..10 {
            let (rec, noise) = exchange_round_with_noise(
                &resp,
                &init,
                &link,
                k as f64 * 1e7,
                1000.0,
                k + 1,
                &mut rng,
            );
            recs.push(rec);
            draws.push(noise);
        }
        let obs = build_observation(&recs, &link).unwrap();
        let ti = theta_vector(&resp);
        let tj = theta_vector(&init);
        for row in 0..10 {
            let z = obs.a_ji[(row, 0)] * ti[0] + obs.a_ji[(row, 1)] * ti[1]
                + obs.a_ij[(row, 0)] * tj[0]
                + obs.a_ij[(row, 1)] * tj[1];
            // The row noise is gamma_j (T - R); the relative form treats the
            // initiator's rate as 1, accurate to |gamma_j - 1|.
            let expect = draws[row].t - draws[row].r;
            assert!(
                (z - expect).abs() < 1e-3 * expect.abs().max(1.0),
                "row {row}: z {z} vs drawn {expect}"
            );
        }
    }

    #[test]
    fn noiseless_single_edge_least_squares_recovers_truth() {
        // Independent check of the stacked system: solve it directly by
        // normal equations with the initiator pinned at its truth.
        let link = LinkModel::new(222.0, 0.0, 0.0).unwrap();
        let resp = ClockParams::new(1.00031, -412.0).unwrap();
        let init = ClockParams::reference();
        let recs = records_for(&resp, &init, &link, 10, 1);
        let obs = build_observation(&recs, &link).unwrap();
        let normal = obs.a_ji.transpose() * &obs.a_ji;
        let rhs = -(obs.a_ji.transpose() * &obs.a_ij) * DVector::from_column_slice(&[1.0, 0.0]);
        let sol = normal.lu().solve(&rhs).unwrap();
        let truth = theta_vector(&resp);
        assert_relative_eq!(sol[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(sol[1], truth[1], max_relative = 1e-6, epsilon = 1e-3);
    }

    #[test]
    fn master_message_pins_destination_at_truth_when_noiseless() {
        let link = LinkModel::new(250.0, 0.0, 0.0).unwrap();
        let resp = ClockParams::new(1.00007, 333.0).unwrap();
        let init = ClockParams::reference();
        let recs = records_for(&resp, &init, &link, 10, 2);
        let obs = build_observation(&recs, &link).unwrap();
        let source = Gaussian2::constraint(theta_vector(&init));
        let msg = compute_message(&obs.a_ji, &obs.a_ij, obs.sigma2, &source).unwrap();
        let mean = msg.mean().unwrap();
        let truth = theta_vector(&resp);
        assert_relative_eq!(mean[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(mean[1], truth[1], max_relative = 1e-6, epsilon = 1e-3);
        // Covariance shrinks with the (floored) noise.
        let cov = msg.covariance().unwrap();
        assert!(cov[(1, 1)] < 1e-6);
    }

    #[test]
    fn omega_and_marginalization_routes_agree() {
        let link = LinkModel::new(250.0, 4.0, 4.0).unwrap();
        let resp = ClockParams::new(1.00002, 97.0).unwrap();
        let init = ClockParams::new(0.99991, -41.0).unwrap();
        let recs = records_for(&resp, &init, &link, 10, 7);
        let obs = build_observation(&recs, &link).unwrap();
        for seed in 0..10u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            use rand::Rng;
            // A well-conditioned random sender pseudo-belief.
            let p1: f64 = rng.random_range(1e2..1e6);
            let p2: f64 = rng.random_range(1e-3..1.0);
            let c: f64 = rng.random_range(-0.5..0.5) * (p1 * p2).sqrt();
            let lambda = Matrix2::new(p1, c, c, p2);
            let mean = Vector2::new(
                1.0 + rng.random_range(-1e-4..1e-4),
                rng.random_range(-500.0..500.0),
            );
            let source = Gaussian2::from_information(lambda, lambda * mean).unwrap();

            let via_omega = compute_message(&obs.a_ji, &obs.a_ij, obs.sigma2, &source).unwrap();

            // Force the marginalization route by bypassing the dispatch.
            let j_dd = normal_block(&obs.a_ji, &obs.a_ji, obs.sigma2);
            let j_ds = normal_block(&obs.a_ji, &obs.a_ij, obs.sigma2);
            let j_ss = normal_block(&obs.a_ij, &obs.a_ij, obs.sigma2);
            let m_inv = invert_spd(&(j_ss + lambda)).unwrap();
            let p_schur = j_dd - j_ds * m_inv * j_ds.transpose();
            let eta_schur = -(j_ds * (m_inv * (lambda * mean)));

            let p_omega = via_omega.precision().unwrap();
            let eta_omega = via_omega.information().unwrap();
            // Per-entry relative agreement; the dense-solve route loses a
            // few digits when the sender's skew knowledge is weak (the
            // K x K system is then poorly conditioned).
            for r in 0..2 {
                for c in 0..2 {
                    let (a, b) = (p_omega[(r, c)], p_schur[(r, c)]);
                    assert!(
                        (a - b).abs() <= 1e-5 * b.abs() + 1e-9 * p_schur.amax(),
                        "precision mismatch at ({r},{c}): {a} vs {b}"
                    );
                }
                let (a, b) = (eta_omega[r], eta_schur[r]);
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs() + 1e-9 * eta_schur.amax().max(1.0),
                    "information mismatch at {r}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn belief_identities() {
        let prior = Gaussian2::non_informative();
        let msg = Gaussian2::from_moment(Vector2::new(1.0, 5.0), Matrix2::identity()).unwrap();
        // Single message, non-informative prior: belief equals the message.
        let b = update_belief(0, 1, &prior, std::slice::from_ref(&msg));
        assert_eq!(b.gaussian, msg);

        // Two equal-covariance messages: mean averaged, covariance halved.
        let m1 = Gaussian2::from_moment(Vector2::new(1.0, 10.0), Matrix2::identity()).unwrap();
        let m2 = Gaussian2::from_moment(Vector2::new(3.0, -4.0), Matrix2::identity()).unwrap();
        let b = update_belief(0, 1, &prior, &[m1.clone(), m2.clone()]);
        let mean = b.gaussian.mean().unwrap();
        assert_relative_eq!(mean[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(mean[1], 3.0, max_relative = 1e-12);
        let cov = b.gaussian.covariance().unwrap();
        assert!((cov - Matrix2::identity() * 0.5).amax() < 1e-12);

        // An exact prior dominates any message.
        let mn = Gaussian2::constraint(Vector2::new(1.0, 0.0));
        let b = update_belief(0, 3, &mn, &[m1.clone(), m2.clone()]);
        assert_eq!(b.gaussian, mn);

        // Precision additivity is exact in the fixed summation order.
        let prior2 =
            Gaussian2::from_information(Matrix2::new(1e4, 0.0, 0.0, 0.0), Vector2::new(1e4, 0.0))
                .unwrap();
        let b = update_belief(0, 1, &prior2, &[m1.clone(), m2.clone()]);
        let expect = {
            let mut p = prior2.precision().unwrap();
            p += m1.precision().unwrap();
            p += m2.precision().unwrap();
            p
        };
        assert_eq!(b.gaussian.precision().unwrap(), expect);
    }

    #[test]
    fn estimate_formula_values() {
        let anchor = Vector2::new(1.0, 0.0);
        let b = NodeBelief {
            node: 0,
            iteration: 0,
            gaussian: Gaussian2::constraint(Vector2::new(1.0, 0.0)),
        };
        let e = bp_estimate(&b, &anchor).unwrap();
        assert_eq!((e.skew, e.offset), (1.0, 0.0));

        let b = NodeBelief {
            node: 0,
            iteration: 0,
            gaussian: Gaussian2::constraint(Vector2::new(1.0002, 300.06)),
        };
        let e = bp_estimate(&b, &anchor).unwrap();
        assert_relative_eq!(e.skew, 0.9998000399920016, max_relative = 1e-12);
        assert_relative_eq!(e.offset, 300.0, max_relative = 1e-12);
    }

    #[test]
    fn two_node_noiseless_network_converges_immediately() {
        let topo: Topology = serde_json::from_str(
            r#"{
                "nodes": [
                    {"id": "m", "role": "mn"},
                    {"id": "x", "role": "bp"}
                ],
                "edges": [{"a": "m", "b": "x", "sigma_t_ns": 0.0, "sigma_r_ns": 0.0}]
            }"#,
        )
        .unwrap();
        let graph = SyncGraph::from_topology(&topo, &LinkDefaults::default()).unwrap();
        let x_truth = ClockParams::new(1.00021, -730.0).unwrap();
        let link = LinkModel::new(240.0, 0.0, 0.0).unwrap();
        let recs = records_for(&x_truth, &ClockParams::reference(), &link, 10, 5);
        let obs = vec![build_observation(&recs, &link).unwrap()];
        let run = run_bp(&graph, &obs, &BpOptions::default()).unwrap();
        assert_eq!(run.converged_at, Some(2));
        let x = graph.node_index("x").unwrap();
        let last = run.estimates.last().unwrap()[x];
        assert_relative_eq!(last.skew, x_truth.skew, max_relative = 1e-6);
        assert_relative_eq!(last.offset, x_truth.offset, max_relative = 1e-6, epsilon = 1e-3);
        // The estimate was already exact after the first iteration.
        let first = &run.estimates[1][x];
        assert_relative_eq!(first.offset, x_truth.offset, epsilon = 1e-3);
        // Master estimate never moves.
        for l in 0..run.estimates.len() {
            let m = run.estimates[l][graph.node_index("m").unwrap()];
            assert_eq!((m.skew, m.offset), (1.0, 0.0));
        }
    }

    #[test]
    fn refuses_masterless_graph_without_override() {
        let topo: Topology = serde_json::from_str(
            r#"{
                "nodes": [{"id": "a"}, {"id": "b"}],
                "edges": [{"a": "a", "b": "b"}]
            }"#,
        )
        .unwrap();
        let graph = SyncGraph::from_topology(&topo, &LinkDefaults::default()).unwrap();
        let link = LinkModel::new(250.0, 4.0, 4.0).unwrap();
        let recs = records_for(
            &ClockParams::new(1.0001, 5.0).unwrap(),
            &ClockParams::new(0.9999, -5.0).unwrap(),
            &link,
            10,
            8,
        );
        let obs = vec![build_observation(&recs, &link).unwrap()];
        assert!(matches!(
            run_bp(&graph, &obs, &BpOptions::default()),
            Err(SyncError::Graph(_))
        ));
        let opts = BpOptions {
            allow_no_master: true,
            ..BpOptions::default()
        };
        assert!(run_bp(&graph, &obs, &opts).is_ok());
    }
}
