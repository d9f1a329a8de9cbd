use nalgebra::{Matrix2, Vector2};
use netsync::brf::{measurement_update, predict, BrfState};
use netsync::gaussian::{theta_vector, Gaussian2, ThetaState};
use netsync::timestamp::{run_rounds, LinkModel, TimestampRecord};
use netsync::clock::ClockParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

fn update_full_r(rec_k: &TimestampRecord, rec_km1: &TimestampRecord, link: &LinkModel) -> Gaussian2 {
    let d_c2 = rec_k.c_i_t2 - rec_km1.c_i_t2;
    let b = Matrix2::new(d_c2, 0.0, rec_k.c_i_t2 + rec_k.c_i_t3, -2.0);
    let r_vec = Vector2::new(rec_k.c_j_t1 - rec_km1.c_j_t1, rec_k.c_j_t1 + rec_k.c_j_t4);
    let st2 = link.sigma_t_ns * link.sigma_t_ns;
    let sr2 = link.sigma_r_ns * link.sigma_r_ns;
    // true within-round covariance: rows share T^k
    let r_mat = Matrix2::new(2.0 * st2, st2, st2, st2 + sr2);
    let r_inv = r_mat.try_inverse().unwrap();
    let precision = b.transpose() * r_inv * b;
    let info = b.transpose() * (r_inv * r_vec);
    Gaussian2::from_information(precision, info).unwrap()
}

fn main() {
    let delta = 1e7f64;
    let k = 10usize;
    let t0 = 0.0;
    for full_r in [false, true] {
        let trials = 5000;
        let (mut sq_off, mut sq_skew, mut nees_sum) = (0.0, 0.0, 0.0);
        let (mut nees1, mut nees2) = (0.0, 0.0);
        let skew_dist = Normal::new(1.0f64, 0.01).unwrap();
        for trial in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + trial);
            let child = ClockParams::new(
                { let mut s = skew_dist.sample(&mut rng); while s <= 0.9 || s >= 1.1 { s = skew_dist.sample(&mut rng); } s },
                rng.random_range(-1000.0..1000.0),
            ).unwrap();
            let parent = ClockParams::reference();
            let d = rng.random_range(200.0..300.0);
            let link = LinkModel::new(d, 4.0, 4.0).unwrap();
            let recs = run_rounds(&child, &parent, &link, k, t0, delta, 1000.0, &mut rng).unwrap();
            let mut state = ThetaState::from_clock_prior(0.0, None, 1.0, Some(1e-4)).unwrap();
            let mut last: Option<TimestampRecord> = None;
            for rec in &recs {
                if let Some(prev) = last {
                    let pred = predict(&state, rec.c_j_t1, prev.c_j_t1, &Matrix2::zeros()).unwrap();
                    let upd = if full_r { update_full_r(rec, &prev, &link) }
                              else { measurement_update(rec, &prev, &link).unwrap() };
                    state = ThetaState(pred.product(&upd).unwrap());
                }
                last = Some(*rec);
            }
            let est = state.estimate().unwrap();
            sq_off += (est.offset - child.offset).powi(2);
            sq_skew += ((est.skew - child.skew) * 1e6).powi(2);
            let truth = theta_vector(&child);
            let mean = state.0.mean().unwrap();
            let cov = state.0.covariance().unwrap();
            let e = mean - truth;
            nees_sum += (e.transpose() * cov.try_inverse().unwrap() * e)[(0,0)];
            nees1 += e[0] * e[0] / cov[(0,0)];
            nees2 += e[1] * e[1] / cov[(1,1)];
        }
        let n = trials as f64;
        println!("full_r={:5}: offset RMSE {:.3} ns, skew RMSE {:.4} ppm, NEES {:.2} (marginal skew-dir {:.2}, offset-dir {:.2})",
            full_r, (sq_off / n).sqrt(), (sq_skew / n).sqrt(), nees_sum / n, nees1 / n, nees2 / n);
    }
}
