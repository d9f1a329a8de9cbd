//! Two-dimensional Gaussian algebra in information form.
//!
//! Every Gaussian handled by the estimators is either held as an
//! information pair (precision matrix and information vector) or as an
//! exact constraint (a point mass, i.e. zero covariance). Unbounded
//! variance is represented as zero precision, never as a large finite
//! number, so non-informative priors and first-iteration messages combine
//! exactly.
//!
//! Precision matrices may be singular: a zero eigenvalue encodes a
//! direction the distribution says nothing about. Directions whose
//! precision falls below [`FLAT_PRECISION_TOL`] are treated as uninformed;
//! mean extraction either fails ([`Gaussian2::mean`]) or falls back to a
//! caller-supplied anchor ([`Gaussian2::mean_anchored`]) in those
//! directions.

use nalgebra::{Matrix2, Vector2};

use crate::clock::ClockParams;
use crate::error::{Result, SyncError};

/// Precision below which a direction counts as carrying no information.
///
/// In offset units this is a standard deviation of 1e6 ns; in skew units a
/// standard deviation of 1e6 on the rate ratio. Both are far beyond any
/// physically meaningful uncertainty in this domain, while sitting several
/// orders of magnitude above the floating-point dust produced when an
/// exactly-flat direction is computed by cancellation.
pub const FLAT_PRECISION_TOL: f64 = 1e-12;

/// Relative tolerance for symmetry validation of covariance/precision input.
const SYMMETRY_TOL: f64 = 1e-12;

/// A 2-D Gaussian distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Gaussian2 {
    /// Information form: `precision` is symmetric positive semi-definite
    /// and `info = precision * mean` on the informed subspace.
    Info {
        precision: Matrix2<f64>,
        info: Vector2<f64>,
    },
    /// Point mass at `mean` (zero covariance, infinite precision).
    Constraint { mean: Vector2<f64> },
}

pub(crate) fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

fn check_symmetric(m: &Matrix2<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m[(0, 1)] - m[(1, 0)]).abs() > SYMMETRY_TOL * scale {
        return Err(SyncError::InvalidMatrix(format!(
            "{what} is not symmetric: off-diagonal entries {} vs {}",
            m[(0, 1)],
            m[(1, 0)]
        )));
    }
    Ok(())
}

/// Spectral summary of a symmetric PSD 2x2 matrix, computed in closed form
/// without cancellation in the quantities that matter: `lambda_max` from
/// the direct formula (always well conditioned for PSD input) and
/// `lambda_min` as `det / lambda_max`, whose relative accuracy is governed
/// by the determinant computation instead of the eigenvalue gap.
struct Spectrum2 {
    lambda_min: f64,
    lambda_max: f64,
    /// Unit eigenvector of `lambda_max`.
    v_max: Vector2<f64>,
}

fn spectrum(m: &Matrix2<f64>) -> Spectrum2 {
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mid = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lambda_max = mid + half_gap;
    let det = a * d - b * b;
    let lambda_min = if lambda_max > 0.0 {
        (det / lambda_max).max(0.0)
    } else {
        0.0
    };
    // Stable eigenvector choice: take the component combination that avoids
    // subtracting nearly equal numbers.
    let v = if a - d >= 0.0 {
        Vector2::new(0.5 * (a - d) + half_gap, b)
    } else {
        Vector2::new(b, 0.5 * (d - a) + half_gap)
    };
    let norm = v.norm();
    let v_max = if norm > 0.0 {
        v / norm
    } else {
        Vector2::new(1.0, 0.0)
    };
    Spectrum2 {
        lambda_min,
        lambda_max,
        v_max,
    }
}

/// Validates approximate positive semi-definiteness, clamping
/// floating-point dust: tiny negative diagonals go to zero and a
/// determinant that is negative by dust is projected onto the PSD boundary
/// (the matrix is then exactly singular, i.e. one uninformed direction).
/// Genuinely indefinite input is rejected.
fn validate_psd(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let mut m = symmetrize(m);
    let scale = m.amax();
    let tol = 1e-9 * scale.max(1.0);
    for i in 0..2 {
        if m[(i, i)] < -tol {
            return Err(SyncError::InvalidMatrix(format!(
                "{what} is not positive semi-definite: diagonal entry {}",
                m[(i, i)]
            )));
        }
        if m[(i, i)] < 0.0 {
            m[(i, i)] = 0.0;
        }
    }
    let slack = m[(0, 1)] * m[(0, 1)] - m[(0, 0)] * m[(1, 1)];
    if slack > 0.0 {
        if slack > 1e-9 * scale * scale {
            return Err(SyncError::InvalidMatrix(format!(
                "{what} is not positive semi-definite: determinant {}",
                -slack
            )));
        }
        let bounded = (m[(0, 0)] * m[(1, 1)]).sqrt().copysign(m[(0, 1)]);
        m[(0, 1)] = bounded;
        m[(1, 0)] = bounded;
    }
    Ok(m)
}

impl Gaussian2 {
    /// The non-informative distribution: zero precision everywhere.
    pub fn non_informative() -> Self {
        Gaussian2::Info {
            precision: Matrix2::zeros(),
            info: Vector2::zeros(),
        }
    }

    /// Point mass at `mean`.
    pub fn constraint(mean: Vector2<f64>) -> Self {
        Gaussian2::Constraint { mean }
    }

    /// Builds from moment form. The covariance must be symmetric PSD; a zero
    /// covariance yields a constraint, a singular nonzero covariance is
    /// rejected (use information form for partially informative
    /// distributions).
    pub fn from_moment(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        check_symmetric(&cov, "covariance")?;
        let cov = validate_psd(&cov, "covariance")?;
        if cov == Matrix2::zeros() {
            return Ok(Gaussian2::Constraint { mean });
        }
        let precision = invert_spd(&cov).ok_or_else(|| {
            SyncError::InvalidMatrix(
                "singular nonzero covariance has no information form".into(),
            )
        })?;
        Ok(Gaussian2::Info {
            precision,
            info: precision * mean,
        })
    }

    /// Builds from information form (precision matrix and information
    /// vector `precision * mean`). The precision must be symmetric PSD and
    /// may be singular or zero.
    pub fn from_information(precision: Matrix2<f64>, info: Vector2<f64>) -> Result<Self> {
        check_symmetric(&precision, "precision")?;
        let precision = validate_psd(&precision, "precision")?;
        Ok(Gaussian2::Info { precision, info })
    }

    /// True when this distribution carries no information at all.
    pub fn is_non_informative(&self) -> bool {
        matches!(self, Gaussian2::Info { precision, .. } if *precision == Matrix2::zeros())
    }

    /// True for a point mass.
    pub fn is_constraint(&self) -> bool {
        matches!(self, Gaussian2::Constraint { .. })
    }

    /// Precision matrix; `None` for a constraint (infinite precision).
    pub fn precision(&self) -> Option<Matrix2<f64>> {
        match self {
            Gaussian2::Info { precision, .. } => Some(*precision),
            Gaussian2::Constraint { .. } => None,
        }
    }

    /// Information vector; `None` for a constraint.
    pub fn information(&self) -> Option<Vector2<f64>> {
        match self {
            Gaussian2::Info { info, .. } => Some(*info),
            Gaussian2::Constraint { .. } => None,
        }
    }

    /// Mean vector. Fails when any direction is uninformed.
    pub fn mean(&self) -> Result<Vector2<f64>> {
        match self {
            Gaussian2::Constraint { mean } => Ok(*mean),
            Gaussian2::Info { precision, info } => {
                let s = spectrum(precision);
                if s.lambda_min <= FLAT_PRECISION_TOL {
                    return Err(SyncError::NonInformative);
                }
                solve_spd(precision, info).ok_or(SyncError::NonInformative)
            }
        }
    }

    /// Covariance matrix. A constraint has exactly zero covariance; a
    /// singular precision has no finite covariance and fails.
    pub fn covariance(&self) -> Result<Matrix2<f64>> {
        match self {
            Gaussian2::Constraint { .. } => Ok(Matrix2::zeros()),
            Gaussian2::Info { precision, .. } => {
                let s = spectrum(precision);
                if s.lambda_min <= FLAT_PRECISION_TOL {
                    return Err(SyncError::InvalidMatrix(
                        "singular precision has no finite covariance".into(),
                    ));
                }
                invert_spd(precision).ok_or_else(|| {
                    SyncError::InvalidMatrix("precision inversion failed".into())
                })
            }
        }
    }

    /// Mean vector with a fallback `anchor` used in uninformed directions.
    ///
    /// When every direction carries information above
    /// [`FLAT_PRECISION_TOL`] this is the ordinary information-form solve.
    /// With exactly one informed direction, the mean is the anchor moved
    /// along that direction to match the information vector. Fails only
    /// when every direction is uninformed.
    pub fn mean_anchored(&self, anchor: &Vector2<f64>) -> Result<Vector2<f64>> {
        match self {
            Gaussian2::Constraint { mean } => Ok(*mean),
            Gaussian2::Info { precision, info } => {
                let s = spectrum(precision);
                if s.lambda_max <= FLAT_PRECISION_TOL {
                    return Err(SyncError::NonInformative);
                }
                if s.lambda_min > FLAT_PRECISION_TOL {
                    return solve_spd(precision, info).ok_or(SyncError::NonInformative);
                }
                let residual = info - precision * anchor;
                Ok(anchor + s.v_max * (s.v_max.dot(&residual) / s.lambda_max))
            }
        }
    }

    /// Normalized product of two Gaussian densities.
    ///
    /// Constraints dominate: fusing anything with a point mass returns the
    /// point mass. Fusing two non-informative distributions returns a
    /// non-informative result. A precision sum that is singular without
    /// being zero has no usable posterior and is rejected.
    pub fn product(&self, other: &Gaussian2) -> Result<Gaussian2> {
        match (self, other) {
            (Gaussian2::Constraint { mean }, _) => Ok(Gaussian2::Constraint { mean: *mean }),
            (_, Gaussian2::Constraint { mean }) => Ok(Gaussian2::Constraint { mean: *mean }),
            (
                Gaussian2::Info {
                    precision: pa,
                    info: ia,
                },
                Gaussian2::Info {
                    precision: pb,
                    info: ib,
                },
            ) => {
                let precision = symmetrize(&(pa + pb));
                let info = ia + ib;
                if precision == Matrix2::zeros() {
                    return Ok(Gaussian2::non_informative());
                }
                let s = spectrum(&precision);
                if s.lambda_min <= FLAT_PRECISION_TOL
                    && !self.is_non_informative()
                    && !other.is_non_informative()
                {
                    return Err(SyncError::SingularFusion);
                }
                Ok(Gaussian2::Info { precision, info })
            }
        }
    }

    /// Pushes the distribution through the invertible affine map
    /// `x -> a x + u`.
    pub fn affine_transform(&self, a: &Matrix2<f64>, u: &Vector2<f64>) -> Result<Gaussian2> {
        let a_inv = a.try_inverse().ok_or_else(|| {
            SyncError::InvalidMatrix("affine transform matrix is singular".into())
        })?;
        match self {
            Gaussian2::Constraint { mean } => Ok(Gaussian2::Constraint { mean: a * mean + u }),
            Gaussian2::Info { precision, info } => {
                // mean' = A mean + u; precision' = A^-T P A^-1;
                // info' = precision' * mean' = A^-T (info + P A^-1 u)
                let p2 = symmetrize(&(a_inv.transpose() * precision * a_inv));
                let i2 = a_inv.transpose() * (info + precision * (a_inv * u));
                Ok(Gaussian2::Info {
                    precision: p2,
                    info: i2,
                })
            }
        }
    }

    /// Adds independent Gaussian noise with covariance `q` (covariance
    /// addition). Uninformed directions stay uninformed; a constraint turns
    /// into a moment-form Gaussian with covariance `q`.
    pub fn add_covariance(&self, q: &Matrix2<f64>) -> Result<Gaussian2> {
        check_symmetric(q, "noise covariance")?;
        let q = validate_psd(q, "noise covariance")?;
        if q == Matrix2::zeros() {
            return Ok(self.clone());
        }
        match self {
            Gaussian2::Constraint { mean } => Gaussian2::from_moment(*mean, q),
            Gaussian2::Info { precision, info } => {
                let s = spectrum(precision);
                if s.lambda_max <= FLAT_PRECISION_TOL {
                    // Nothing known yet; additional noise changes nothing.
                    return Ok(self.clone());
                }
                if s.lambda_min > FLAT_PRECISION_TOL {
                    let cov = invert_spd(precision)
                        .ok_or_else(|| SyncError::InvalidMatrix("precision inversion failed".into()))?;
                    let mean = cov * info;
                    return Gaussian2::from_moment(mean, cov + q);
                }
                // Exactly one informed direction v: its variance grows by
                // v' q v, the flat direction absorbs any noise and stays flat.
                let v = s.v_max;
                let var = 1.0 / s.lambda_max + (v.transpose() * q * v)[(0, 0)];
                let m = v.dot(&info) / s.lambda_max;
                let p = 1.0 / var;
                let precision = symmetrize(&(v * v.transpose() * p));
                let info = v * (p * m);
                Ok(Gaussian2::Info { precision, info })
            }
        }
    }
}

/// Smallest-eigenvalue estimate of a symmetric PSD 2x2 matrix, computed as
/// `det / lambda_max` to stay accurate across extreme eigenvalue spreads.
pub(crate) fn spectrum_lambda_min(m: &Matrix2<f64>) -> f64 {
    spectrum(m).lambda_min
}

/// Closed-form inverse of a symmetric positive-definite 2x2 matrix.
/// Returns `None` when the matrix is numerically singular.
pub(crate) fn invert_spd(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det <= 0.0 || !det.is_finite() {
        return None;
    }
    Some(symmetrize(&Matrix2::new(
        m[(1, 1)] / det,
        -m[(0, 1)] / det,
        -m[(1, 0)] / det,
        m[(0, 0)] / det,
    )))
}

/// Solves `m x = b` for symmetric positive-definite `m`.
pub(crate) fn solve_spd(m: &Matrix2<f64>, b: &Vector2<f64>) -> Option<Vector2<f64>> {
    invert_spd(m).map(|inv| inv * b)
}

/// Gaussian state over the reparameterized clock vector
/// `[1/skew, offset/skew]`, the coordinates in which the time-stamp
/// equations are linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaState(pub Gaussian2);

impl ThetaState {
    /// Fully non-informative state.
    pub fn non_informative() -> Self {
        ThetaState(Gaussian2::non_informative())
    }

    /// Exact state (point mass), e.g. the master node's reference clock.
    pub fn exact(params: &ClockParams) -> Self {
        ThetaState(Gaussian2::constraint(theta_vector(params)))
    }

    /// Builds a prior from independent offset and skew components given in
    /// clock units (offset ns, skew ratio). `None` variance means
    /// unbounded; `0.0` variance on both components yields an exact
    /// constraint.
    ///
    /// The components are mapped onto the `[1/skew, offset/skew]`
    /// coordinates to first order around skew 1: the inverse-skew component
    /// keeps the skew variance and the scaled-offset component keeps the
    /// offset variance.
    pub fn from_clock_prior(
        offset_mean: f64,
        offset_variance: Option<f64>,
        skew_mean: f64,
        skew_variance: Option<f64>,
    ) -> Result<Self> {
        if !(skew_mean > 0.0) {
            return Err(SyncError::NonPositiveSkew(skew_mean));
        }
        let mean = Vector2::new(1.0 / skew_mean, offset_mean / skew_mean);
        match (skew_variance, offset_variance) {
            (Some(sv), Some(ov)) if sv == 0.0 && ov == 0.0 => {
                Ok(ThetaState(Gaussian2::constraint(mean)))
            }
            (sv, ov) => {
                let check = |v: Option<f64>, what: &str| -> Result<f64> {
                    match v {
                        None => Ok(0.0),
                        Some(x) if x > 0.0 && x.is_finite() => Ok(1.0 / x),
                        Some(x) => Err(SyncError::Config(format!(
                            "{what} variance must be positive and finite (or null for \
                             unbounded, or 0 together with the other component for an \
                             exact prior); got {x}"
                        ))),
                    }
                };
                let p_skew = check(sv, "skew")?;
                let p_offset = check(ov, "offset")?;
                let precision = Matrix2::new(p_skew, 0.0, 0.0, p_offset);
                Ok(ThetaState(Gaussian2::Info {
                    precision,
                    info: precision * mean,
                }))
            }
        }
    }

    /// Extracts the clock estimate `skew = 1/mean[0]`,
    /// `offset = mean[1]/mean[0]`. Requires a fully informed state with a
    /// strictly positive first mean component.
    pub fn estimate(&self) -> Result<ClockParams> {
        estimate_from_mean(&self.0.mean()?)
    }

    /// Like [`ThetaState::estimate`] but anchoring uninformed directions at
    /// `anchor` (typically the prior mean).
    pub fn estimate_anchored(&self, anchor: &Vector2<f64>) -> Result<ClockParams> {
        estimate_from_mean(&self.0.mean_anchored(anchor)?)
    }
}

/// The `[1/skew, offset/skew]` coordinates of a set of clock parameters.
pub fn theta_vector(params: &ClockParams) -> Vector2<f64> {
    Vector2::new(1.0 / params.skew, params.offset / params.skew)
}

/// Clock estimate from a mean in `[1/skew, offset/skew]` coordinates.
pub fn estimate_from_mean(mean: &Vector2<f64>) -> Result<ClockParams> {
    if !(mean[0] > 0.0) || !mean[0].is_finite() {
        return Err(SyncError::NonPositiveInverseSkew(mean[0]));
    }
    ClockParams::new(1.0 / mean[0], mean[1] / mean[0])
}
