//! Contraction certification for the fixed-point map.
//!
//! On the ball of radius `rho` in the pair norm, the map obeys
//!
//! ```text
//! |T Q|_{2-d}        <= a1 |Q|_{2-d} |Q'|_{3-d} + m
//! |(T Q)'|_{3-d}     <= a2 |Q|_{2-d} |Q'|_{3-d} + m d
//! |T Q - T S|_{2-d}  <= a3 max{ |Q-S|_{2-d} |Q'|_{3-d}, |Q'-S'|_{3-d} |S|_{2-d} }
//! |(T Q - T S)'|_{3-d} <= a4 max{ ... }
//! ```
//!
//! with constants determined by the identities
//!
//! ```text
//! 2 a1 sigma_d (d-2) = L            2 a2 sigma_d (d-2) = L (d+4)
//! 2 a3 sigma_d (d-2) = L + 1        2 a4 sigma_d (d-2) = L (d+4) + 1
//! ```
//!
//! A radius `rho` certifies a unique fixed point when `a4 rho < 1` and the
//! self-map condition `a2 rho^2 - rho + m d <= 0` holds; the admissible
//! radii form an interval whose nonemptiness bounds the mass. The module
//! also carries a randomized harness that probes all four estimates on
//! sampled profiles, since their derivation is not reproduced here.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ModelError, ProblemParams, ProfilePair, RadialGrid};
use crate::operator::{IntegralOperator, OperatorError};
use crate::scalar::{approx64, lit, Scalar};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("no admissible contraction radius for these parameters")]
    NoInterval,
    #[error("radius {rho} outside the admissible interval [{lo}, {hi})")]
    RadiusOutsideInterval { rho: f64, lo: f64, hi: f64 },
    #[error("estimate harness needs at least one trial")]
    ZeroTrials,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// The four estimate constants; see the module docs for the inequalities
/// they govern.
#[derive(Debug, Clone, Copy)]
pub struct ContractionConstants<T> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub a4: T,
}

/// Evaluates the constants from dimension, sphere measure, and the response
/// Lipschitz constant.
pub fn constants<T: Scalar>(params: &ProblemParams<T>) -> ContractionConstants<T> {
    let d = params.d();
    let l = params.lipschitz();
    let denom = lit::<T>(2.0) * params.sigma_d() * (d - lit::<T>(2.0));
    let gain = l * (d + lit::<T>(4.0));
    ContractionConstants {
        a1: l / denom,
        a2: gain / denom,
        a3: (l + T::one()) / denom,
        a4: (gain + T::one()) / denom,
    }
}

/// Radii on which the map is a self-contraction of the closed ball:
/// the quadratic self-map condition `a2 rho^2 - rho + m d <= 0` intersected
/// with the strict contraction cap `rho < 1/a4`. Returns `[rho_lo, rho_hi)`
/// or `None` when the quadratic has no real roots (mass too large) or the
/// intersection is empty. Degenerate `m <= 0` is not certifiable.
pub fn admissible_interval<T: Scalar>(params: &ProblemParams<T>) -> Option<(T, T)> {
    let m = params.mass();
    if !(m > T::zero()) {
        return None;
    }
    let c = constants(params);
    let four = lit::<T>(4.0);
    let two = lit::<T>(2.0);
    let loading = m * params.d();
    let disc = T::one() - four * c.a2 * loading;
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let lo = (T::one() - sq) / (two * c.a2);
    let hi = ((T::one() + sq) / (two * c.a2)).min(T::one() / c.a4);
    if lo > T::zero() && lo < hi {
        Some((lo, hi))
    } else {
        None
    }
}

/// Default certified radius: the geometric mean of the interval endpoints,
/// clamped inside `[lo, hi)`.
pub fn default_radius<T: Scalar>(lo: T, hi: T) -> T {
    let g = (lo * hi).sqrt();
    if g >= hi {
        (lo + hi) / lit::<T>(2.0)
    } else {
        g.max(lo)
    }
}

/// Supremum of masses with a nonempty admissible interval, located by
/// bisection to relative width 1e-12.
///
/// When `L (d+4) > 1` the contraction cap is slack at the threshold and the
/// supremum has the closed form `sigma_d (d-2) / (2 L d (d+4))`; that value
/// is returned, with the bisection kept as a cross-check. Below that gain
/// the cap binds and the bisection result stands on its own.
pub fn max_mass<T: Scalar>(params: &ProblemParams<T>) -> T {
    let nonempty = |m: T| -> bool {
        let probe = params.with_mass(m).expect("positive trial mass");
        admissible_interval(&probe).is_some()
    };
    let mut lo = T::zero();
    let mut hi = T::one();
    while nonempty(hi) {
        lo = hi;
        hi = hi + hi;
    }
    // The width target floors at a few ulps so reduced-precision scalars
    // terminate instead of stalling on midpoints.
    let rel = lit::<T>(1e-12).max(lit::<T>(4.0) * T::epsilon());
    while hi - lo > rel * hi {
        let mid = (lo + hi) / lit::<T>(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if nonempty(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bisected = (lo + hi) / lit::<T>(2.0);

    let d = params.d();
    let gain = params.lipschitz() * (d + lit::<T>(4.0));
    if gain > T::one() {
        let closed = params.sigma_d() * (d - lit::<T>(2.0))
            / (lit::<T>(2.0) * params.lipschitz() * d * (d + lit::<T>(4.0)));
        let drift = lit::<T>(1e-9).max(lit::<T>(256.0) * T::epsilon());
        debug_assert!(
            (closed - bisected).abs() <= drift * closed,
            "bisection drifted from the closed-form threshold"
        );
        closed
    } else {
        bisected
    }
}

/// Everything the certification pass derives from the parameters. The
/// radius fields are absent when no admissible interval exists; `m_max` is
/// reported either way.
#[derive(Debug, Clone)]
pub struct ContractionCertificate<T> {
    pub constants: ContractionConstants<T>,
    pub rho_lo: Option<T>,
    pub rho_hi: Option<T>,
    pub m_max: T,
    pub chosen_rho: Option<T>,
    pub q_bound: Option<T>,
}

impl<T: Scalar> ContractionCertificate<T> {
    pub fn build(params: &ProblemParams<T>) -> Self {
        let consts = constants(params);
        let m_max = max_mass(params);
        match admissible_interval(params) {
            Some((lo, hi)) => {
                let rho = default_radius(lo, hi);
                ContractionCertificate {
                    constants: consts,
                    rho_lo: Some(lo),
                    rho_hi: Some(hi),
                    m_max,
                    chosen_rho: Some(rho),
                    q_bound: Some(consts.a4 * rho),
                }
            }
            None => ContractionCertificate {
                constants: consts,
                rho_lo: None,
                rho_hi: None,
                m_max,
                chosen_rho: None,
                q_bound: None,
            },
        }
    }

    pub fn is_certified(&self) -> bool {
        self.chosen_rho.is_some()
    }
}

/// Natural cubic spline through uniformly spaced values on `[0, 1]`; the
/// sampled-profile generator shapes its draws with these.
struct CubicSpline<T> {
    values: Vec<T>,
    second: Vec<T>,
    h: T,
}

impl<T: Scalar> CubicSpline<T> {
    fn natural(values: Vec<T>) -> Self {
        let segments = values.len() - 1;
        let h = T::one() / lit::<T>(segments as f64);
        let mut second = vec![T::zero(); values.len()];
        let interior = segments.saturating_sub(1);
        if interior > 0 {
            // Tridiagonal system M_{i-1} + 4 M_i + M_{i+1} = 6 ddv_i / h^2
            // with natural ends, solved by the Thomas sweep.
            let four = lit::<T>(4.0);
            let six = lit::<T>(6.0);
            let mut upper = vec![T::zero(); interior];
            let mut rhs = vec![T::zero(); interior];
            for i in 0..interior {
                rhs[i] =
                    six * (values[i + 2] - lit::<T>(2.0) * values[i + 1] + values[i]) / (h * h);
            }
            upper[0] = T::one() / four;
            rhs[0] = rhs[0] / four;
            for i in 1..interior {
                let denom = four - upper[i - 1];
                upper[i] = T::one() / denom;
                rhs[i] = (rhs[i] - rhs[i - 1]) / denom;
            }
            second[interior] = rhs[interior - 1];
            for i in (1..interior).rev() {
                second[i] = rhs[i - 1] - upper[i - 1] * second[i + 1];
            }
        }
        CubicSpline { values, second, h }
    }

    /// Value and first derivative at `x` in `[0, 1]`.
    fn eval(&self, x: T) -> (T, T) {
        let segments = self.values.len() - 1;
        let j = (approx64(x / self.h).floor() as usize).min(segments - 1);
        let t = x - self.h * lit::<T>(j as f64);
        let six = lit::<T>(6.0);
        let two = lit::<T>(2.0);
        let (m0, m1) = (self.second[j], self.second[j + 1]);
        let b = (self.values[j + 1] - self.values[j]) / self.h
            - self.h * (two * m0 + m1) / six;
        let cubic = (m1 - m0) / (six * self.h);
        let value = self.values[j] + t * (b + t * (m0 / two + t * cubic));
        let slope = b + t * (m0 + t * (lit::<T>(3.0) * cubic));
        (value, slope)
    }
}

/// Draws a random profile with pair norm equal to a uniform fraction of
/// `rho`: a random cubic spline times the envelope `r^{d-2}`, which keeps
/// both weighted norms finite, rescaled to the target.
pub fn sample_ball_profile<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    rho: T,
    rng: &mut impl Rng,
) -> Result<ProfilePair<T>, CertifyError> {
    const SEGMENTS: usize = 8;
    let values: Vec<T> =
        (0..=SEGMENTS).map(|_| lit::<T>(rng.random_range(-1.0..1.0))).collect();
    let spline = CubicSpline::natural(values);
    let d = params.d();
    let dm2 = d - lit::<T>(2.0);
    let dm3 = d - lit::<T>(3.0);
    let nodes = grid.nodes();
    let mut q = Vec::with_capacity(nodes.len());
    let mut qprime = Vec::with_capacity(nodes.len());
    for &r in nodes {
        let (s, sp) = spline.eval(r);
        q.push(s * r.powf(dm2));
        qprime.push(sp * r.powf(dm2) + dm2 * s * r.powf(dm3));
    }
    q[0] = T::zero();
    let p = ProfilePair::new(Arc::clone(grid), q, qprime)?;
    let norm = p.pair_norm(d)?;
    if norm == T::zero() {
        return Ok(p);
    }
    let fraction = T::one() - lit::<T>(rng.random_range(0.0..1.0));
    Ok(p.scale(fraction * rho / norm))
}

/// Slack margins (`bound - observed`, nonnegative when the estimate holds)
/// of the four inequalities on one pair of draws, plus the observed
/// contraction ratio of the pair.
pub(crate) fn inequality_margins<T: Scalar>(
    op: &IntegralOperator<T>,
    q: &ProfilePair<T>,
    s: &ProfilePair<T>,
) -> Result<([T; 4], Option<T>), CertifyError> {
    use crate::model::Component::{Derivative, Value};
    let params = op.params();
    let c = constants(params);
    let d = params.d();
    let m = params.mass();
    let (av, ad) = (lit::<T>(2.0) - d, lit::<T>(3.0) - d);

    let q_value = q.weighted_norm(av, Value)?;
    let q_slope = q.weighted_norm(ad, Derivative)?;
    let s_value = s.weighted_norm(av, Value)?;

    let tq = op.apply(q)?;
    let ts = op.apply(s)?;
    let diff_in = q.sub(s)?;
    let diff_out = tq.sub(&ts)?;

    let product = q_value * q_slope;
    let margin_value_self = c.a1 * product + m - tq.weighted_norm(av, Value)?;
    let margin_slope_self = c.a2 * product + m * d - tq.weighted_norm(ad, Derivative)?;

    let coupling =
        (diff_in.weighted_norm(av, Value)? * q_slope).max(diff_in.weighted_norm(ad, Derivative)? * s_value);
    let margin_value_lip = c.a3 * coupling - diff_out.weighted_norm(av, Value)?;
    let margin_slope_lip = c.a4 * coupling - diff_out.weighted_norm(ad, Derivative)?;

    let in_norm = diff_in.pair_norm(d)?;
    let ratio = if in_norm > T::zero() { Some(diff_out.pair_norm(d)? / in_norm) } else { None };
    Ok(([margin_value_self, margin_slope_self, margin_value_lip, margin_slope_lip], ratio))
}

pub const INEQUALITY_NAMES: [&str; 4] =
    ["value_self_map", "slope_self_map", "value_lipschitz", "slope_lipschitz"];

/// An estimate that failed on a concrete draw. Margins can dip a hair below
/// zero from quadrature error alone; consumers decide how much slack a
/// violation deserves.
#[derive(Debug, Clone)]
pub struct EstimateViolation {
    pub trial: usize,
    pub inequality: &'static str,
    pub margin: f64,
}

/// Outcome of the randomized estimate probe.
#[derive(Debug, Clone)]
pub struct EstimateReport<T> {
    pub trials: usize,
    /// Per-inequality minimum margins, in `INEQUALITY_NAMES` order.
    pub min_margins: [T; 4],
    /// Smallest margin across all inequalities and draws.
    pub min_margin: T,
    /// Largest observed `||T Q - T S|| / ||Q - S||`.
    pub max_ratio: T,
    pub violations: Vec<EstimateViolation>,
}

/// Probes the four estimates on `trials` independent pairs of random
/// profiles from the ball of radius `rho`. Draw streams are derived from
/// `seed` per trial, so reports are reproducible and trials are independent
/// of each other.
pub fn empirical_estimates<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    rho: T,
    trials: usize,
    seed: u64,
) -> Result<EstimateReport<T>, CertifyError> {
    if trials == 0 {
        return Err(CertifyError::ZeroTrials);
    }
    let (lo, hi) = admissible_interval(params).ok_or(CertifyError::NoInterval)?;
    if !(rho >= lo && rho < hi) {
        return Err(CertifyError::RadiusOutsideInterval {
            rho: approx64(rho),
            lo: approx64(lo),
            hi: approx64(hi),
        });
    }
    let op = IntegralOperator::new(params, grid);
    let inf = T::infinity();
    let mut min_margins = [inf; 4];
    let mut max_ratio = T::zero();
    let mut violations = Vec::new();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let q = sample_ball_profile(params, grid, rho, &mut rng)?;
        let s = sample_ball_profile(params, grid, rho, &mut rng)?;
        let (margins, ratio) = inequality_margins(&op, &q, &s)?;
        for (k, &margin) in margins.iter().enumerate() {
            min_margins[k] = min_margins[k].min(margin);
            if margin < T::zero() {
                violations.push(EstimateViolation {
                    trial,
                    inequality: INEQUALITY_NAMES[k],
                    margin: approx64(margin),
                });
            }
        }
        if let Some(ratio) = ratio {
            max_ratio = max_ratio.max(ratio);
        }
    }
    let min_margin = min_margins.iter().fold(inf, |acc, &x| acc.min(x));
    Ok(EstimateReport { trials, min_margins, min_margin, max_ratio, violations })
}

/// Deterministic per-trial generator: `seed` selects the family, the trial
/// index is mixed in SplitMix-style so trials never share a stream.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mixed = seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}
