//! Independent reconstruction of stationary profiles by shooting on the
//! differential form
//!
//! ```text
//! Q'' = (d-1) Q'/r - R(Q' r^{1-d} / sigma_d) Q,    Q(0) = 0,  Q(1) = m,
//! ```
//!
//! parameterized by the central density `a` through the short-radius series
//! `Q = (a sigma_d / d) r^d (1 + O(r^2))`. The module never touches the
//! integral kernel, so agreement with the fixed-point iteration is evidence
//! for both discretizations.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{ModelError, ProblemParams, ProfilePair, RadialGrid};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error)]
pub enum OracleError<T: Scalar> {
    #[error("bracketing failed: {reason} (gap trace {trace:?})")]
    Bracket { reason: &'static str, trace: Vec<T> },
    #[error("integration step underflowed at r = {0}")]
    StepUnderflow(T),
    #[error("boundary gap {gap} still above tolerance {tol} after refinement")]
    ToleranceNotReached { tol: T, gap: T },
    #[error("shooting needs positive mass")]
    NonpositiveMass,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Below this radius the two-term series is more accurate than stepping.
const SERIES_RADIUS: f64 = 0.01;
/// Integration substep cap relative to the current radius; keeps the
/// `Q'/r` term resolved on coarse or strongly graded grids.
const STEP_RATIO: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ShootResult<T> {
    pub profile: ProfilePair<T>,
    /// Matched central density `a = n(0)`.
    pub central_density: T,
    /// Number of full integrations spent on bracketing and refinement.
    pub shots: usize,
    /// Final bracket around the central density.
    pub bracket: (T, T),
}

/// One integration at central density `a`, sampling the state at every grid
/// node. Returns the boundary gap `Q(1) - m` together with the samples; the
/// gap is NaN when the trajectory left the finite range.
fn shoot_once<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    a: T,
) -> Result<(T, Vec<T>, Vec<T>), OracleError<T>> {
    let d = params.d();
    let sigma = params.sigma_d();
    let response = params.nonlinearity();
    let one = T::one();
    let two = lit::<T>(2.0);

    // Q = A r^d + B r^{d+2} matches the equation through O(r^{d+2}) with
    // B fixed by the response at the central density.
    let amp = a * sigma / d;
    let ra = response.eval(a);
    let shape = -ra * amp / (two * (d + two));
    let series_q = |r: T| amp * r.powf(d) + shape * r.powf(d + two);
    let series_p =
        |r: T| d * amp * r.powf(d - one) + (d + two) * shape * r.powf(d + one);

    let f = |r: T, y: [T; 2]| -> [T; 2] {
        let density = y[1] * r.powf(one - d) / sigma;
        [y[1], (d - one) * y[1] / r - response.eval(density) * y[0]]
    };

    let nodes = grid.nodes();
    let count = nodes.len();
    let mut q = vec![T::zero(); count];
    let mut qp = vec![T::zero(); count];
    let seed_r = lit::<T>(SERIES_RADIUS);
    let cap = lit::<T>(STEP_RATIO);
    let half = lit::<T>(0.5);
    let sixth = lit::<T>(6.0);

    let mut cur_r = seed_r;
    let mut cur = [series_q(seed_r), series_p(seed_r)];
    let mut finite = true;
    for i in 1..count {
        let r = nodes[i];
        if r <= seed_r {
            q[i] = series_q(r);
            qp[i] = series_p(r);
            continue;
        }
        while finite && cur_r < r {
            let full = r - cur_r;
            let limit = cap * cur_r;
            let (h, next_r) = if full <= limit { (full, r) } else { (limit, cur_r + limit) };
            if !(h > T::zero()) {
                return Err(OracleError::StepUnderflow(cur_r));
            }
            let k1 = f(cur_r, cur);
            let mid = cur_r + h * half;
            let k2 = f(mid, [cur[0] + h * half * k1[0], cur[1] + h * half * k1[1]]);
            let k3 = f(mid, [cur[0] + h * half * k2[0], cur[1] + h * half * k2[1]]);
            let k4 = f(next_r, [cur[0] + h * k3[0], cur[1] + h * k3[1]]);
            cur[0] = cur[0]
                + h / sixth * (k1[0] + two * k2[0] + two * k3[0] + k4[0]);
            cur[1] = cur[1]
                + h / sixth * (k1[1] + two * k2[1] + two * k3[1] + k4[1]);
            cur_r = next_r;
            finite = cur[0].is_finite() && cur[1].is_finite();
        }
        if !finite {
            return Ok((T::nan(), q, qp));
        }
        q[i] = cur[0];
        qp[i] = cur[1];
    }
    let gap = q[count - 1] - params.mass();
    Ok((gap, q, qp))
}

/// Solves the boundary-value form by shooting: brackets the central density
/// by doubling from the response-free value `m d / sigma_d`, bisects, and
/// polishes with secant steps. The boundary gap of the returned profile is
/// at most `tol * max(1, m)`.
pub fn shoot_solve<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    tol: T,
) -> Result<ShootResult<T>, OracleError<T>> {
    let m = params.mass();
    if !(m > T::zero()) {
        return Err(OracleError::NonpositiveMass);
    }
    let two = lit::<T>(2.0);
    let mut shots = 0usize;

    // Doubling bracket. An attractive response only lowers the boundary
    // value, so the response-free density is the natural floor.
    let mut lo = T::zero();
    let mut g_lo = -m;
    let mut hi = m * params.d() / params.sigma_d();
    let mut g_hi;
    let mut trace = Vec::new();
    loop {
        let (gap, _, _) = shoot_once(params, grid, hi)?;
        shots += 1;
        if !gap.is_finite() {
            return Err(OracleError::Bracket {
                reason: "shot left the finite range",
                trace,
            });
        }
        trace.push(gap);
        g_hi = gap;
        if gap >= T::zero() {
            break;
        }
        if trace.len() >= 60 {
            return Err(OracleError::Bracket {
                reason: "no sign change within the doubling budget",
                trace,
            });
        }
        lo = hi;
        g_lo = gap;
        hi = hi * two;
    }

    let target = tol * m.max(T::one());
    let mut best_a = hi;
    let mut best_gap = g_hi;
    let eps_width = lit::<T>(4.0) * T::epsilon();
    for _ in 0..200 {
        if hi - lo <= eps_width * hi || best_gap.abs() <= target * lit::<T>(0.125) {
            break;
        }
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let (gap, _, _) = shoot_once(params, grid, mid)?;
        shots += 1;
        if !gap.is_finite() {
            return Err(OracleError::Bracket {
                reason: "shot lost finiteness during refinement",
                trace,
            });
        }
        if gap.abs() < best_gap.abs() {
            best_gap = gap;
            best_a = mid;
        }
        if gap >= T::zero() {
            hi = mid;
            g_hi = gap;
        } else {
            lo = mid;
            g_lo = gap;
        }
    }
    for _ in 0..2 {
        let denom = g_hi - g_lo;
        if !(denom > T::zero()) {
            break;
        }
        let cand = hi - g_hi * (hi - lo) / denom;
        if !(cand > lo && cand < hi) {
            break;
        }
        let (gap, _, _) = shoot_once(params, grid, cand)?;
        shots += 1;
        if !gap.is_finite() {
            break;
        }
        if gap.abs() < best_gap.abs() {
            best_gap = gap;
            best_a = cand;
        }
        if gap >= T::zero() {
            hi = cand;
            g_hi = gap;
        } else {
            lo = cand;
            g_lo = gap;
        }
    }

    let (gap, q, qp) = shoot_once(params, grid, best_a)?;
    shots += 1;
    if !(gap.abs() <= target) {
        return Err(OracleError::ToleranceNotReached { tol: target, gap });
    }
    let profile = ProfilePair::new(Arc::clone(grid), q, qp)?;
    Ok(ShootResult { profile, central_density: best_a, shots, bracket: (lo, hi) })
}

/// Node-wise gaps between two profiles on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct ProfileComparison<T> {
    pub sup_q: T,
    pub sup_qprime: T,
    /// Difference measured in the weighted pair norm for dimension `d`.
    pub weighted_pair: T,
}

pub fn compare_profiles<T: Scalar>(
    a: &ProfilePair<T>,
    b: &ProfilePair<T>,
    d: T,
) -> Result<ProfileComparison<T>, ModelError> {
    let diff = a.sub(b)?;
    let sup = |xs: &[T]| xs.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    Ok(ProfileComparison {
        sup_q: sup(diff.q()),
        sup_qprime: sup(diff.qprime()),
        weighted_pair: diff.pair_norm(d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NonlinearitySpec;

    fn silent_response() -> NonlinearitySpec<f64> {
        NonlinearitySpec::tabulated(vec![(0.0, 0.0), (1e6, 0.0)], 1e-12).unwrap()
    }

    #[test]
    fn free_response_reproduces_the_monomial() {
        // With R = 0 the problem is linear and Q = m r^d on the nose.
        let m = 0.1;
        let params = ProblemParams::new(3.0, m, silent_response()).unwrap();
        let grid = RadialGrid::make(256, 1.0f64).unwrap();
        let shot = shoot_solve(&params, &grid, 1e-10).unwrap();
        let free_density = m * 3.0 / params.sigma_d();
        let rel = (shot.central_density - free_density).abs() / free_density;
        assert!(rel <= 1e-8, "central density off by {rel:e}");
        for (i, &r) in grid.nodes().iter().enumerate() {
            let want = m * r * r * r;
            assert!(
                (shot.profile.q()[i] - want).abs() <= 1e-9,
                "node {i}: {} vs {want}",
                shot.profile.q()[i]
            );
            let want_p = 3.0 * m * r * r;
            assert!((shot.profile.qprime()[i] - want_p).abs() <= 1e-8);
        }
    }

    #[test]
    fn reference_shot_lands_on_the_boundary_mass() {
        let m = 0.1;
        let params = ProblemParams::new(3.0, m, NonlinearitySpec::identity()).unwrap();
        let grid = RadialGrid::make(512, 2.0f64).unwrap();
        let shot = shoot_solve(&params, &grid, 1e-10).unwrap();
        let q = shot.profile.q();
        assert!((q[q.len() - 1] - m).abs() <= 1e-10);
        // Attractive response concentrates mass: the matched central
        // density exceeds the response-free one, and the bracket holds it.
        let free_density = m * 3.0 / params.sigma_d();
        assert!(shot.central_density > free_density);
        assert!(shot.bracket.0 <= shot.central_density);
        assert!(shot.central_density <= shot.bracket.1);
        assert!(shot.shots < 300, "spent {} shots", shot.shots);
        // Loading is monotone in radius.
        for w in q.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn central_density_scales_linearly_in_the_weak_limit() {
        let grid = RadialGrid::make(128, 2.0f64).unwrap();
        let density_at = |m: f64| {
            let params = ProblemParams::new(3.0, m, NonlinearitySpec::identity()).unwrap();
            shoot_solve(&params, &grid, 1e-12).unwrap().central_density
        };
        let ratio = density_at(1e-4) / density_at(1e-8);
        assert!((ratio / 1e4 - 1.0).abs() <= 1e-3, "ratio {ratio}");
    }

    #[test]
    fn unreachable_mass_fails_loudly() {
        let params = ProblemParams::new(3.0, 1e6, NonlinearitySpec::identity()).unwrap();
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        match shoot_solve(&params, &grid, 1e-8) {
            Err(OracleError::Bracket { .. }) | Err(OracleError::ToleranceNotReached { .. }) => {}
            other => panic!("expected a bracketing failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_mass_is_rejected() {
        let params = ProblemParams::new(3.0, 0.0, NonlinearitySpec::identity()).unwrap();
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        assert!(matches!(
            shoot_solve(&params, &grid, 1e-8),
            Err(OracleError::NonpositiveMass)
        ));
    }

    #[test]
    fn comparison_separates_components() {
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let base = ProfilePair::from_fns(&grid, |r: f64| r * r * r, |r| 3.0 * r * r).unwrap();
        let same = compare_profiles(&base, &base, 3.0).unwrap();
        assert_eq!(same.sup_q, 0.0);
        assert_eq!(same.sup_qprime, 0.0);
        assert_eq!(same.weighted_pair, 0.0);

        let shifted = ProfilePair::new(
            Arc::clone(&grid),
            base.q().to_vec(),
            base.qprime().iter().map(|&p| p + 0.25).collect(),
        )
        .unwrap();
        let diff = compare_profiles(&base, &shifted, 3.0).unwrap();
        assert_eq!(diff.sup_q, 0.0);
        assert!((diff.sup_qprime - 0.25).abs() < 1e-15);
        assert!((diff.weighted_pair - 0.25).abs() < 1e-15);

        let other = RadialGrid::make(128, 2.0f64).unwrap();
        let rebased = ProfilePair::zero(&other);
        assert!(matches!(
            compare_profiles(&base, &rebased, 3.0),
            Err(ModelError::GridMismatch)
        ));
    }
}
