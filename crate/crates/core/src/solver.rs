//! Picard iteration on the integral map, with stopping diagnostics tied to
//! the contraction certificate when one exists.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::certify::ContractionCertificate;
use crate::model::{ModelError, ProblemParams, ProfilePair, RadialGrid};
use crate::operator::{IntegralOperator, OperatorError};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error)]
pub enum SolverError<T: Scalar> {
    #[error("no convergence after {iterations} iterations; last update {final_update}")]
    NotConverged {
        iterations: usize,
        final_update: T,
        /// Last iterate, so callers can inspect or restart.
        best: Box<ProfilePair<T>>,
    },
    #[error("iterate norm {norm} exceeded the divergence guard {limit} at step {iteration}")]
    Diverged { iteration: usize, norm: T, limit: T },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    /// Stop once the pair norm of an update falls to this.
    pub tol: T,
    pub max_iter: usize,
    /// Starting iterate; the zero profile when absent.
    pub initial: Option<ProfilePair<T>>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions { tol: lit(1e-12), max_iter: 200, initial: None }
    }
}

/// Monotonicity check of the scaled profile `Q(r) r^{2-d}`, which must be
/// nondecreasing for profiles in the physical cone.
#[derive(Debug, Clone, Copy)]
pub struct ConeCheck<T> {
    pub passes: bool,
    /// Most negative forward-difference slope encountered.
    pub min_slope: T,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub profile: ProfilePair<T>,
    pub iterations: usize,
    pub final_update: T,
    /// Geometric mean of successive update ratios; absent for runs that
    /// converge immediately or hit an exact fixed point.
    pub empirical_rate: Option<T>,
    pub residual_sup: T,
    pub cone: ConeCheck<T>,
    pub certificate: ContractionCertificate<T>,
    pub certified: bool,
    /// A-posteriori distance bound `q |update| / (1 - q)`; certified runs only.
    pub posterior_bound: Option<T>,
}

/// First iterate of the map from zero: `Q = m r^d`.
pub fn default_initial<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
) -> ProfilePair<T> {
    let d = params.d();
    let m = params.mass();
    ProfilePair::from_fns(grid, |r| m * r.powf(d), |r| m * d * r.powf(d - T::one()))
        .expect("monomial loading vanishes at the origin")
}

/// Iterates the integral map to a fixed point.
///
/// The divergence guard is ten times the certified radius, or ten times the
/// contraction cap `1/a4` when no certificate exists; an iterate passing it
/// is treated as escaped rather than slow.
pub fn picard_solve<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    options: &SolveOptions<T>,
) -> Result<SolveReport<T>, SolverError<T>> {
    let certificate = ContractionCertificate::build(params);
    let ten = lit::<T>(10.0);
    let limit = match certificate.chosen_rho {
        Some(rho) => ten * rho,
        None => ten / certificate.constants.a4,
    };
    let d = params.d();
    let op = IntegralOperator::new(params, grid);
    let mut current = match &options.initial {
        Some(p) => p.clone(),
        None => ProfilePair::zero(grid),
    };

    let mut first_update: Option<T> = None;
    let mut updates = 0usize;
    let mut final_update = T::infinity();
    let mut converged = false;
    let mut iterations = 0usize;
    while iterations < options.max_iter {
        iterations += 1;
        let next = op.apply(&current)?;
        let delta = next.sub(&current)?.pair_norm(d)?;
        current = next;
        final_update = delta;
        if first_update.is_none() {
            first_update = Some(delta);
        }
        updates += 1;
        if delta <= options.tol {
            converged = true;
            break;
        }
        let norm = current.pair_norm(d)?;
        if norm > limit {
            return Err(SolverError::Diverged { iteration: iterations, norm, limit });
        }
    }
    if !converged {
        return Err(SolverError::NotConverged {
            iterations,
            final_update,
            best: Box::new(current),
        });
    }

    let empirical_rate = match first_update {
        Some(first) if updates >= 2 && first > T::zero() && final_update > T::zero() => {
            let steps = lit::<T>((updates - 1) as f64);
            Some(((final_update.ln() - first.ln()) / steps).exp())
        }
        _ => None,
    };
    let posterior_bound = certificate
        .q_bound
        .map(|q| q * final_update / (T::one() - q));
    let residual_sup = residual_sup(params, &current);
    let cone = cone_check(&current, d);
    let certified = certificate.is_certified();
    Ok(SolveReport {
        profile: current,
        iterations,
        final_update,
        empirical_rate,
        residual_sup,
        cone,
        certificate,
        certified,
        posterior_bound,
    })
}

/// Supremum of the differential-equation defect
/// `-Q'' + (d-1) Q'/r - R(n) Q` over interior nodes, scaled by
/// `max(1, sup |Q|)`. The second derivative comes from a three-point
/// difference of the stored slope, so the two boundary-adjacent nodes on
/// each side are excluded.
pub fn residual_sup<T: Scalar>(params: &ProblemParams<T>, profile: &ProfilePair<T>) -> T {
    let grid = profile.grid();
    let r = grid.nodes();
    let q = profile.q();
    let qp = profile.qprime();
    let n = r.len() - 1;
    let d = params.d();
    let sigma = params.sigma_d();
    let one = T::one();
    let scale = q.iter().fold(T::zero(), |acc, &x| acc.max(x.abs())).max(one);
    let mut sup = T::zero();
    for i in 2..=n.saturating_sub(2) {
        let h1 = r[i] - r[i - 1];
        let h2 = r[i + 1] - r[i];
        let second = -qp[i - 1] * h2 / (h1 * (h1 + h2)) + qp[i] * (h2 - h1) / (h1 * h2)
            + qp[i + 1] * h1 / (h2 * (h1 + h2));
        let density = qp[i] * r[i].powf(one - d) / sigma;
        let defect = -second + (d - one) * qp[i] / r[i]
            - params.nonlinearity().eval(density) * q[i];
        sup = sup.max(defect.abs() / scale);
    }
    sup
}

/// Checks that `Q(r) r^{2-d}` is nondecreasing across the grid, up to a
/// forward-difference slack of `1e-10` times its largest magnitude.
pub fn cone_check<T: Scalar>(profile: &ProfilePair<T>, d: T) -> ConeCheck<T> {
    let r = profile.grid().nodes();
    let q = profile.q();
    let two = lit::<T>(2.0);
    let scaled: Vec<T> =
        (1..r.len()).map(|i| q[i] * r[i].powf(two - d)).collect();
    let magnitude =
        scaled.iter().fold(T::zero(), |acc, &g| acc.max(g.abs()));
    let mut min_slope = T::infinity();
    for i in 0..scaled.len() - 1 {
        let slope = (scaled[i + 1] - scaled[i]) / (r[i + 2] - r[i + 1]);
        min_slope = min_slope.min(slope);
    }
    if !min_slope.is_finite() && scaled.len() < 2 {
        min_slope = T::zero();
    }
    let passes = min_slope >= -lit::<T>(1e-10) * magnitude;
    ConeCheck { passes, min_slope }
}

/// Draws a profile from the cone: `Q = p(r) r^d` with `p` a random
/// degree-five polynomial with nonnegative coefficients, so the scaled
/// profile `Q r^{2-d} = p(r) r^2` is nonnegative and nondecreasing while the
/// central density `d p(0) / sigma_d` stays finite. Draws are rescaled to a
/// uniform fraction of the natural loading norm `m d`.
pub fn sample_cone_profile<T: Scalar>(
    params: &ProblemParams<T>,
    grid: &Arc<RadialGrid<T>>,
    rng: &mut impl Rng,
) -> Result<ProfilePair<T>, ModelError> {
    let coeffs: Vec<T> = (0..6).map(|_| lit::<T>(rng.random_range(0.0..1.0))).collect();
    let poly = |r: T| {
        coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * r + c)
    };
    let poly_slope = |r: T| {
        let mut acc = T::zero();
        for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * r + c * lit::<T>(k as f64);
        }
        acc
    };
    let d = params.d();
    let dm1 = d - T::one();
    let profile = ProfilePair::from_fns(
        grid,
        |r| poly(r) * r.powf(d),
        |r| poly_slope(r) * r.powf(d) + d * poly(r) * r.powf(dm1),
    )?;
    let norm = profile.pair_norm(d)?;
    if norm == T::zero() {
        return Ok(profile);
    }
    let fraction = T::one() - lit::<T>(rng.random_range(0.0..1.0));
    let target = fraction * params.mass() * d;
    Ok(profile.scale(target / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NonlinearitySpec;
    use crate::operator::IntegralOperator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_params(m: f64) -> ProblemParams<f64> {
        ProblemParams::new(3.0, m, NonlinearitySpec::identity()).unwrap()
    }

    #[test]
    fn zero_mass_fixes_the_zero_profile() {
        let params = reference_params(0.0);
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let report = picard_solve(&params, &grid, &SolveOptions::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(report.final_update, 0.0);
        assert!(report.empirical_rate.is_none());
        assert!(report.profile.q().iter().all(|&q| q == 0.0));
        assert!(report.cone.passes);
        assert!(!report.certified);
    }

    #[test]
    fn reference_solve_converges_with_certificate() {
        let params = reference_params(0.1);
        let grid = RadialGrid::make(256, 2.0f64).unwrap();
        let report = picard_solve(&params, &grid, &SolveOptions::default()).unwrap();
        assert!(report.certified);
        assert!(report.final_update <= 1e-12);
        assert!(report.iterations < 60, "iterations {}", report.iterations);
        let rate = report.empirical_rate.unwrap();
        let q = report.certificate.q_bound.unwrap();
        assert!(rate < q, "rate {rate} vs bound {q}");
        assert!(report.posterior_bound.unwrap() < 1e-11);
        assert!(report.cone.passes, "min slope {:e}", report.cone.min_slope);
        // Fixed point dominates the pure loading term.
        let nodes = grid.nodes();
        for (i, &q) in report.profile.q().iter().enumerate() {
            assert!(q >= 0.1 * nodes[i].powi(3) - 1e-12);
        }
    }

    // Frozen reference numbers for the d=3, m=0.1, n=256 run. A failure
    // here means the iteration's arithmetic changed, not that it broke;
    // re-measure before touching the constants.
    #[test]
    fn reference_solve_numbers_are_stable() {
        let params = reference_params(0.1);
        let grid = RadialGrid::make(256, 2.0f64).unwrap();
        let report = picard_solve(&params, &grid, &SolveOptions::default()).unwrap();
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
        assert_eq!(report.iterations, 5);
        assert!(rel(report.final_update, 2.74669176292263728e-13) < 1e-6);
        assert!(rel(report.empirical_rate.unwrap(), 9.78187632460163388e-4) < 1e-9);
        assert!(rel(report.residual_sup, 2.78989221046480051e-7) < 1e-9);
        let central = crate::operator::density(&report.profile, &params).unwrap()[0];
        assert!(rel(central, 2.39303746352342167e-2) < 1e-12, "central density {central:e}");
    }

    #[test]
    fn updates_contract_at_the_certified_rate() {
        let params = reference_params(0.1);
        let grid = RadialGrid::make(128, 2.0f64).unwrap();
        let op = IntegralOperator::new(&params, &grid);
        let cert = ContractionCertificate::build(&params);
        let q_bound = cert.q_bound.unwrap();
        let mut current = ProfilePair::zero(&grid);
        let mut previous_delta: Option<f64> = None;
        for _ in 0..12 {
            let next = op.apply(&current).unwrap();
            let delta = next.sub(&current).unwrap().pair_norm(3.0).unwrap();
            if let Some(prev) = previous_delta {
                assert!(delta <= prev * q_bound * (1.0 + 1e-9), "{delta} vs {prev}");
            }
            previous_delta = Some(delta);
            current = next;
        }
    }

    #[test]
    fn runaway_mass_trips_the_divergence_guard() {
        let params = reference_params(100.0);
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let err = picard_solve(&params, &grid, &SolveOptions::default()).unwrap_err();
        match err {
            SolverError::Diverged { iteration, norm, limit } => {
                assert_eq!(iteration, 1);
                assert!(norm > limit);
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn iteration_budget_is_respected() {
        let params = reference_params(0.1);
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let options = SolveOptions { tol: 1e-30, max_iter: 2, initial: None };
        let err = picard_solve(&params, &grid, &options).unwrap_err();
        match err {
            SolverError::NotConverged { iterations, final_update, best } => {
                assert_eq!(iterations, 2);
                assert!(final_update > 0.0);
                assert_eq!(best.q()[0], 0.0);
            }
            other => panic!("expected iteration exhaustion, got {other}"),
        }
    }

    #[test]
    fn monomial_defect_is_the_loading_response() {
        // For Q = m r^3 in three dimensions the differential terms cancel
        // and the defect is exactly R(md/sigma) Q = (md/sigma) m r^3.
        let m = 0.1;
        let params = reference_params(m);
        let grid = RadialGrid::make(128, 1.0f64).unwrap();
        let profile = default_initial(&params, &grid);
        let got = residual_sup(&params, &profile);
        let nodes = grid.nodes();
        let want = m * m * 3.0 / params.sigma_d() * nodes[nodes.len() - 3].powi(3);
        assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn cone_check_classifies_shapes() {
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let flat = ProfilePair::from_fns(&grid, |r: f64| r, |_| 1.0).unwrap();
        assert!(cone_check(&flat, 3.0).passes);

        let monomial =
            ProfilePair::from_fns(&grid, |r: f64| r * r * r, |r| 3.0 * r * r).unwrap();
        assert!(cone_check(&monomial, 3.0).passes);

        let sagging =
            ProfilePair::from_fns(&grid, |r: f64| (1.0 - r) * r, |r| 1.0 - 2.0 * r).unwrap();
        let check = cone_check(&sagging, 3.0);
        assert!(!check.passes);
        assert!(check.min_slope < -0.5);
    }

    #[test]
    fn cone_draws_stay_in_the_cone() {
        let params = reference_params(1.0);
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let draw = sample_cone_profile(&params, &grid, &mut rng).unwrap();
            let check = cone_check(&draw, 3.0);
            assert!(check.passes, "trial {trial}: min slope {:e}", check.min_slope);
            let norm = draw.pair_norm(3.0).unwrap();
            assert!(norm <= 3.0 * (1.0 + 1e-12), "trial {trial}: norm {norm}");
        }
    }
}
