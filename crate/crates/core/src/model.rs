//! Problem data and the discrete solution space.
//!
//! A stationary profile is tracked through the cumulated-mass variable
//! `Q(r) = sigma_d * integral_0^r n(s) s^{d-1} ds` on the unit ball, so the
//! boundary conditions are `Q(0) = 0` and `Q(1) = m`. Profiles live in the
//! weighted space with norms
//!
//! ```text
//! |Q|_alpha  = sup_{0 < r <= 1} |Q(r) r^alpha|          (alpha <= 0)
//! ||Q||      = max{ |Q|_{2-d}, |Q'|_{3-d} }
//! ```
//!
//! discretized as maxima over the interior nodes of a graded radial grid.

use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{approx64, gamma, lit, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension must exceed 2, got {0}")]
    DimensionTooSmall(f64),
    #[error("mass must be nonnegative, got {0}")]
    NegativeMass(f64),
    #[error("saturation scale must be positive, got {0}")]
    BadScale(f64),
    #[error("Lipschitz constant must be positive, got {0}")]
    NonpositiveLipschitz(f64),
    #[error("declared Lipschitz constant {declared} is below the table's steepest slope {steepest}")]
    LipschitzBelowSlope { declared: f64, steepest: f64 },
    #[error("nonlinearity must vanish at zero, got R(0) = {0}")]
    NonzeroAtOrigin(f64),
    #[error("invalid nonlinearity table: {0}")]
    BadTable(String),
    #[error("grid needs at least 16 intervals, got {0}")]
    GridTooCoarse(usize),
    #[error("grading exponent must be at least 1, got {0}")]
    BadGrading(f64),
    #[error("quadrature weights failed the unit-integral check: sum = {0}")]
    BadWeights(f64),
    #[error("weight exponent must be nonpositive, got {0}")]
    PositiveAlpha(f64),
    #[error("non-finite {which} sample at node {node}")]
    NonFiniteSample { which: &'static str, node: usize },
    #[error("profile must vanish at the origin, got Q(0) = {0}")]
    NonzeroOrigin(f64),
    #[error("sample count {got} does not match the grid's {want} nodes")]
    LengthMismatch { got: usize, want: usize },
    #[error("profiles live on different grids")]
    GridMismatch,
}

/// Surface measure of the unit sphere in dimension `d`:
/// `sigma_d = 2 pi^{d/2} / Gamma(d/2)`.
///
/// Rejects `d <= 2`; the kernel constants and the weighted norms all
/// degenerate at the plane.
pub fn sphere_measure<T: Scalar>(d: T) -> Result<T, ModelError> {
    if !(d > lit::<T>(2.0)) {
        return Err(ModelError::DimensionTooSmall(approx64(d)));
    }
    let half_d = d / lit::<T>(2.0);
    Ok(lit::<T>(2.0) * T::PI().powf(half_d) / gamma(half_d))
}

/// Shape of the local response `R` applied to the density.
#[derive(Debug, Clone)]
pub enum NonlinearityKind<T> {
    /// `R(z) = z`.
    Identity,
    /// `R(z) = z / (1 + z/scale)` for `z >= 0`, extended oddly.
    Saturating { scale: T },
    /// Piecewise-linear interpolation of `(z, R(z))` samples with
    /// `z >= 0`, extended oddly and clamped beyond the last sample.
    Tabulated { points: Vec<(T, T)> },
}

/// A response function together with the Lipschitz constant the
/// certification estimates are allowed to use.
///
/// Every admissible response is odd, vanishes at zero, and is globally
/// Lipschitz; negative arguments are evaluated through `R(-z) = -R(z)`.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec<T> {
    kind: NonlinearityKind<T>,
    lipschitz: T,
}

impl<T: Scalar> NonlinearitySpec<T> {
    /// The identity response; its sharp Lipschitz constant is 1.
    pub fn identity() -> Self {
        NonlinearitySpec { kind: NonlinearityKind::Identity, lipschitz: T::one() }
    }

    /// Saturating response `z / (1 + z/scale)`. Its slope at the origin is 1
    /// and decays monotonically, so the Lipschitz constant is 1.
    pub fn saturating(scale: T) -> Result<Self, ModelError> {
        if !(scale > T::zero()) {
            return Err(ModelError::BadScale(approx64(scale)));
        }
        Ok(NonlinearitySpec { kind: NonlinearityKind::Saturating { scale }, lipschitz: T::one() })
    }

    /// Tabulated response. The table must be sorted with strictly increasing
    /// nonnegative abscissae, interpolate 0 at 0, and the declared constant
    /// must dominate the steepest adjacent slope.
    pub fn tabulated(points: Vec<(T, T)>, lipschitz: T) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::BadTable("need at least two samples".into()));
        }
        for (i, &(z, v)) in points.iter().enumerate() {
            if !z.is_finite() || !v.is_finite() {
                return Err(ModelError::BadTable(format!("non-finite sample at row {i}")));
            }
            if z < T::zero() {
                return Err(ModelError::BadTable(format!(
                    "abscissa {} at row {i} is negative; negative arguments come from the odd extension",
                    approx64(z)
                )));
            }
            if i > 0 && z <= points[i - 1].0 {
                return Err(ModelError::BadTable(format!(
                    "abscissae must be strictly increasing, violated at row {i}"
                )));
            }
        }
        if !(lipschitz > T::zero()) {
            return Err(ModelError::NonpositiveLipschitz(approx64(lipschitz)));
        }
        let mut steepest = T::zero();
        for w in points.windows(2) {
            let slope = ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs();
            steepest = steepest.max(slope);
        }
        if lipschitz < steepest {
            return Err(ModelError::LipschitzBelowSlope {
                declared: approx64(lipschitz),
                steepest: approx64(steepest),
            });
        }
        let spec = NonlinearitySpec { kind: NonlinearityKind::Tabulated { points }, lipschitz };
        // R(0) = 0 is checked by evaluation, not by trusting the table shape.
        let at_zero = spec.eval(T::zero());
        if at_zero != T::zero() {
            return Err(ModelError::NonzeroAtOrigin(approx64(at_zero)));
        }
        Ok(spec)
    }

    pub fn kind(&self) -> &NonlinearityKind<T> {
        &self.kind
    }

    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }

    /// Evaluates the response, odd-extending to negative arguments.
    pub fn eval(&self, z: T) -> T {
        if z < T::zero() {
            return -self.eval_nonneg(-z);
        }
        self.eval_nonneg(z)
    }

    fn eval_nonneg(&self, z: T) -> T {
        match &self.kind {
            NonlinearityKind::Identity => z,
            NonlinearityKind::Saturating { scale } => z / (T::one() + z / *scale),
            NonlinearityKind::Tabulated { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if z <= first.0 {
                    // Constant continuation below the first sample keeps the
                    // declared Lipschitz constant valid on all of [0, inf).
                    return first.1;
                }
                if z >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|&(x, _)| x <= z) - 1;
                let (z0, v0) = points[k];
                let (z1, v1) = points[k + 1];
                v0 + (v1 - v0) * (z - z0) / (z1 - z0)
            }
        }
    }
}

/// Validated problem data: dimension, boundary mass, response, and the
/// derived sphere measure.
///
/// The temperature enters the underlying system only as a scale factor and
/// is pinned to 1 throughout; it is carried for bookkeeping, never varied.
#[derive(Debug, Clone)]
pub struct ProblemParams<T> {
    d: T,
    m: T,
    nonlinearity: NonlinearitySpec<T>,
    theta: T,
    sigma_d: T,
}

impl<T: Scalar> ProblemParams<T> {
    /// Builds parameters, rejecting `d <= 2` and negative mass.
    ///
    /// Zero mass is accepted as a degenerate configuration (the fixed point
    /// is identically zero); the certification path treats it as
    /// uncertifiable and the command-line front end refuses it outright.
    pub fn new(d: T, m: T, nonlinearity: NonlinearitySpec<T>) -> Result<Self, ModelError> {
        let sigma_d = sphere_measure(d)?;
        if !(m >= T::zero()) {
            return Err(ModelError::NegativeMass(approx64(m)));
        }
        Ok(ProblemParams { d, m, nonlinearity, theta: T::one(), sigma_d })
    }

    /// Same problem with a different boundary mass.
    pub fn with_mass(&self, m: T) -> Result<Self, ModelError> {
        ProblemParams::new(self.d, m, self.nonlinearity.clone())
    }

    pub fn d(&self) -> T {
        self.d
    }

    pub fn mass(&self) -> T {
        self.m
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec<T> {
        &self.nonlinearity
    }

    pub fn lipschitz(&self) -> T {
        self.nonlinearity.lipschitz()
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn sigma_d(&self) -> T {
        self.sigma_d
    }
}

/// Graded radial mesh `r_i = (i/N)^gamma` on `[0, 1]` with composite
/// trapezoid weights.
///
/// The grading concentrates nodes near the origin where the weighted norms
/// probe the profiles hardest. Weights are nonnegative and integrate the
/// constant 1 exactly up to rounding; construction verifies that.
#[derive(Debug)]
pub struct RadialGrid<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    grading: T,
}

impl<T: Scalar> RadialGrid<T> {
    /// Builds the grid with `n >= 16` intervals and grading exponent
    /// `grading >= 1` (1 means uniform).
    pub fn make(n: usize, grading: T) -> Result<Arc<Self>, ModelError> {
        if n < 16 {
            return Err(ModelError::GridTooCoarse(n));
        }
        if !(grading >= T::one()) {
            return Err(ModelError::BadGrading(approx64(grading)));
        }
        let mut nodes = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let frac = lit::<T>(i as f64 / n as f64);
            nodes.push(frac.powf(grading));
        }
        let half = lit::<T>(0.5);
        let mut weights = Vec::with_capacity(n + 1);
        weights.push((nodes[1] - nodes[0]) * half);
        for i in 1..n {
            weights.push((nodes[i + 1] - nodes[i - 1]) * half);
        }
        weights.push((nodes[n] - nodes[n - 1]) * half);

        let grid = RadialGrid { nodes, weights, grading };
        let sum = grid.integrate_with(|_| T::one());
        // The telescoping trapezoid sum reproduces the interval length; allow
        // a few dozen ulps for the compensated accumulation.
        if (sum - T::one()).abs() > lit::<T>(64.0) * T::epsilon() {
            return Err(ModelError::BadWeights(approx64(sum)));
        }
        Ok(Arc::new(grid))
    }

    /// Number of intervals `N` (the grid has `N + 1` nodes).
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn grading(&self) -> T {
        self.grading
    }

    /// Trapezoid quadrature of nodal samples over `[0, 1]`.
    pub fn integrate(&self, samples: &[T]) -> T {
        debug_assert_eq!(samples.len(), self.nodes.len());
        self.integrate_with(|i| samples[i])
    }

    /// Compensated left-to-right weighted sum; the compensation keeps the
    /// unit-integral check meaningful at large `N`.
    fn integrate_with(&self, f: impl Fn(usize) -> T) -> T {
        let mut sum = T::zero();
        let mut carry = T::zero();
        for (i, &w) in self.weights.iter().enumerate() {
            let term = w * f(i) - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
        }
        sum
    }
}

/// Which member of a profile pair a norm applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Value,
    Derivative,
}

/// Nodal samples of a profile and its radial derivative on a shared grid.
///
/// The pair is the discrete state of the fixed-point iteration: the
/// derivative is tracked explicitly rather than re-derived from the values,
/// because the operator produces both and the norms weigh them differently.
#[derive(Debug, Clone)]
pub struct ProfilePair<T> {
    grid: Arc<RadialGrid<T>>,
    q: Vec<T>,
    qprime: Vec<T>,
}

impl<T: Scalar> ProfilePair<T> {
    /// Wraps samples, requiring matching lengths and `Q(0) = 0`.
    pub fn new(grid: Arc<RadialGrid<T>>, q: Vec<T>, qprime: Vec<T>) -> Result<Self, ModelError> {
        let want = grid.nodes().len();
        if q.len() != want {
            return Err(ModelError::LengthMismatch { got: q.len(), want });
        }
        if qprime.len() != want {
            return Err(ModelError::LengthMismatch { got: qprime.len(), want });
        }
        if q[0] != T::zero() {
            return Err(ModelError::NonzeroOrigin(approx64(q[0])));
        }
        Ok(ProfilePair { grid, q, qprime })
    }

    /// Samples closed-form value and derivative functions on the grid.
    pub fn from_fns(
        grid: &Arc<RadialGrid<T>>,
        value: impl Fn(T) -> T,
        derivative: impl Fn(T) -> T,
    ) -> Result<Self, ModelError> {
        let q = grid.nodes().iter().map(|&r| value(r)).collect();
        let qprime = grid.nodes().iter().map(|&r| derivative(r)).collect();
        ProfilePair::new(Arc::clone(grid), q, qprime)
    }

    /// The zero profile.
    pub fn zero(grid: &Arc<RadialGrid<T>>) -> Self {
        let n = grid.nodes().len();
        ProfilePair { grid: Arc::clone(grid), q: vec![T::zero(); n], qprime: vec![T::zero(); n] }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn qprime(&self) -> &[T] {
        &self.qprime
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.nodes() == other.grid.nodes()
    }

    /// Weighted sup norm `max_i |x_i * r_i^alpha|` over the interior nodes
    /// `i = 1..N`; the origin node is excluded because the weight is the
    /// continuum limit there. Requires `alpha <= 0`.
    pub fn weighted_norm(&self, alpha: T, which: Component) -> Result<T, ModelError> {
        if !(alpha <= T::zero()) {
            return Err(ModelError::PositiveAlpha(approx64(alpha)));
        }
        let (samples, name) = match which {
            Component::Value => (&self.q, "value"),
            Component::Derivative => (&self.qprime, "derivative"),
        };
        let mut best = T::zero();
        for (i, (&x, &r)) in samples.iter().zip(self.grid.nodes()).enumerate().skip(1) {
            if !x.is_finite() {
                return Err(ModelError::NonFiniteSample { which: name, node: i });
            }
            best = best.max((x * r.powf(alpha)).abs());
        }
        Ok(best)
    }

    /// Pair norm `max{ |Q|_{2-d}, |Q'|_{3-d} }` of the solution space.
    pub fn pair_norm(&self, d: T) -> Result<T, ModelError> {
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let value = self.weighted_norm(two - d, Component::Value)?;
        let deriv = self.weighted_norm(three - d, Component::Derivative)?;
        Ok(value.max(deriv))
    }

    /// Node-wise difference of two profiles on the same grid.
    pub fn sub(&self, other: &Self) -> Result<Self, ModelError> {
        if !self.same_grid(other) {
            return Err(ModelError::GridMismatch);
        }
        let q = self.q.iter().zip(&other.q).map(|(&a, &b)| a - b).collect();
        let qprime = self.qprime.iter().zip(&other.qprime).map(|(&a, &b)| a - b).collect();
        Ok(ProfilePair { grid: Arc::clone(&self.grid), q, qprime })
    }

    /// Node-wise sum of two profiles on the same grid.
    pub fn add(&self, other: &Self) -> Result<Self, ModelError> {
        if !self.same_grid(other) {
            return Err(ModelError::GridMismatch);
        }
        let q = self.q.iter().zip(&other.q).map(|(&a, &b)| a + b).collect();
        let qprime = self.qprime.iter().zip(&other.qprime).map(|(&a, &b)| a + b).collect();
        Ok(ProfilePair { grid: Arc::clone(&self.grid), q, qprime })
    }

    /// Profile scaled by a constant.
    pub fn scale(&self, c: T) -> Self {
        ProfilePair {
            grid: Arc::clone(&self.grid),
            q: self.q.iter().map(|&x| c * x).collect(),
            qprime: self.qprime.iter().map(|&x| c * x).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    fn rel_close(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol * want.abs().max(1.0)
    }

    /// Independent gamma for half-integer arguments, by the recurrence from
    /// Gamma(1/2) = sqrt(pi) and Gamma(1) = 1. Used to cross-check the
    /// Lanczos-based sphere measure.
    fn gamma_half_steps(x: f64) -> f64 {
        assert!((2.0 * x).fract() == 0.0 && x > 0.0);
        let mut arg = if (x * 2.0) as u64 % 2 == 1 { 0.5 } else { 1.0 };
        let mut val = if arg == 0.5 { PI.sqrt() } else { 1.0 };
        while arg + 0.5 <= x {
            val *= arg;
            arg += 1.0;
        }
        val
    }

    fn independent_sphere_measure(d: f64) -> f64 {
        2.0 * PI.powf(d / 2.0) / gamma_half_steps(d / 2.0)
    }

    #[test]
    fn sphere_measure_in_three_dimensions() {
        let got: f64 = sphere_measure(3.0).unwrap();
        assert!(rel_close(got, 4.0 * PI, 1e-14), "got {got}");
    }

    #[test]
    fn sphere_measure_in_four_dimensions() {
        let got: f64 = sphere_measure(4.0).unwrap();
        assert!(rel_close(got, 2.0 * PI * PI, 1e-14), "got {got}");
    }

    #[test]
    fn sphere_measure_in_five_dimensions() {
        let got: f64 = sphere_measure(5.0).unwrap();
        let want = independent_sphere_measure(5.0);
        assert!(rel_close(want, 8.0 * PI * PI / 3.0, 1e-14));
        assert!(rel_close(got, want, 1e-13), "got {got}, want {want}");
    }

    #[test]
    fn sphere_measure_rejects_low_dimensions() {
        assert!(matches!(sphere_measure(2.0f64), Err(ModelError::DimensionTooSmall(_))));
        assert!(matches!(sphere_measure(1.5f64), Err(ModelError::DimensionTooSmall(_))));
        assert!(matches!(sphere_measure(f64::NAN), Err(ModelError::DimensionTooSmall(_))));
    }

    #[test]
    fn sphere_measure_recurrence() {
        // sigma_{d+2} = sigma_d * 2 pi / d, a consequence of the gamma
        // recurrence; checked across the tested dimension range.
        for d in [3.0f64, 4.0, 5.0, 6.0] {
            let lhs: f64 = sphere_measure(d + 2.0).unwrap();
            let rhs = sphere_measure(d).unwrap() * 2.0 * PI / d;
            assert!(rel_close(lhs, rhs, 1e-13), "d = {d}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn params_reject_bad_inputs() {
        let nl = NonlinearitySpec::identity();
        assert!(matches!(
            ProblemParams::new(2.0f64, 0.1, nl.clone()),
            Err(ModelError::DimensionTooSmall(_))
        ));
        assert!(matches!(
            ProblemParams::new(3.0f64, -1.0, nl.clone()),
            Err(ModelError::NegativeMass(_))
        ));
        // Zero mass is degenerate but constructible.
        assert!(ProblemParams::new(3.0f64, 0.0, nl).is_ok());
    }

    #[test]
    fn params_fix_theta_at_one() {
        let p = ProblemParams::new(3.0f64, 0.1, NonlinearitySpec::identity()).unwrap();
        assert_eq!(p.theta(), 1.0);
        assert!(rel_close(p.sigma_d(), 4.0 * PI, 1e-14));
    }

    #[test]
    fn saturating_response_shape() {
        let nl = NonlinearitySpec::saturating(2.0f64).unwrap();
        assert_eq!(nl.lipschitz(), 1.0);
        assert_eq!(nl.eval(0.0), 0.0);
        assert!(rel_close(nl.eval(2.0), 1.0, 1e-15));
        // Odd extension, not the raw formula (which has a pole at z = -scale).
        assert!(rel_close(nl.eval(-2.0), -1.0, 1e-15));
        assert!(nl.eval(1e12) < 2.0);
        assert!(matches!(NonlinearitySpec::saturating(0.0f64), Err(ModelError::BadScale(_))));
    }

    #[test]
    fn tabulated_response_interpolates() {
        let nl = NonlinearitySpec::tabulated(vec![(0.0f64, 0.0), (1.0, 0.5), (2.0, 0.6)], 0.5)
            .unwrap();
        assert_eq!(nl.eval(0.0), 0.0);
        assert!(rel_close(nl.eval(0.5), 0.25, 1e-15));
        assert!(rel_close(nl.eval(1.5), 0.55, 1e-15));
        // Clamped beyond the last sample, odd below zero.
        assert_eq!(nl.eval(5.0), 0.6);
        assert!(rel_close(nl.eval(-0.5), -0.25, 1e-15));
    }

    #[test]
    fn tabulated_response_validation() {
        // Declared constant below the steepest slope.
        assert!(matches!(
            NonlinearitySpec::tabulated(vec![(0.0f64, 0.0), (1.0, 0.5)], 0.4),
            Err(ModelError::LipschitzBelowSlope { .. })
        ));
        // R(0) != 0 surfaces through evaluation.
        assert!(matches!(
            NonlinearitySpec::tabulated(vec![(0.0f64, 0.25), (1.0, 0.5)], 1.0),
            Err(ModelError::NonzeroAtOrigin(_))
        ));
        // Unsorted abscissae.
        assert!(matches!(
            NonlinearitySpec::tabulated(vec![(1.0f64, 0.5), (0.0, 0.0)], 1.0),
            Err(ModelError::BadTable(_))
        ));
        // The zero table is admissible with any positive declared constant.
        let zero = NonlinearitySpec::tabulated(vec![(0.0f64, 0.0), (1.0, 0.0)], 1e-9).unwrap();
        assert_eq!(zero.eval(0.7), 0.0);
    }

    #[test]
    fn uniform_grid_weights() {
        let grid = RadialGrid::make(16, 1.0f64).unwrap();
        let h = 1.0 / 16.0;
        assert_eq!(grid.weights()[0], h / 2.0);
        assert_eq!(grid.weights()[16], h / 2.0);
        for i in 1..16 {
            assert_eq!(grid.weights()[i], h, "weight {i}");
        }
    }

    #[test]
    fn graded_grid_first_node() {
        let grid = RadialGrid::make(16, 2.0f64).unwrap();
        assert_eq!(grid.nodes()[1], 1.0 / 256.0);
        assert_eq!(grid.nodes()[0], 0.0);
        assert_eq!(grid.nodes()[16], 1.0);
    }

    #[test]
    fn grid_weights_integrate_one() {
        for (n, gamma) in [(16usize, 1.0f64), (100, 1.5), (512, 2.0), (2048, 2.0), (4096, 2.0)] {
            let grid = RadialGrid::make(n, gamma).unwrap();
            let ones = vec![1.0; n + 1];
            let sum = grid.integrate(&ones);
            assert!((sum - 1.0).abs() <= 1e-14, "n={n} gamma={gamma}: sum={sum:.17e}");
            assert!(grid.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn grid_integrates_linear_functions_exactly() {
        // Trapezoid weights are exact on polynomials of degree 1 regardless
        // of the mesh, so integral of (a + b r) must come out to a + b/2.
        let grid = RadialGrid::make(200, 1.7f64).unwrap();
        for (a, b) in [(1.0f64, 0.0), (0.0, 1.0), (2.5, -3.0)] {
            let samples: Vec<f64> = grid.nodes().iter().map(|&r| a + b * r).collect();
            let got = grid.integrate(&samples);
            let want = a + b / 2.0;
            assert!((got - want).abs() <= 1e-13, "(a,b)=({a},{b}): {got} vs {want}");
        }
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(matches!(RadialGrid::make(15, 2.0f64), Err(ModelError::GridTooCoarse(15))));
        assert!(matches!(RadialGrid::make(64, 0.5f64), Err(ModelError::BadGrading(_))));
    }

    #[test]
    fn profile_construction_invariants() {
        let grid = RadialGrid::make(16, 2.0f64).unwrap();
        let n = grid.nodes().len();
        assert!(matches!(
            ProfilePair::new(Arc::clone(&grid), vec![0.0; n - 1], vec![0.0; n]),
            Err(ModelError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ProfilePair::new(Arc::clone(&grid), vec![0.5; n], vec![0.0; n]),
            Err(ModelError::NonzeroOrigin(_))
        ));
        assert!(ProfilePair::new(grid, vec![0.0; n], vec![0.0; n]).is_ok());
    }

    #[test]
    fn weighted_norm_of_pure_power() {
        // Q = r^{d-2} has |Q|_{2-d} = sup r^{d-2} r^{2-d} = 1 exactly.
        for d in [3.0f64, 4.0, 5.0] {
            let grid = RadialGrid::make(64, 2.0f64).unwrap();
            let p = ProfilePair::from_fns(&grid, |r| r.powf(d - 2.0), |r| {
                (d - 2.0) * r.powf(d - 3.0)
            })
            .unwrap();
            let norm = p.weighted_norm(2.0 - d, Component::Value).unwrap();
            assert!(rel_close(norm, 1.0, 1e-14), "d={d}: {norm}");
        }
    }

    #[test]
    fn weighted_norm_attains_discrete_max() {
        // d = 3, Q = r(1-r), alpha = -1: the weighted samples are 1 - r_i,
        // maximized at the first interior node.
        let grid = RadialGrid::make(32, 2.0f64).unwrap();
        let p = ProfilePair::from_fns(&grid, |r| r * (1.0 - r), |r| 1.0 - 2.0 * r).unwrap();
        let norm = p.weighted_norm(-1.0f64, Component::Value).unwrap();
        let brute = grid
            .nodes()
            .iter()
            .skip(1)
            .map(|&r| (r * (1.0 - r) / r).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(norm, brute);
        assert!(rel_close(norm, 1.0 - grid.nodes()[1], 1e-15));
    }

    #[test]
    fn weighted_norm_rejects_bad_inputs() {
        let grid = RadialGrid::make(16, 1.0f64).unwrap();
        let p = ProfilePair::zero(&grid);
        assert!(matches!(
            p.weighted_norm(0.5f64, Component::Value),
            Err(ModelError::PositiveAlpha(_))
        ));
        let n = grid.nodes().len();
        let mut q = vec![0.0f64; n];
        q[3] = f64::NAN;
        let bad = ProfilePair::new(Arc::clone(&grid), q, vec![0.0; n]).unwrap();
        match bad.weighted_norm(0.0, Component::Value) {
            Err(ModelError::NonFiniteSample { node, .. }) => assert_eq!(node, 3),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn pair_norm_of_monomial_profile() {
        // d = 3, Q = m r^3: |Q|_{-1} = m, |Q'|_0 = 3m, so the pair norm is 3m.
        let m = 0.1f64;
        let grid = RadialGrid::make(64, 2.0f64).unwrap();
        let p = ProfilePair::from_fns(&grid, |r| m * r.powi(3), |r| 3.0 * m * r * r).unwrap();
        let norm = p.pair_norm(3.0).unwrap();
        assert!(rel_close(norm, 3.0 * m, 1e-14), "{norm}");
        assert_eq!(ProfilePair::zero(&grid).pair_norm(3.0).unwrap(), 0.0);
    }

    #[test]
    fn pair_norm_dominates_value_norm() {
        let grid = RadialGrid::make(32, 1.0f64).unwrap();
        let p = ProfilePair::from_fns(&grid, |r| r * (1.0 - r), |r| 1.0 - 2.0 * r).unwrap();
        let d = 3.0f64;
        let value = p.weighted_norm(2.0 - d, Component::Value).unwrap();
        assert!(p.pair_norm(d).unwrap() >= value);
    }

    #[test]
    fn profile_difference_requires_matching_grids() {
        let g1 = RadialGrid::make(16, 1.0f64).unwrap();
        let g2 = RadialGrid::make(32, 1.0f64).unwrap();
        let a = ProfilePair::zero(&g1);
        let b = ProfilePair::zero(&g2);
        assert!(matches!(a.sub(&b), Err(ModelError::GridMismatch)));
        // Equal nodes on distinct allocations still count as the same grid.
        let g3 = RadialGrid::make(16, 1.0f64).unwrap();
        assert!(a.sub(&ProfilePair::zero(&g3)).is_ok());
    }

    proptest! {
        #[test]
        fn weighted_norm_is_homogeneous(
            values in proptest::collection::vec(-1e6f64..1e6, 17),
            c in -50.0f64..50.0,
        ) {
            let grid = RadialGrid::make(16, 1.5f64).unwrap();
            let mut q = values;
            q[0] = 0.0;
            let p = ProfilePair::new(Arc::clone(&grid), q, vec![0.0; 17]).unwrap();
            let base = p.weighted_norm(-1.0, Component::Value).unwrap();
            let scaled = p.scale(c).weighted_norm(-1.0, Component::Value).unwrap();
            let want = c.abs() * base;
            prop_assert!((scaled - want).abs() <= 1e-12 * want.max(1.0));
        }

        #[test]
        fn pair_norm_satisfies_triangle_inequality(
            qa in proptest::collection::vec(-1e3f64..1e3, 17),
            qb in proptest::collection::vec(-1e3f64..1e3, 17),
            pa in proptest::collection::vec(-1e3f64..1e3, 17),
            pb in proptest::collection::vec(-1e3f64..1e3, 17),
        ) {
            let grid = RadialGrid::make(16, 2.0f64).unwrap();
            let (mut qa, mut qb) = (qa, qb);
            qa[0] = 0.0;
            qb[0] = 0.0;
            let a = ProfilePair::new(Arc::clone(&grid), qa, pa).unwrap();
            let b = ProfilePair::new(Arc::clone(&grid), qb, pb).unwrap();
            let d = 3.0;
            let sum = a.add(&b).unwrap().pair_norm(d).unwrap();
            let bound = a.pair_norm(d).unwrap() + b.pair_norm(d).unwrap();
            prop_assert!(sum <= bound + 1e-9 * bound.max(1.0));
        }
    }
}
