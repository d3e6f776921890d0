//! The nonlocal fixed-point map and its Green kernel.
//!
//! Stationary profiles are fixed points of
//!
//! ```text
//! (T Q)(r) = m r^d + (1/d) * integral_0^1 R(Q'(s) s^{1-d} / sigma_d)
//!                                * s^{1-d} Q(s) G(r, s) ds
//! ```
//!
//! where the kernel `G(r, s) = r^d (1 - s^d)` for `s > r` (arguments swap on
//! the other side of the diagonal) inverts the radial part of the Laplacian
//! under the boundary conditions `Q(0) = 0`, `Q(1) = m`. The quadrature is
//! composite trapezoid on the profile's own grid, accumulated strictly left
//! to right so repeated runs are bit-identical.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{ModelError, ProblemParams, ProfilePair, RadialGrid};
use crate::scalar::{approx64, lit, Scalar};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("kernel argument {name} = {value} lies outside [0, 1]")]
    OutOfDomain { name: &'static str, value: f64 },
    #[error("non-finite {stage} at node {node}")]
    NonFinite { stage: &'static str, node: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_unit_interval<T: Scalar>(name: &'static str, x: T) -> Result<(), OperatorError> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(OperatorError::OutOfDomain { name, value: approx64(x) })
    }
}

/// Green kernel of the radial operator on the unit ball:
/// `G(r, s) = r^d (1 - s^d)` for `s >= r`, and symmetrically
/// `s^d (1 - r^d)` for `s < r`. Vanishes whenever either argument hits the
/// boundary, and is continuous across the diagonal.
pub fn green<T: Scalar>(r: T, s: T, d: T) -> Result<T, OperatorError> {
    check_unit_interval("r", r)?;
    check_unit_interval("s", s)?;
    Ok(green_raw(r, s, d))
}

#[inline]
fn green_raw<T: Scalar>(r: T, s: T, d: T) -> T {
    if r <= s {
        r.powf(d) * (T::one() - s.powf(d))
    } else {
        s.powf(d) * (T::one() - r.powf(d))
    }
}

/// Radial derivative of the kernel in its first argument:
/// `d r^{d-1} (1 - s^d)` for `r < s` and `-d s^d r^{d-1}` for `r > s`.
/// On the diagonal the `s > r` branch is used, matching the one-sided
/// derivative the operator needs there.
pub fn green_dr<T: Scalar>(r: T, s: T, d: T) -> Result<T, OperatorError> {
    check_unit_interval("r", r)?;
    check_unit_interval("s", s)?;
    Ok(green_dr_raw(r, s, d))
}

#[inline]
fn green_dr_raw<T: Scalar>(r: T, s: T, d: T) -> T {
    let slope = d * r.powf(d - T::one());
    if r <= s {
        slope * (T::one() - s.powf(d))
    } else {
        -slope * s.powf(d)
    }
}

/// The fixed-point map `T` discretized on one grid.
///
/// Construction precomputes the node powers the kernel needs, so repeated
/// applications during an iteration only do multiply-adds in the inner loop.
pub struct IntegralOperator<T> {
    params: ProblemParams<T>,
    grid: Arc<RadialGrid<T>>,
    /// `r_i^d`
    pow_d: Vec<T>,
    /// `r_i^{d-1}`
    pow_dm1: Vec<T>,
    /// `r_i^{1-d}` for `i >= 1`; the origin entry is unused and kept zero.
    pow_1md: Vec<T>,
}

impl<T: Scalar> IntegralOperator<T> {
    pub fn new(params: &ProblemParams<T>, grid: &Arc<RadialGrid<T>>) -> Self {
        let d = params.d();
        let nodes = grid.nodes();
        let mut pow_d = Vec::with_capacity(nodes.len());
        let mut pow_dm1 = Vec::with_capacity(nodes.len());
        let mut pow_1md = vec![T::zero(); nodes.len()];
        for (i, &r) in nodes.iter().enumerate() {
            let rd1 = r.powf(d - T::one());
            pow_dm1.push(rd1);
            pow_d.push(rd1 * r);
            if i > 0 {
                pow_1md[i] = r.powf(T::one() - d);
            }
        }
        IntegralOperator { params: params.clone(), grid: Arc::clone(grid), pow_d, pow_dm1, pow_1md }
    }

    pub fn params(&self) -> &ProblemParams<T> {
        &self.params
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    /// One application of the map.
    ///
    /// Endpoint values are set analytically: the kernel vanishes at `r = 0`
    /// and `r = 1`, so `(T Q)(0) = 0` and `(T Q)(1) = m` hold bit-exactly.
    /// The `s = 0` quadrature node is dropped: the full integrand
    /// `R(n) s^{1-d} Q G` tends to 0 there for any profile with finite pair
    /// norm, while its factors separately blow up.
    pub fn apply(&self, p: &ProfilePair<T>) -> Result<ProfilePair<T>, OperatorError> {
        if !Arc::ptr_eq(p.grid(), &self.grid) && p.grid().nodes() != self.grid.nodes() {
            return Err(OperatorError::Model(ModelError::GridMismatch));
        }
        let d = self.params.d();
        let m = self.params.mass();
        let sigma = self.params.sigma_d();
        let response = self.params.nonlinearity();
        let nodes = self.grid.nodes();
        let weights = self.grid.weights();
        let n = self.grid.intervals();

        // Shared source factor w_j * R(n_j) * s_j^{1-d} * Q(s_j); the kernel
        // is the only piece that depends on the output node.
        let mut src = vec![T::zero(); n + 1];
        for j in 1..=n {
            let density = p.qprime()[j] * self.pow_1md[j] / sigma;
            let value = weights[j] * response.eval(density) * self.pow_1md[j] * p.q()[j];
            if !value.is_finite() {
                return Err(OperatorError::NonFinite { stage: "integrand", node: j });
            }
            src[j] = value;
        }

        let mut q = vec![T::zero(); n + 1];
        let mut qprime = vec![T::zero(); n + 1];
        for i in 0..=n {
            let r = nodes[i];
            let mut acc_value = T::zero();
            let mut acc_slope = T::zero();
            for j in 1..=n {
                let one_minus_sd = T::one() - self.pow_d[j];
                if j == i {
                    // The slope kernel jumps across the diagonal. This node
                    // closes the cell on its left and opens the one on its
                    // right, so each one-sided limit enters with its own
                    // half-cell; a single branch here costs a whole order.
                    let h_left = nodes[i] - nodes[i - 1];
                    let h_right =
                        if i == n { T::zero() } else { nodes[i + 1] - nodes[i] };
                    let mixed = (h_right * one_minus_sd - h_left * self.pow_d[j])
                        / (h_left + h_right);
                    acc_value = acc_value + src[j] * (self.pow_d[i] * one_minus_sd);
                    acc_slope = acc_slope + src[j] * mixed;
                } else if r < nodes[j] {
                    acc_value = acc_value + src[j] * (self.pow_d[i] * one_minus_sd);
                    acc_slope = acc_slope + src[j] * one_minus_sd;
                } else {
                    acc_value = acc_value + src[j] * (self.pow_d[j] * (T::one() - self.pow_d[i]));
                    acc_slope = acc_slope - src[j] * self.pow_d[j];
                }
            }
            q[i] = if i == 0 {
                T::zero()
            } else if i == n {
                m
            } else {
                m * self.pow_d[i] + acc_value / d
            };
            // The d r^{d-1} kernel factor is hoisted out of the slope sum.
            qprime[i] = m * d * self.pow_dm1[i] + self.pow_dm1[i] * acc_slope;
            if !q[i].is_finite() || !qprime[i].is_finite() {
                return Err(OperatorError::NonFinite { stage: "output", node: i });
            }
        }
        Ok(ProfilePair::new(Arc::clone(&self.grid), q, qprime)?)
    }
}

/// One-shot application of the fixed-point map on the profile's grid.
pub fn apply<T: Scalar>(
    p: &ProfilePair<T>,
    params: &ProblemParams<T>,
) -> Result<ProfilePair<T>, OperatorError> {
    IntegralOperator::new(params, p.grid()).apply(p)
}

/// Particle density `n_i = Q'(r_i) r_i^{1-d} / sigma_d` reconstructed from a
/// profile. The origin value is the quadratic extrapolation through the
/// first three interior nodes; the analytic limit exists but the raw formula
/// is 0 * infinity there.
pub fn density<T: Scalar>(
    p: &ProfilePair<T>,
    params: &ProblemParams<T>,
) -> Result<Vec<T>, OperatorError> {
    let d = params.d();
    let sigma = params.sigma_d();
    let nodes = p.grid().nodes();
    let mut n = vec![T::zero(); nodes.len()];
    for i in 1..nodes.len() {
        n[i] = p.qprime()[i] * nodes[i].powf(T::one() - d) / sigma;
        if !n[i].is_finite() {
            return Err(OperatorError::NonFinite { stage: "density", node: i });
        }
    }
    let (r1, r2, r3) = (nodes[1], nodes[2], nodes[3]);
    n[0] = n[1] * r2 * r3 / ((r1 - r2) * (r1 - r3))
        + n[2] * r1 * r3 / ((r2 - r1) * (r2 - r3))
        + n[3] * r1 * r2 / ((r3 - r1) * (r3 - r2));
    if !n[0].is_finite() {
        return Err(OperatorError::NonFinite { stage: "density", node: 0 });
    }
    Ok(n)
}

/// Gravitational potential `phi(r) = -(1/sigma_d) integral_r^1 Q(s) s^{1-d} ds`
/// accumulated by trapezoid tail sums, so `phi(1) = 0` exactly.
///
/// The origin sample of the integrand is set to 0, consistent with the
/// operator's treatment of the same limit: `Q(s) s^{1-d} -> 0` for the decay
/// class the solver produces.
pub fn potential<T: Scalar>(
    p: &ProfilePair<T>,
    params: &ProblemParams<T>,
) -> Result<Vec<T>, OperatorError> {
    let d = params.d();
    let sigma = params.sigma_d();
    let nodes = p.grid().nodes();
    let count = nodes.len();
    let mut integrand = vec![T::zero(); count];
    for i in 1..count {
        integrand[i] = p.q()[i] * nodes[i].powf(T::one() - d);
    }
    let half = lit::<T>(0.5);
    let mut phi = vec![T::zero(); count];
    for i in (0..count - 1).rev() {
        let piece = (nodes[i + 1] - nodes[i]) * half * (integrand[i] + integrand[i + 1]);
        phi[i] = phi[i + 1] - piece / sigma;
        if !phi[i].is_finite() {
            return Err(OperatorError::NonFinite { stage: "potential", node: i });
        }
    }
    Ok(phi)
}
