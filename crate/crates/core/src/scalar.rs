//! Floating-point abstraction for the numeric core.
//!
//! Everything downstream (grids, kernels, certification, the solvers) is
//! generic over a [`Scalar`], so the same code instantiates at `f32` and
//! `f64`. The command-line front end and the acceptance tolerances are
//! stated for `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point number the solver can run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Embeds an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant must be representable in the scalar type")
}

/// Lossy view of a scalar for diagnostics and error payloads.
#[inline]
pub(crate) fn approx64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Lanczos coefficients, g = 7, for the 9-term gamma approximation.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation.
///
/// Accurate to roughly machine precision in `f64` for the arguments the
/// crate uses (half-integers and nearby reals above 1/2). Arguments below
/// 1/2 go through the reflection formula.
pub(crate) fn gamma<T: Scalar>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        // Reflection: gamma(x) = pi / (sin(pi x) * gamma(1 - x)).
        let pi = T::PI();
        return pi / ((pi * x).sin() * gamma(T::one() - x));
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (x + lit::<T>(k as f64));
    }
    let t = x + lit::<T>(7.5);
    let two_pi = T::PI() + T::PI();
    two_pi.sqrt() * t.powf(x + half) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1.0)
    }

    #[test]
    fn gamma_matches_factorials() {
        for (arg, want) in [(1.0, 1.0), (2.0, 1.0), (3.0, 2.0), (4.0, 6.0), (5.0, 24.0)] {
            assert!(rel_err(gamma(arg), want) < 1e-13, "gamma({arg})");
        }
    }

    #[test]
    fn gamma_matches_half_integers() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        // gamma(n + 1/2) by the recurrence from gamma(1/2) = sqrt(pi).
        let mut want = sqrt_pi;
        let mut arg = 0.5;
        while arg < 6.0 {
            assert!(rel_err(gamma(arg), want) < 1e-13, "gamma({arg})");
            want *= arg;
            arg += 1.0;
        }
    }

    #[test]
    fn gamma_reflection_branch() {
        // gamma(0.25) * gamma(0.75) = pi / sin(pi/4) = pi * sqrt(2).
        let product = gamma(0.25f64) * gamma(0.75f64);
        let want = std::f64::consts::PI * 2.0f64.sqrt();
        assert!(rel_err(product, want) < 1e-12);
    }

    #[test]
    fn gamma_works_in_single_precision() {
        let got: f32 = gamma(2.5f32);
        let want = 1.329_340_4f32; // 3/4 * sqrt(pi)
        assert!((got - want).abs() < 1e-5);
    }
}
