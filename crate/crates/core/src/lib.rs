//! Solver and certifier for radially symmetric stationary density profiles
//! of a self-attracting particle system in a unit ball.
//!
//! The unknown is the cumulative mass profile `Q(r)` on `[0, 1]` with
//! `Q(0) = 0` and `Q(1) = m`. Stationary states are fixed points of an
//! integral map built from the Green function of the radial Laplacian
//! ([`operator`]), and the crate does three things with that map:
//!
//! * iterate it to a fixed point ([`solver`]),
//! * certify, from the problem constants alone, a ball on which the map is
//!   a contraction, so the computed profile is the unique one there
//!   ([`certify`]),
//! * rebuild the profile by an unrelated discretization (shooting on the
//!   differential form) and compare ([`oracle`]).
//!
//! Everything is generic over the floating-point scalar through
//! [`scalar::Scalar`]; the `*32`/`*64` aliases below pin the two concrete
//! instantiations. The binary front end lives in [`cli`].

pub mod certify;
pub mod cli;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type RadialGrid32 = model::RadialGrid<f32>;
pub type RadialGrid64 = model::RadialGrid<f64>;
pub type NonlinearitySpec32 = model::NonlinearitySpec<f32>;
pub type NonlinearitySpec64 = model::NonlinearitySpec<f64>;
pub type ProblemParams32 = model::ProblemParams<f32>;
pub type ProblemParams64 = model::ProblemParams<f64>;
pub type ProfilePair32 = model::ProfilePair<f32>;
pub type ProfilePair64 = model::ProfilePair<f64>;
pub type IntegralOperator32 = operator::IntegralOperator<f32>;
pub type IntegralOperator64 = operator::IntegralOperator<f64>;
pub type ContractionCertificate32 = certify::ContractionCertificate<f32>;
pub type ContractionCertificate64 = certify::ContractionCertificate<f64>;
pub type SolveReport32 = solver::SolveReport<f32>;
pub type SolveReport64 = solver::SolveReport<f64>;
pub type ShootResult32 = oracle::ShootResult<f32>;
pub type ShootResult64 = oracle::ShootResult<f64>;
