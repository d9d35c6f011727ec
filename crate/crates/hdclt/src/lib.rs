//! Numerical laboratory for high-dimensional central limit theorem error
//! bounds over hyperrectangles.
//!
//! The crate is organized around the pipeline: random-vector `models` with
//! exactly known covariance, Stein-kernel machinery (`stein`), Monte-Carlo
//! estimators of the bound constituents (`bounds`), empirical rectangle
//! distances against Gaussian references (`distance`), the Gaussian-derivative
//! supremum engine (`suprema`), the exact sharpness lower-bound computation
//! (`sharpness`), and a config-driven experiment `harness`.
//!
//! Scalar-agnostic numerics (special functions, Hermite machinery, the
//! supremum engine) are generic over [`real::Real`]; the simulation stack is
//! instantiated at [`Scalar`].

pub mod bounds;
pub mod distance;
pub mod harness;
pub mod models;
pub mod real;
pub mod rng;
pub mod sharpness;
pub mod special;
pub mod stein;
pub mod suprema;

/// Concrete scalar type used by the simulation stack.
pub type Scalar = f64;

/// Single-precision alias for callers that want the generic core at `f32`.
pub type Scalar32 = f32;
