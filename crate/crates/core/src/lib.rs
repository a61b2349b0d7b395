//! Simulation laboratory for the leadership (pursuit) problem of n+1
//! independent Gaussian particles: exact Gaussian path synthesis, survival
//! probability estimation, leadership-exponent fits, and numeric checks of
//! the supporting inequalities.

pub mod exponents;
pub mod kernels;
pub mod pursuit;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod textio;
pub mod theory;

pub use special::QuadratureResult;
