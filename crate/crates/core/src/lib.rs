//! Numerical verification tools for the sigma_2 equation
//! `sigma_2(A(rho, u)) = K e^{4u} p(u)` on R^4, where
//! `A(rho, u) = -D^2 u + rho du (x) du - (rho/2)|du|^2 I`.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod field;
pub mod forcing;
pub mod mass;
pub mod ode;
pub mod pohozaev;
pub mod quad;
pub mod radial;
pub mod sum;
pub mod symm;

pub use error::{Error, Result};

/// Area of the unit 3-sphere, `2 pi^2`.
pub const SPHERE_AREA: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Library version echoed into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
