//! Numerical laboratory for a Lorenz-like flow whose saddle at the origin is
//! neutral rather than hyperbolic.
//!
//! The crate is organized around the pipeline of the underlying experiments:
//!
//! - [`fields`]: the normal-form vector fields, their derived exponents
//!   (`beta0`, `beta2`, `beta`) and analytic side conditions;
//! - [`ode`]: adaptive Radau IIA integration with dense output and
//!   section-crossing detection, plus a fixed-step oracle;
//! - [`dulac`]: transition maps from the unstable to the stable leaf and
//!   their exit times, swept over grids of initial coordinates;
//! - [`exponents`]: raw and adjusted estimators of `beta` and `beta2` from
//!   sweeps, with least-squares adjustment constants;
//! - [`poincare`]: the explicit return map of the cross-section, its
//!   quotient interval map, eigenvalues and contraction properties;
//! - [`statistics`]: return-time tails and correlation decay of the
//!   suspension flow over the return map.

pub mod dulac;
pub mod exponents;
pub mod fields;
pub mod ode;
mod params_config;
pub mod plot;
pub mod poincare;
pub(crate) mod regression;
pub mod statistics;

pub use params_config::ParamsSection;
