//! Physical constants (SI, CODATA 2018).

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Superconducting flux quantum `h / 2e`.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);
