//! Merged-element transmon design: junction chain, spectrum and spread.

mod junction;
mod spread;
mod transmon;

pub use junction::{
    ambegaokar_baratoff, charging_energy, critical_current, josephson_energy, junction_capacitance, junction_energies,
    normal_resistance, wkb_kappa, JunctionSpec, MAX_TUNNEL_EXPONENT,
};
pub use spread::{
    area_sensitivity, compare_barriers, frequency_spread, transmon_params, BarrierComparison, SpreadReport, MIN_SAMPLES,
};
pub use transmon::{
    asymptotic_params, charge_dispersion, diagonalized_params, transmon_spectrum, TransmonParams, ASYMPTOTIC_MIN_RATIO,
    MIN_CUTOFF, TRANSMON_RATIO,
};
