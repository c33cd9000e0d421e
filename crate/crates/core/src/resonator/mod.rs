//! Lumped-element resonator series, hanger S21 fitting and loss extraction.

mod hanger;
mod loss;
mod series;

pub use hanger::{
    add_noise, fit_hanger, fit_hanger_batch, hanger_s21, initial_guess, max_relative_error, synthesize_trace,
    HangerFit, HangerFitOptions, HangerParams, S21Trace, Q_MAX, Q_MIN,
};
pub use loss::{capacitive_participation, extract_fin_loss, LossBudget, LossDevice, MAX_CONDITION};
pub use series::{
    capacitance_ratio, fit_series, lc_frequency, predict_series, CapacitanceRatio, LEResonator, ResonatorSeries,
    SeriesEntry, SeriesFitOptions,
};
