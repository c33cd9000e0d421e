use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::junction::{critical_current, junction_energies, JunctionSpec};
use super::transmon::{asymptotic_f01, asymptotic_params, TransmonParams, ASYMPTOTIC_MIN_RATIO};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const MIN_SAMPLES: usize = 1000;

/// Asymptotic transmon parameters of a junction.
pub fn transmon_params(spec: &JunctionSpec) -> Result<TransmonParams> {
    let (ej, ec) = junction_energies(spec)?;
    asymptotic_params(ej, ec)
}

/// `d ln f01 / d ln A` by a centred difference.
pub fn area_sensitivity(spec: &JunctionSpec) -> Result<f64> {
    transmon_params(spec)?;
    let delta = 1e-3;
    let up = transmon_params(&spec.with_area(spec.area * (1.0 + delta)))?.f01;
    let down = transmon_params(&spec.with_area(spec.area * (1.0 - delta)))?.f01;
    Ok((up.ln() - down.ln()) / ((1.0 + delta).ln() - (1.0 - delta).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadReport {
    pub sigma_d: f64,
    pub samples: usize,
    pub seed: u64,
    pub nominal_f01: f64,
    pub mean_f01: f64,
    pub std_f01: f64,
    /// `std_f01 / mean_f01`.
    pub relative_spread: f64,
    /// 5, 25, 50, 75 and 95 % quantiles of f01.
    pub quantiles: [f64; 5],
    /// Small-sigma prediction `kappa sigma_d`.
    pub analytic_relative_spread: f64,
    pub kappa: f64,
    pub nominal_ln_ic: f64,
    pub mean_ln_ic: f64,
    pub ln_ic_std_error: f64,
    pub warnings: Vec<String>,
}

fn normal_thickness(seed: u64, k: usize, d: f64, sigma: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    if sigma == 0.0 {
        return d;
    }
    loop {
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = d + sigma * z;
        if v > 0.0 {
            return v;
        }
    }
}

/// Mean and sample deviation, shifted by the first value so that a constant
/// sample has exactly zero spread.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let shift = v[0];
    let m = v.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = v.iter().map(|x| (x - shift - m).powi(2)).sum::<f64>() / (n - 1.0);
    (shift + m, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo f01 spread from per-device barrier thickness noise. Sample
/// `k` draws from its own ChaCha stream, so results do not depend on how
/// samples are split across threads.
pub fn frequency_spread(
    spec: &JunctionSpec,
    sigma_d: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SpreadReport> {
    let nominal = transmon_params(spec)?;
    if samples < MIN_SAMPLES {
        return Err(Error::Precondition(format!("need at least {MIN_SAMPLES} samples")));
    }
    if !(sigma_d >= 0.0 && sigma_d.is_finite()) {
        return Err(Error::Domain("sigma_d must be non-negative".into()));
    }
    let d = spec.barrier_thickness;
    let mut warnings = Vec::new();
    if sigma_d >= d / 3.0 {
        warnings.push("sigma_d >= d/3: truncation at d > 0 biases the distribution".into());
    }
    let draws = exec.map(samples, |k| -> Result<(f64, f64, f64)> {
        let s = spec.with_thickness(normal_thickness(seed, k, d, sigma_d));
        let (ej, ec) = junction_energies(&s)?;
        Ok((asymptotic_f01(ej, ec), critical_current(&s)?.ln(), ej / ec))
    });
    let mut f = Vec::with_capacity(samples);
    let mut ln_ic = Vec::with_capacity(samples);
    let mut low_ratio = 0usize;
    for r in draws {
        let (fk, lk, ratio) = r?;
        if ratio < ASYMPTOTIC_MIN_RATIO {
            low_ratio += 1;
        }
        f.push(fk);
        ln_ic.push(lk);
    }
    if low_ratio > 0 {
        warnings.push(format!(
            "{low_ratio} samples fall below E_J/E_C = {ASYMPTOTIC_MIN_RATIO}"
        ));
    }
    let n = samples as f64;
    let (mean, std) = mean_std(&f);
    let (mean_ln, sd_ln) = mean_std(&ln_ic);
    let mut sorted = f.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&sorted, q));
    let kappa = spec.kappa()?;
    Ok(SpreadReport {
        sigma_d,
        samples,
        seed,
        nominal_f01: nominal.f01,
        mean_f01: mean,
        std_f01: std,
        relative_spread: std / mean,
        quantiles,
        analytic_relative_spread: kappa * sigma_d,
        kappa,
        nominal_ln_ic: critical_current(spec)?.ln(),
        mean_ln_ic: mean_ln,
        ln_ic_std_error: sd_ln / n.sqrt(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierComparison {
    /// `kappa_alox / kappa_si`.
    pub analytic_ratio: f64,
    /// Ratio of Monte Carlo relative spreads, absent when `sigma_d = 0`.
    pub mc_ratio: Option<f64>,
    pub si: SpreadReport,
    pub alox: SpreadReport,
}

/// How much more f01 spread the second barrier produces than the first
/// for the same thickness noise.
pub fn compare_barriers(
    si: &JunctionSpec,
    alox: &JunctionSpec,
    sigma_d: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<BarrierComparison> {
    let a = frequency_spread(si, sigma_d, samples, seed, exec)?;
    let b = frequency_spread(alox, sigma_d, samples, seed, exec)?;
    let mc_ratio = (a.relative_spread > 0.0).then(|| b.relative_spread / a.relative_spread);
    Ok(BarrierComparison {
        analytic_ratio: alox.kappa()? / si.kappa()?,
        mc_ratio,
        si: a,
        alox: b,
    })
}
