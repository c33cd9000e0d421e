use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lumped-element resonator: meander inductor, IDC and `n_fins` fins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LEResonator {
    pub inductance: f64,
    pub base_capacitance: f64,
    pub n_fins: u32,
    /// Capacitance added by each fin.
    pub fin_capacitance: f64,
}

impl LEResonator {
    pub fn validate(&self) -> Result<()> {
        if !(self.inductance > 0.0 && self.base_capacitance > 0.0 && self.fin_capacitance >= 0.0) {
            return Err(Error::Domain("resonator L and C must be positive".into()));
        }
        Ok(())
    }

    pub fn total_capacitance(&self) -> f64 {
        self.base_capacitance + self.n_fins as f64 * self.fin_capacitance
    }

    pub fn frequency(&self) -> Result<f64> {
        self.validate()?;
        lc_frequency(self.inductance, self.total_capacitance())
    }
}

/// `1 / (2 pi sqrt(L C))`.
pub fn lc_frequency(inductance: f64, capacitance: f64) -> Result<f64> {
    if !(inductance > 0.0 && capacitance > 0.0) || !inductance.is_finite() || !capacitance.is_finite() {
        return Err(Error::Domain(format!(
            "L = {inductance:e} H and C = {capacitance:e} F must be positive"
        )));
    }
    Ok(1.0 / (2.0 * PI * (inductance * capacitance).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitanceRatio {
    pub value: f64,
    /// Set when `f_n > f_0`, i.e. the fins appear to remove capacitance.
    pub non_monotone: bool,
}

/// `C_n / C_0 = (f_0 / f_n)^2` for resonators sharing one inductor.
pub fn capacitance_ratio(f0: f64, fn_: f64) -> Result<CapacitanceRatio> {
    if !(f0 > 0.0 && fn_ > 0.0) || !f0.is_finite() || !fn_.is_finite() {
        return Err(Error::Domain("frequencies must be positive".into()));
    }
    let r = f0 / fn_;
    Ok(CapacitanceRatio {
        value: r * r,
        non_monotone: fn_ > f0,
    })
}

/// Frequencies of `resonator` with each fin count in `n_list`.
pub fn predict_series(resonator: &LEResonator, n_list: &[u32]) -> Result<Vec<f64>> {
    resonator.validate()?;
    n_list
        .iter()
        .map(|&n| {
            LEResonator {
                n_fins: n,
                ..*resonator
            }
            .frequency()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub n_fins: u32,
    pub frequency: f64,
    /// Length of this entry's fins relative to the reference fin, so that a
    /// 50 um fin on a 100 um die counts as 0.5 fins. Usually 1.
    #[serde(default = "unit")]
    pub fin_length_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl SeriesEntry {
    pub fn new(n_fins: u32, frequency: f64) -> Self {
        SeriesEntry {
            n_fins,
            frequency,
            fin_length_scale: 1.0,
        }
    }

    fn effective_fins(&self) -> f64 {
        self.n_fins as f64 * self.fin_length_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesFitOptions {
    /// Pin the fit through `C_0 / C_0 = 1` at zero fins.
    pub constrain_intercept: bool,
}

impl Default for SeriesFitOptions {
    fn default() -> Self {
        SeriesFitOptions {
            constrain_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorSeries {
    /// Sorted by fin count.
    pub entries: Vec<SeriesEntry>,
    /// `C_n / C_0` per entry.
    pub ratios: Vec<f64>,
    /// Fitted `dC / C_0` per fin.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub warnings: Vec<String>,
}

impl ResonatorSeries {
    /// Per-fin capacitance given the bare resonator capacitance.
    pub fn fin_capacitance(&self, base_capacitance: f64) -> f64 {
        self.slope * base_capacitance
    }
}

/// Linear fit of `C_n / C_0` against fin count.
pub fn fit_series(entries: &[SeriesEntry], opts: SeriesFitOptions) -> Result<ResonatorSeries> {
    if entries.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "series fit needs at least 3 resonators, got {}",
            entries.len()
        )));
    }
    let mut entries = entries.to_vec();
    entries.sort_by_key(|e| e.n_fins);
    if entries[0].n_fins != 0 {
        return Err(Error::InsufficientData(
            "series has no zero-fin reference resonator".into(),
        ));
    }
    if entries[1].n_fins == 0 {
        return Err(Error::InsufficientData(
            "series has more than one zero-fin resonator".into(),
        ));
    }
    if entries.iter().any(|e| !(e.fin_length_scale > 0.0)) {
        return Err(Error::Domain("fin length scale must be positive".into()));
    }
    let f0 = entries[0].frequency;
    let mut warnings = Vec::new();
    let mut ratios = Vec::with_capacity(entries.len());
    for e in &entries {
        let r = capacitance_ratio(f0, e.frequency)?;
        if r.non_monotone {
            warnings.push(format!(
                "resonator with {} fins is above the zero-fin frequency",
                e.n_fins
            ));
        }
        ratios.push(r.value);
    }
    for w in entries.windows(2) {
        if w[1].frequency >= w[0].frequency && w[1].n_fins > 0 && w[0].n_fins > 0 {
            warnings.push(format!(
                "frequency does not decrease from {} to {} fins",
                w[0].n_fins, w[1].n_fins
            ));
        }
    }

    let x: Vec<f64> = entries.iter().map(SeriesEntry::effective_fins).collect();
    let n = x.len() as f64;
    let (slope, intercept, slope_stderr, ss_res) = if opts.constrain_intercept {
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&ratios).map(|(a, y)| a * (y - 1.0)).sum();
        let s = sxy / sxx;
        let ss_res: f64 = x.iter().zip(&ratios).map(|(a, y)| (y - 1.0 - s * a).powi(2)).sum();
        let var = ss_res / (n - 1.0);
        (s, 1.0, (var / sxx).sqrt(), ss_res)
    } else {
        let mx = x.iter().sum::<f64>() / n;
        let my = ratios.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&ratios).map(|(a, y)| (a - mx) * (y - my)).sum();
        let s = sxy / sxx;
        let b = my - s * mx;
        let ss_res: f64 = x.iter().zip(&ratios).map(|(a, y)| (y - b - s * a).powi(2)).sum();
        let var = ss_res / (n - 2.0);
        (s, b, (var / sxx).sqrt(), ss_res)
    };
    let my = ratios.iter().sum::<f64>() / n;
    let ss_tot: f64 = ratios.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(ResonatorSeries {
        entries,
        ratios,
        slope,
        slope_stderr,
        intercept,
        r_squared,
        warnings,
    })
}
