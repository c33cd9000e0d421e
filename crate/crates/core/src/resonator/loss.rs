use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition number above which the two loss channels are not separable.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDevice {
    pub q_i: f64,
    pub p_fin: f64,
    pub p_rest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBudget {
    pub tan_fin: f64,
    pub tan_rest: f64,
    pub devices: Vec<LossDevice>,
    /// Per device `1/Q_i` minus the model prediction.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub warnings: Vec<String>,
}

impl LossBudget {
    pub fn predicted_inverse_q(&self, p_fin: f64, p_rest: f64) -> f64 {
        p_fin * self.tan_fin + p_rest * self.tan_rest
    }
}

/// Share of the resonator's electric energy stored in the fins when each of
/// `n_fins` fins adds `fin_capacitance` in parallel with `base_capacitance`.
/// Returns `(p_fin, p_rest)`.
pub fn capacitive_participation(n_fins: u32, fin_capacitance: f64, base_capacitance: f64) -> Result<(f64, f64)> {
    if !(fin_capacitance >= 0.0 && base_capacitance > 0.0) {
        return Err(Error::Domain("capacitances must be non-negative with C_0 > 0".into()));
    }
    let c_fin = n_fins as f64 * fin_capacitance;
    let p = c_fin / (base_capacitance + c_fin);
    Ok((p, 1.0 - p))
}

/// Solves `1/Q_i = p_fin tan_fin + p_rest tan_rest` over the devices, in the
/// least-squares sense when there are more than two.
pub fn extract_fin_loss(devices: &[LossDevice]) -> Result<LossBudget> {
    if devices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "loss extraction needs at least 2 devices, got {}",
            devices.len()
        )));
    }
    for d in devices {
        let ok = d.q_i > 0.0
            && (0.0..=1.0).contains(&d.p_fin)
            && (0.0..=1.0).contains(&d.p_rest)
            && d.p_fin + d.p_rest <= 1.0 + 1e-12;
        if !ok {
            return Err(Error::Domain(format!("invalid device {d:?}")));
        }
    }
    let m = devices.len();
    let a = DMatrix::from_fn(m, 2, |i, j| if j == 0 { devices[i].p_fin } else { devices[i].p_rest });
    let b = DVector::from_iterator(m, devices.iter().map(|d| 1.0 / d.q_i));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Conditioning {
            condition,
            reason: "device participations are nearly parallel".into(),
        });
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::Conditioning {
        condition,
        reason: e.to_string(),
    })?;
    let residuals = (b - &a * &x).iter().copied().collect();
    let mut warnings = Vec::new();
    if x[0] < 0.0 || x[1] < 0.0 {
        warnings.push("extracted loss tangent is negative".into());
    }
    Ok(LossBudget {
        tan_fin: x[0],
        tan_rest: x[1],
        devices: devices.to_vec(),
        residuals,
        condition,
        warnings,
    })
}
