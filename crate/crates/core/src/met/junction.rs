use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{BOLTZMANN, ELECTRON_MASS, ELEMENTARY_CHARGE, EPSILON_0, HBAR};

/// Largest tunnelling exponent `2 kappa d` accepted before `exp` stops
/// being meaningful in double precision.
pub const MAX_TUNNEL_EXPONENT: f64 = 700.0;

/// Parallel-plate tunnel junction with a rectangular barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    /// Barrier thickness, m.
    pub barrier_thickness: f64,
    /// Barrier height, eV.
    pub barrier_height: f64,
    pub effective_mass_ratio: f64,
    /// Junction area, m^2.
    pub area: f64,
    pub rel_permittivity: f64,
    /// Superconducting gap, eV.
    pub gap: f64,
    /// Specific resistance prefactor, ohm m^2: `R_n = (r0 / A) exp(2 kappa d)`.
    pub r0: f64,
    /// Kelvin.
    #[serde(default)]
    pub temperature: f64,
}

impl JunctionSpec {
    /// 8 nm silicon fin barrier, 0.2 eV, (10 um)^2, calibrated to a 668 ohm
    /// normal resistance (f01 near 5 GHz).
    pub fn silicon_reference() -> Self {
        JunctionSpec {
            barrier_thickness: 8e-9,
            barrier_height: 0.2,
            effective_mass_ratio: 1.0,
            area: 1e-10,
            rel_permittivity: 11.7,
            gap: 180e-6,
            r0: 1.0,
            temperature: 0.0,
        }
        .with_normal_resistance(668.0)
        .expect("reference spec is valid")
    }

    /// 2 nm thermal AlOx barrier, 2 eV, same area and target resistance scale.
    pub fn alox_reference() -> Self {
        JunctionSpec {
            barrier_thickness: 2e-9,
            barrier_height: 2.0,
            effective_mass_ratio: 1.0,
            area: 1e-10,
            rel_permittivity: 9.0,
            gap: 180e-6,
            r0: 1.0,
            temperature: 0.0,
        }
        .with_normal_resistance(218.0)
        .expect("reference spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.barrier_thickness,
            self.barrier_height,
            self.area,
            self.gap,
            self.r0,
            self.rel_permittivity,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(
                "junction d, barrier height, area, gap, r0 and eps_r must be positive".into(),
            ));
        }
        if !(self.effective_mass_ratio > 0.0 && self.effective_mass_ratio <= 2.0) {
            return Err(Error::Domain("effective mass ratio must lie in (0, 2]".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// Same junction with `r0` chosen so that `R_n` equals `rn`.
    pub fn with_normal_resistance(mut self, rn: f64) -> Result<Self> {
        if !(rn > 0.0) {
            return Err(Error::Domain("normal resistance must be positive".into()));
        }
        let k = wkb_kappa(self.barrier_height, self.effective_mass_ratio)?;
        self.r0 = rn * self.area * (-2.0 * k * self.barrier_thickness).exp();
        self.validate()?;
        Ok(self)
    }

    pub fn with_thickness(self, d: f64) -> Self {
        JunctionSpec {
            barrier_thickness: d,
            ..self
        }
    }

    pub fn with_area(self, area: f64) -> Self {
        JunctionSpec { area, ..self }
    }

    pub fn kappa(&self) -> Result<f64> {
        wkb_kappa(self.barrier_height, self.effective_mass_ratio)
    }
}

/// `eps_0 eps_r A / d`
pub fn junction_capacitance(spec: &JunctionSpec) -> Result<f64> {
    spec.validate()?;
    Ok(EPSILON_0 * spec.rel_permittivity * spec.area / spec.barrier_thickness)
}

/// `e^2 / 2C`, joules.
pub fn charging_energy(capacitance: f64) -> Result<f64> {
    if !(capacitance > 0.0 && capacitance.is_finite()) {
        return Err(Error::Domain("capacitance must be positive".into()));
    }
    Ok(ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * capacitance))
}

/// Evanescent decay constant `sqrt(2 m* phi_b) / hbar`, 1/m.
pub fn wkb_kappa(barrier_height_ev: f64, mass_ratio: f64) -> Result<f64> {
    if !(barrier_height_ev > 0.0 && mass_ratio > 0.0) {
        return Err(Error::Domain("barrier height and mass ratio must be positive".into()));
    }
    let m = mass_ratio * ELECTRON_MASS;
    Ok((2.0 * m * barrier_height_ev * ELEMENTARY_CHARGE).sqrt() / HBAR)
}

/// `(r0 / A) exp(2 kappa d)`, ohms.
pub fn normal_resistance(spec: &JunctionSpec) -> Result<f64> {
    spec.validate()?;
    let exponent = 2.0 * spec.kappa()? * spec.barrier_thickness;
    if exponent > MAX_TUNNEL_EXPONENT {
        return Err(Error::Domain(format!(
            "tunnelling exponent 2 kappa d = {exponent:.1} exceeds {MAX_TUNNEL_EXPONENT}; rescale r0 or revisit the barrier"
        )));
    }
    Ok(spec.r0 / spec.area * exponent.exp())
}

/// Ambegaokar-Baratoff: `(pi Delta / 2 e R_n) tanh(Delta / 2 k_B T)`.
pub fn ambegaokar_baratoff(gap_ev: f64, rn: f64, temperature: f64) -> Result<f64> {
    if !(gap_ev > 0.0 && rn > 0.0 && temperature >= 0.0) {
        return Err(Error::Domain("gap and R_n must be positive, T non-negative".into()));
    }
    let gap = gap_ev * ELEMENTARY_CHARGE;
    let thermal = if temperature == 0.0 {
        1.0
    } else {
        (gap / (2.0 * BOLTZMANN * temperature)).tanh()
    };
    Ok(PI * gap / (2.0 * ELEMENTARY_CHARGE * rn) * thermal)
}

pub fn critical_current(spec: &JunctionSpec) -> Result<f64> {
    ambegaokar_baratoff(spec.gap, normal_resistance(spec)?, spec.temperature)
}

/// `hbar I_c / 2e`, joules.
pub fn josephson_energy(critical_current: f64) -> Result<f64> {
    if !(critical_current > 0.0 && critical_current.is_finite()) {
        return Err(Error::Domain("critical current must be positive".into()));
    }
    Ok(HBAR * critical_current / (2.0 * ELEMENTARY_CHARGE))
}

/// `(E_J, E_C)` in joules through the full geometric chain.
pub fn junction_energies(spec: &JunctionSpec) -> Result<(f64, f64)> {
    let ej = josephson_energy(critical_current(spec)?)?;
    let ec = charging_energy(junction_capacitance(spec)?)?;
    Ok((ej, ec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::PLANCK;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn capacitance_closed_form() {
        let s = JunctionSpec::silicon_reference();
        let c = junction_capacitance(&s).unwrap();
        assert!(rel(c, 1.2948e-12) < 1e-4, "{c}");
        assert!(rel(junction_capacitance(&s.with_area(2e-10)).unwrap(), 2.0 * c) < 1e-15);
        assert!(rel(junction_capacitance(&s.with_thickness(16e-9)).unwrap(), c / 2.0) < 1e-15);
        let ec = charging_energy(c).unwrap() / PLANCK;
        assert!(rel(ec, 14.96e6) < 1e-3, "{ec}");
    }

    #[test]
    fn charging_energy_of_100_ff() {
        let ec = charging_energy(100e-15).unwrap() / PLANCK;
        assert!(rel(ec, 193.7e6) < 1e-3);
        assert!(
            rel(
                charging_energy(200e-15).unwrap(),
                charging_energy(100e-15).unwrap() / 2.0
            ) < 1e-15
        );
    }

    #[test]
    fn kappa_values() {
        let k = wkb_kappa(0.2, 1.0).unwrap();
        // sqrt(2 * 9.109e-31 * 0.2 * 1.602e-19) / 1.0546e-34
        let oracle = (2.0f64 * 9.1093837015e-31 * 0.2 * 1.602176634e-19).sqrt() / 1.054571817e-34;
        assert!(rel(k, oracle) < 1e-9);
        assert!(rel(k, 2.291e9) < 1e-3);
        let k2 = wkb_kappa(2.0, 1.0).unwrap();
        assert!(rel(k2, 7.245e9) < 1e-3);
        assert!(rel(wkb_kappa(0.8, 1.0).unwrap(), 2.0 * k) < 1e-15);
        assert!(wkb_kappa(0.0, 1.0).is_err());
    }

    #[test]
    fn resistance_scaling() {
        let s = JunctionSpec::silicon_reference();
        let r = normal_resistance(&s).unwrap();
        assert!(rel(r, 668.0) < 1e-12);
        let thicker = normal_resistance(&s.with_thickness(8.1e-9)).unwrap();
        assert!(rel(thicker / r, 1.581) < 1e-3);
        assert!(rel(thicker / r, (2.0 * s.kappa().unwrap() * 0.1e-9).exp()) < 1e-12);
        assert!(rel(normal_resistance(&s.with_area(2e-10)).unwrap(), r / 2.0) < 1e-15);
        assert!(normal_resistance(&s.with_thickness(200e-9)).is_err());
    }

    #[test]
    fn critical_current_and_josephson_energy() {
        let ic = ambegaokar_baratoff(180e-6, 6000.0, 0.0).unwrap();
        assert!(rel(ic, 47.12e-9) < 1e-3, "{ic}");
        assert_eq!(ambegaokar_baratoff(180e-6, 6000.0, 0.01).unwrap(), ic);
        assert!(rel(ambegaokar_baratoff(180e-6, 12000.0, 0.0).unwrap(), ic / 2.0) < 1e-15);
        let ej = josephson_energy(ic).unwrap() / PLANCK;
        assert!(rel(ej, 23.4e9) < 2e-3, "{ej}");
        assert!(josephson_energy(0.0).is_err());
    }

    #[test]
    fn validation() {
        let mut s = JunctionSpec::silicon_reference();
        s.effective_mass_ratio = 2.5;
        assert!(s.validate().is_err());
        assert!(junction_capacitance(&s.with_area(-1.0)).is_err());
    }
}
