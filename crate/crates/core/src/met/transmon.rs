use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::PLANCK;

/// Lower edge of the asymptotic expansion's validity.
pub const ASYMPTOTIC_MIN_RATIO: f64 = 20.0;
/// `E_J / E_C` from which the device counts as a transmon.
pub const TRANSMON_RATIO: f64 = 50.0;
pub const MIN_CUTOFF: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    /// Joules.
    pub e_j: f64,
    /// Joules.
    pub e_c: f64,
    /// Hz.
    pub f01: f64,
    /// `f12 - f01`, Hz.
    pub anharmonicity: f64,
    /// Peak-to-peak offset-charge modulation of `f01`, Hz.
    pub charge_dispersion_01: f64,
    pub ratio: f64,
    pub transmon_regime: bool,
}

impl TransmonParams {
    pub fn e_j_hz(&self) -> f64 {
        self.e_j / PLANCK
    }

    pub fn e_c_hz(&self) -> f64 {
        self.e_c / PLANCK
    }
}

fn check_energies(ej: f64, ec: f64) -> Result<()> {
    if !(ej > 0.0 && ec > 0.0 && ej.is_finite() && ec.is_finite()) {
        return Err(Error::Domain("E_J and E_C must be positive".into()));
    }
    Ok(())
}

fn eigenvalues(ej: f64, ec: f64, ng: f64, cutoff: usize) -> Vec<f64> {
    let dim = 2 * cutoff + 1;
    let h = DMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            let n = r as f64 - cutoff as f64;
            4.0 * ec * (n - ng).powi(2)
        } else if r.abs_diff(c) == 1 {
            -0.5 * ej
        } else {
            0.0
        }
    });
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Charge-basis eigenenergies for charge states `-cutoff..=cutoff`, sorted
/// ascending. Fails if doubling the cutoff moves any of the three lowest
/// levels by more than `1e-10` relative.
pub fn transmon_spectrum(ej: f64, ec: f64, ng: f64, cutoff: usize) -> Result<Vec<f64>> {
    check_energies(ej, ec)?;
    if cutoff < MIN_CUTOFF {
        return Err(Error::Precondition(format!(
            "charge cutoff must be at least {MIN_CUTOFF}"
        )));
    }
    if !ng.is_finite() {
        return Err(Error::Domain("offset charge must be finite".into()));
    }
    let ev = eigenvalues(ej, ec, ng, cutoff);
    let check = eigenvalues(ej, ec, ng, 2 * cutoff);
    for k in 0..3 {
        let scale = ev[k].abs().max(ec);
        let change = (ev[k] - check[k]).abs() / scale;
        if change > 1e-10 {
            return Err(Error::Convergence {
                iterations: cutoff,
                residual: change,
            });
        }
    }
    Ok(ev)
}

/// Signed asymptotic charge dispersion of level `m`, joules.
pub fn charge_dispersion(m: u32, ej: f64, ec: f64) -> f64 {
    let mf = m as f64;
    let factorial: f64 = (1..=m).map(|k| k as f64).product();
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * ec * 2f64.powf(4.0 * mf + 5.0) / factorial
        * (2.0 / PI).sqrt()
        * (ej / (2.0 * ec)).powf(mf / 2.0 + 0.75)
        * (-(8.0 * ej / ec).sqrt()).exp()
}

/// `(sqrt(8 E_J E_C) - E_C) / h` without any regime check.
pub(crate) fn asymptotic_f01(ej: f64, ec: f64) -> f64 {
    ((8.0 * ej * ec).sqrt() - ec) / PLANCK
}

/// Leading-order transmon expressions.
pub fn asymptotic_params(ej: f64, ec: f64) -> Result<TransmonParams> {
    check_energies(ej, ec)?;
    let ratio = ej / ec;
    if ratio < ASYMPTOTIC_MIN_RATIO {
        return Err(Error::OutOfRegime {
            ratio,
            min: ASYMPTOTIC_MIN_RATIO,
        });
    }
    Ok(TransmonParams {
        e_j: ej,
        e_c: ec,
        f01: asymptotic_f01(ej, ec),
        anharmonicity: -ec / PLANCK,
        charge_dispersion_01: (charge_dispersion(1, ej, ec) - charge_dispersion(0, ej, ec)).abs() / PLANCK,
        ratio,
        transmon_regime: ratio >= TRANSMON_RATIO,
    })
}

/// Parameters read off the diagonalised spectrum at `n_g = 0` and `1/2`.
pub fn diagonalized_params(ej: f64, ec: f64, cutoff: usize) -> Result<TransmonParams> {
    let e = transmon_spectrum(ej, ec, 0.0, cutoff)?;
    let h = transmon_spectrum(ej, ec, 0.5, cutoff)?;
    let ratio = ej / ec;
    Ok(TransmonParams {
        e_j: ej,
        e_c: ec,
        f01: (e[1] - e[0]) / PLANCK,
        anharmonicity: ((e[2] - e[1]) - (e[1] - e[0])) / PLANCK,
        charge_dispersion_01: ((e[1] - e[0]) - (h[1] - h[0])).abs() / PLANCK,
        ratio,
        transmon_regime: ratio >= TRANSMON_RATIO,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GHZ: f64 = 1e9 * PLANCK;

    /// Number of eigenvalues below `x` of the tridiagonal matrix, by the
    /// Sturm sequence of leading principal minors.
    fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for (k, &d) in diag.iter().enumerate() {
            let prev = if k == 0 { 0.0 } else { off * off / q };
            q = d - x - prev;
            if q == 0.0 {
                q = 1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bisect_level(ej: f64, ec: f64, ng: f64, cutoff: usize, k: usize) -> f64 {
        let diag: Vec<f64> = (0..=2 * cutoff)
            .map(|r| 4.0 * ec * (r as f64 - cutoff as f64 - ng).powi(2))
            .collect();
        let (mut lo, mut hi) = (-2.0 * ej, diag.iter().cloned().fold(0.0, f64::max) + ej);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(&diag, -0.5 * ej, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn spectrum_matches_bisection_oracle() {
        let (ej, ec) = (12.5 * GHZ, 0.25 * GHZ);
        for ng in [0.0, 0.23, 0.5] {
            let ev = transmon_spectrum(ej, ec, ng, 20).unwrap();
            for k in 0..4 {
                let oracle = bisect_level(ej, ec, ng, 20, k);
                assert!((ev[k] - oracle).abs() < 1e-12 * ej, "level {k}: {} vs {oracle}", ev[k]);
            }
        }
    }

    #[test]
    fn f01_close_to_asymptotic_at_ratio_50() {
        let (ej, ec) = (12.5 * GHZ, 0.25 * GHZ);
        let d = diagonalized_params(ej, ec, 20).unwrap();
        assert!((d.f01 / 4.75e9 - 1.0).abs() < 0.02, "{}", d.f01);
        assert!(d.anharmonicity < 0.0);
        // dense diagonalisation in numpy at cutoff 30 gives -1.1492230 E_C
        assert!((d.anharmonicity / -0.25e9 - 1.149_223_03).abs() < 1e-7, "{:?}", d);
        let a = asymptotic_params(ej, ec).unwrap();
        assert!((a.f01 - 4.75e9).abs() < 1.0);
        assert!((a.anharmonicity + 0.25e9).abs() < 1e-3);
        let r = d.charge_dispersion_01 / a.charge_dispersion_01;
        assert!((0.5..=2.0).contains(&r), "dispersion ratio {r}");
    }

    #[test]
    fn free_charge_limit() {
        let ec = 0.25 * GHZ;
        let ev = transmon_spectrum(1e-9 * ec, ec, 0.0, 15).unwrap();
        let expected = [0.0, 4.0, 4.0, 16.0, 16.0];
        for (e, x) in ev.iter().zip(expected) {
            assert!((e / ec - x).abs() < 1e-6);
        }
    }

    #[test]
    fn integer_offset_translation() {
        let (ej, ec) = (12.5 * GHZ, 0.25 * GHZ);
        let a = transmon_spectrum(ej, ec, 0.3, 20).unwrap();
        let b = transmon_spectrum(ej, ec, 1.3, 20).unwrap();
        for k in 0..5 {
            assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs());
        }
    }

    #[test]
    fn cutoff_doubling_is_stable() {
        let ec = 0.25 * GHZ;
        for ratio in [20.0, 50.0, 100.0] {
            let a = diagonalized_params(ratio * ec, ec, 20).unwrap();
            let b = diagonalized_params(ratio * ec, ec, 40).unwrap();
            assert!((a.f01 - b.f01).abs() / a.f01 < 1e-10);
        }
    }

    #[test]
    fn asymptotic_error_and_dispersion_shrink_with_ratio() {
        let ec = 0.25 * GHZ;
        let mut last_err = f64::INFINITY;
        let mut last_disp = f64::INFINITY;
        for ratio in [20.0, 35.0, 50.0, 75.0, 100.0] {
            let d = diagonalized_params(ratio * ec, ec, 25).unwrap();
            let a = asymptotic_params(ratio * ec, ec).unwrap();
            let err = (a.f01 - d.f01).abs() / d.f01;
            assert!(err < last_err);
            assert!(d.charge_dispersion_01 < last_disp);
            assert!(d.anharmonicity < 0.0 && d.anharmonicity < a.anharmonicity);
            last_err = err;
            last_disp = d.charge_dispersion_01;
        }
    }

    #[test]
    fn regime_checks() {
        let ec = 0.25 * GHZ;
        assert!(matches!(
            asymptotic_params(10.0 * ec, ec),
            Err(Error::OutOfRegime { .. })
        ));
        assert!(!asymptotic_params(30.0 * ec, ec).unwrap().transmon_regime);
        assert!(transmon_spectrum(ec, ec, 0.0, 10).is_err());
    }
}
