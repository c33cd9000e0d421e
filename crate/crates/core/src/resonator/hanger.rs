//! Diameter-corrected hanger model and its least-squares fit.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

const NP: usize = 7;
type Mat = SMatrix<f64, NP, NP>;
type Vect = SVector<f64, NP>;

/// Bounds on the fitted quality factors.
pub const Q_MIN: f64 = 10.0;
pub const Q_MAX: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HangerParams {
    pub f_r: f64,
    pub q_i: f64,
    /// Magnitude of the complex coupling Q.
    pub q_c: f64,
    /// Impedance-mismatch asymmetry angle.
    pub phi: f64,
    /// Background amplitude.
    pub a: f64,
    /// Background phase at zero frequency.
    pub theta: f64,
    /// Electrical delay, seconds.
    pub tau: f64,
}

impl HangerParams {
    pub fn new(f_r: f64, q_i: f64, q_c: f64, phi: f64) -> Self {
        HangerParams {
            f_r,
            q_i,
            q_c,
            phi,
            a: 1.0,
            theta: 0.0,
            tau: 0.0,
        }
    }

    /// `(1/Q_i + cos(phi)/Q_c)^-1`
    pub fn loaded_q(&self) -> f64 {
        1.0 / (1.0 / self.q_i + self.phi.cos() / self.q_c)
    }

    pub fn linewidth(&self) -> f64 {
        self.f_r / self.loaded_q()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.f_r, self.q_i, self.q_c, self.phi, self.a, self.theta, self.tau]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.f_r <= 0.0 || self.q_i <= 0.0 || self.q_c <= 0.0 || self.a <= 0.0 {
            return Err(Error::Domain(
                "hanger parameters must be finite with f_r, Q_i, Q_c, a > 0".into(),
            ));
        }
        if self.phi.abs() >= PI / 2.0 {
            return Err(Error::Domain("asymmetry angle must lie in (-pi/2, pi/2)".into()));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; NP] {
        [self.f_r, self.q_i, self.q_c, self.phi, self.a, self.theta, self.tau]
    }

    fn from_array(v: [f64; NP]) -> Self {
        HangerParams {
            f_r: v[0],
            q_i: v[1],
            q_c: v[2],
            phi: v[3],
            a: v[4],
            theta: v[5],
            tau: v[6],
        }
    }
}

/// Transmission of a side-coupled resonator at frequency `f`.
pub fn hanger_s21(p: &HangerParams, f: f64) -> Complex64 {
    let q = p.loaded_q();
    let x = (f - p.f_r) / p.f_r;
    let n = Complex64::from_polar(q / p.q_c, p.phi);
    let d = Complex64::new(1.0, 2.0 * q * x);
    let background = Complex64::from_polar(p.a, p.theta + 2.0 * PI * f * p.tau);
    background * (1.0 - n / d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct S21Trace {
    pub frequencies: Vec<f64>,
    pub s21: Vec<Complex64>,
}

impl S21Trace {
    pub const MIN_POINTS: usize = 50;

    pub fn new(frequencies: Vec<f64>, s21: Vec<Complex64>) -> Result<Self> {
        if frequencies.len() != s21.len() {
            return Err(Error::Precondition("frequency and S21 lengths differ".into()));
        }
        if frequencies.len() < Self::MIN_POINTS {
            return Err(Error::Precondition(format!(
                "trace has {} points, need at least {}",
                frequencies.len(),
                Self::MIN_POINTS
            )));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) || !frequencies[0].is_finite() {
            return Err(Error::Precondition(
                "trace frequencies must be strictly increasing".into(),
            ));
        }
        if s21.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Precondition("trace contains non-finite S21 values".into()));
        }
        Ok(S21Trace { frequencies, s21 })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.frequencies[self.len() - 1] - self.frequencies[0]
    }

    fn centre(&self) -> f64 {
        0.5 * (self.frequencies[0] + self.frequencies[self.len() - 1])
    }
}

/// Noiseless model trace on `n` evenly spaced points in `[f_lo, f_hi]`.
pub fn synthesize_trace(p: &HangerParams, f_lo: f64, f_hi: f64, n: usize) -> Result<S21Trace> {
    p.validate()?;
    if n < 2 || !(f_hi > f_lo) {
        return Err(Error::Precondition("need f_hi > f_lo and at least two points".into()));
    }
    let step = (f_hi - f_lo) / (n - 1) as f64;
    let f: Vec<f64> = (0..n).map(|k| f_lo + k as f64 * step).collect();
    let s = f.iter().map(|&v| hanger_s21(p, v)).collect();
    S21Trace::new(f, s)
}

/// Adds independent Gaussian noise of standard deviation `sigma` to each
/// quadrature.
pub fn add_noise(trace: &S21Trace, sigma: f64, seed: u64) -> S21Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s21 = trace
        .s21
        .iter()
        .map(|z| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            z + Complex64::new(re, im) * sigma
        })
        .collect();
    S21Trace {
        frequencies: trace.frequencies.clone(),
        s21,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HangerFitOptions {
    pub max_iterations: usize,
    /// Minimum span in loaded linewidths.
    pub min_linewidths: f64,
}

impl Default for HangerFitOptions {
    fn default() -> Self {
        HangerFitOptions {
            max_iterations: 200,
            min_linewidths: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HangerFit {
    pub params: HangerParams,
    /// One-sigma uncertainties, same layout as `params`.
    pub std_errors: HangerParams,
    /// Covariance in the order (f_r, Q_i, Q_c, phi, a, theta, tau).
    pub covariance: [[f64; NP]; NP],
    /// Half the sum of squared residual magnitudes.
    pub cost: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl HangerFit {
    pub fn loaded_q(&self) -> f64 {
        self.params.loaded_q()
    }
}

/// Fit works on scaled internal coordinates: frequency offset from the
/// trace centre in units of the span, log quality factors, and the
/// background phase referred to the trace centre so that it decouples from
/// the delay.
struct Model<'a> {
    f: &'a [f64],
    data: &'a [Complex64],
    fc: f64,
    span: f64,
}

impl Model<'_> {
    fn to_internal(&self, p: &HangerParams) -> Vect {
        Vect::from([
            (p.f_r - self.fc) / self.span,
            p.q_i.ln(),
            p.q_c.ln(),
            p.phi,
            p.a,
            p.theta + 2.0 * PI * self.fc * p.tau,
            p.tau * self.span,
        ])
    }

    fn to_params(&self, q: &Vect) -> HangerParams {
        let tau = q[6] / self.span;
        HangerParams {
            f_r: self.fc + q[0] * self.span,
            q_i: q[1].exp(),
            q_c: q[2].exp(),
            phi: q[3],
            a: q[4],
            theta: q[5] - 2.0 * PI * self.fc * tau,
            tau,
        }
    }

    /// Residual and its derivatives at one point.
    #[inline]
    fn point(&self, q: &Vect, k: usize) -> (Complex64, [Complex64; NP]) {
        let f = self.f[k];
        let fr = self.fc + q[0] * self.span;
        let (qi, qc, phi, a) = (q[1].exp(), q[2].exp(), q[3], q[4]);
        let u = (f - self.fc) / self.span;
        let (sin_phi, cos_phi) = phi.sin_cos();
        let ql = 1.0 / (1.0 / qi + cos_phi / qc);
        let x = (f - fr) / fr;
        let n = Complex64::from_polar(ql / qc, phi);
        let d = Complex64::new(1.0, 2.0 * ql * x);
        let nd = n / d;
        let r = 1.0 - nd;
        let bg = Complex64::from_polar(a, q[5] + 2.0 * PI * q[6] * u);
        let s = bg * r;
        let i = Complex64::i();

        let dr_dql = -nd * (1.0 / ql - 2.0 * i * x / d);
        let ql2 = ql * ql;
        let dr_dfr = nd / d * (2.0 * i * ql) * (-f / (fr * fr));
        let dr_dqi = dr_dql * ql2 / (qi * qi);
        let dr_dqc = dr_dql * ql2 * cos_phi / (qc * qc) + nd / qc;
        let dr_dphi = dr_dql * ql2 * sin_phi / qc - i * nd;
        let jac = [
            bg * dr_dfr * self.span,
            bg * dr_dqi * qi,
            bg * dr_dqc * qc,
            bg * dr_dphi,
            s / a,
            i * s,
            i * 2.0 * PI * u * s,
        ];
        (s - self.data[k], jac)
    }

    fn cost(&self, q: &Vect) -> f64 {
        let mut c = 0.0;
        for k in 0..self.f.len() {
            c += self.point(q, k).0.norm_sqr();
        }
        0.5 * c
    }

    fn normal_equations(&self, q: &Vect) -> (Mat, Vect, f64) {
        let mut jtj = Mat::zeros();
        let mut g = Vect::zeros();
        let mut cost = 0.0;
        for k in 0..self.f.len() {
            let (r, j) = self.point(q, k);
            cost += r.norm_sqr();
            for a in 0..NP {
                g[a] += j[a].re * r.re + j[a].im * r.im;
                for b in a..NP {
                    jtj[(a, b)] += j[a].re * j[b].re + j[a].im * j[b].im;
                }
            }
        }
        for a in 0..NP {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        (jtj, g, 0.5 * cost)
    }
}

fn clamp_internal(q: &mut Vect) {
    q[1] = q[1].clamp(Q_MIN.ln(), Q_MAX.ln());
    q[2] = q[2].clamp(Q_MIN.ln(), Q_MAX.ln());
    q[3] = q[3].clamp(-1.5, 1.5);
    q[4] = q[4].max(1e-12);
}

fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn unwrap(phase: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for p in phase {
        if let Some(q) = prev {
            let jump = p - q;
            if jump > PI {
                offset -= 2.0 * PI;
            } else if jump < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Starting point from the trace shape alone.
pub fn initial_guess(trace: &S21Trace) -> Result<HangerParams> {
    let n = trace.len();
    let f = &trace.frequencies;
    let fc = trace.centre();
    let edge = (n / 10).max(5);
    let phase = unwrap(trace.s21.iter().map(|z| z.arg()));
    let lo = slope(&f[..edge], &phase[..edge]);
    let hi = slope(&f[n - edge..], &phase[n - edge..]);
    let tau = 0.5 * (lo + hi) / (2.0 * PI);

    let z: Vec<Complex64> = trace
        .s21
        .iter()
        .zip(f)
        .map(|(s, &fk)| s * Complex64::from_polar(1.0, -2.0 * PI * (fk - fc) * tau))
        .collect();
    let edges = z[..edge].iter().chain(&z[n - edge..]);
    let c = edges.sum::<Complex64>() / (2 * edge) as f64;
    if c.norm() == 0.0 {
        return Err(Error::Fit {
            iterations: 0,
            cost: f64::NAN,
            reason: "trace has no off-resonant background".into(),
        });
    }
    let zn: Vec<Complex64> = z.iter().map(|v| v / c).collect();
    let depth: Vec<f64> = zn.iter().map(|v| (1.0 - v).norm_sqr()).collect();
    let imax = (0..n).max_by(|&a, &b| depth[a].total_cmp(&depth[b])).unwrap();
    let dip = 1.0 - zn[imax];
    let half = 0.5 * depth[imax];
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for k in range {
            if depth[k] < half {
                let t = (depth[prev] - half) / (depth[prev] - depth[k]);
                return Some(f[prev] + t * (f[k] - f[prev]));
            }
            prev = k;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..n));
    let f_r = f[imax];
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f_r - l),
        (None, Some(r)) => 2.0 * (r - f_r),
        (None, None) => trace.span(),
    };
    let ql = f_r / fwhm.max(f64::MIN_POSITIVE);
    let phi = dip.arg().clamp(-1.4, 1.4);
    let q_c = (ql / dip.norm()).clamp(Q_MIN, Q_MAX);
    let inv_qi = 1.0 / ql - phi.cos() / q_c;
    let q_i = if inv_qi > 1.0 / Q_MAX { 1.0 / inv_qi } else { 100.0 * ql }.clamp(Q_MIN, Q_MAX);
    let theta_c = c.arg();
    Ok(HangerParams {
        f_r,
        q_i,
        q_c,
        phi,
        a: c.norm(),
        theta: theta_c - 2.0 * PI * fc * tau,
        tau,
    })
}

/// Damped Gauss-Newton fit of all seven hanger parameters.
pub fn fit_hanger(trace: &S21Trace, guess: Option<&HangerParams>, opts: &HangerFitOptions) -> Result<HangerFit> {
    let start = match guess {
        Some(g) => {
            g.validate()?;
            *g
        }
        None => initial_guess(trace)?,
    };
    let linewidths = trace.span() / start.linewidth();
    if linewidths < opts.min_linewidths {
        return Err(Error::Precondition(format!(
            "trace spans {linewidths:.2} linewidths, need at least {}",
            opts.min_linewidths
        )));
    }
    let model = Model {
        f: &trace.frequencies,
        data: &trace.s21,
        fc: trace.centre(),
        span: trace.span(),
    };
    let mut q = model.to_internal(&start);
    clamp_internal(&mut q);
    let (mut jtj, mut g, mut cost) = model.normal_equations(&q);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let floor = 1e-30 * trace.len() as f64;
    while iterations < opts.max_iterations {
        iterations += 1;
        if cost <= floor {
            converged = true;
            break;
        }
        let mut damped = jtj;
        for a in 0..NP {
            damped[(a, a)] += lambda * jtj[(a, a)].max(1e-300);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-g)),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let mut trial = q + step;
        clamp_internal(&mut trial);
        let trial_cost = model.cost(&trial);
        if trial_cost.is_finite() && trial_cost <= cost {
            let small = (0..NP).all(|a| (trial[a] - q[a]).abs() <= 1e-12 * (1.0 + q[a].abs()));
            let stalled = cost - trial_cost <= 1e-15 * cost;
            q = trial;
            (jtj, g, cost) = model.normal_equations(&q);
            lambda = (lambda / 3.0).max(1e-12);
            if small || stalled {
                converged = true;
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e16 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit {
            iterations,
            cost,
            reason: "iteration limit reached".into(),
        });
    }

    let mut params = model.to_params(&q);
    params.theta = wrap_phase(params.theta);

    let dof = (2 * trace.len()).saturating_sub(NP).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let cov_q = jtj.try_inverse().unwrap_or_else(|| Mat::from_element(f64::NAN)) * s2;
    let mut t = Mat::zeros();
    t[(0, 0)] = model.span;
    t[(1, 1)] = params.q_i;
    t[(2, 2)] = params.q_c;
    t[(3, 3)] = 1.0;
    t[(4, 4)] = 1.0;
    t[(5, 5)] = 1.0;
    t[(5, 6)] = -2.0 * PI * model.fc / model.span;
    t[(6, 6)] = 1.0 / model.span;
    let cov = t * cov_q * t.transpose();
    let mut covariance = [[0.0; NP]; NP];
    let mut sd = [0.0; NP];
    for a in 0..NP {
        for b in 0..NP {
            covariance[a][b] = cov[(a, b)];
        }
        sd[a] = cov[(a, a)].max(0.0).sqrt();
    }

    let mut warnings = Vec::new();
    for (name, v) in [("Q_i", params.q_i), ("Q_c", params.q_c)] {
        if v >= Q_MAX * (1.0 - 1e-6) || v <= Q_MIN * (1.0 + 1e-6) {
            warnings.push(format!("{name} = {v:e} is at its fit bound"));
        }
    }
    if params.f_r < trace.frequencies[0] || params.f_r > trace.frequencies[trace.len() - 1] {
        warnings.push("fitted resonance lies outside the trace".into());
    }
    Ok(HangerFit {
        params,
        std_errors: HangerParams::from_array(sd),
        covariance,
        cost,
        iterations,
        warnings,
    })
}

/// Fits many traces, one task per trace.
pub fn fit_hanger_batch(traces: &[S21Trace], opts: &HangerFitOptions, exec: Execution) -> Vec<Result<HangerFit>> {
    exec.map(traces.len(), |k| fit_hanger(&traces[k], None, opts))
}

/// Relative parameter distance, with the phase compared modulo 2 pi.
pub fn max_relative_error(fit: &HangerParams, truth: &HangerParams) -> f64 {
    let a = fit.as_array();
    let b = truth.as_array();
    (0..NP)
        .map(|k| {
            let diff = if k == 5 { wrap_phase(a[k] - b[k]) } else { a[k] - b[k] };
            diff.abs() / b[k].abs().max(1e-300)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> HangerParams {
        HangerParams {
            f_r: 6e9,
            q_i: 1e5,
            q_c: 5e4,
            phi: 0.2,
            a: 0.8,
            theta: 0.3,
            tau: 2e-9,
        }
    }

    fn window(p: &HangerParams, linewidths: f64, n: usize) -> S21Trace {
        let w = p.linewidth() * linewidths / 2.0;
        synthesize_trace(p, p.f_r - w, p.f_r + w, n).unwrap()
    }

    #[test]
    fn on_resonance_value() {
        let p = HangerParams::new(6e9, 1e5, 5e4, 0.0);
        assert!((p.loaded_q() - 1e5 / 3.0).abs() < 1e-6);
        let s = hanger_s21(&p, 6e9);
        assert!((s.re - 1.0 / 3.0).abs() < 1e-12 && s.im.abs() < 1e-12);
        let p = HangerParams::new(6e9, f64::INFINITY, 5e4, 0.0);
        assert!(hanger_s21(&p, 6e9).norm() < 1e-12);
    }

    #[test]
    fn far_off_resonance_is_background() {
        let p = truth();
        let f = p.f_r + 1e4 * p.linewidth();
        let bg = Complex64::from_polar(p.a, p.theta + 2.0 * PI * f * p.tau);
        assert!((hanger_s21(&p, f) - bg).norm() <= 1e-3 * p.loaded_q() / p.q_c);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = truth();
        let tr = window(&p, 20.0, 101);
        let m = Model {
            f: &tr.frequencies,
            data: &tr.s21,
            fc: tr.centre(),
            span: tr.span(),
        };
        let mut q = m.to_internal(&p);
        q[0] += 0.013;
        q[3] += 0.05;
        for k in [3usize, 50, 77] {
            let (_, jac) = m.point(&q, k);
            for a in 0..NP {
                let h = 1e-6 * (1.0 + q[a].abs());
                let mut qp = q;
                let mut qm = q;
                qp[a] += h;
                qm[a] -= h;
                let fd = (m.point(&qp, k).0 - m.point(&qm, k).0) / (2.0 * h);
                assert!(
                    (fd - jac[a]).norm() <= 1e-6 * (1.0 + jac[a].norm()),
                    "param {a}: {fd} vs {}",
                    jac[a]
                );
            }
        }
    }

    #[test]
    fn noiseless_trace_is_a_fixed_point() {
        let p = truth();
        let tr = window(&p, 20.0, 2001);
        let fit = fit_hanger(&tr, None, &HangerFitOptions::default()).unwrap();
        assert!(max_relative_error(&fit.params, &p) < 1e-6, "{:?}", fit.params);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn loaded_q_bounds() {
        let p = truth();
        for seed in 11..14 {
            let tr = add_noise(&window(&p, 20.0, 801), 0.002, seed);
            let fit = fit_hanger(&tr, None, &HangerFitOptions::default()).unwrap();
            let q = fit.loaded_q();
            assert!(q <= fit.params.q_i && q <= fit.params.q_c / fit.params.phi.cos());
            assert!(fit.std_errors.q_i > 0.0);
        }
    }

    #[test]
    fn narrow_span_is_rejected() {
        let p = truth();
        let tr = window(&p, 3.0, 200);
        let err = fit_hanger(&tr, Some(&p), &HangerFitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn trace_invariants() {
        assert!(S21Trace::new(vec![1.0; 60], vec![Complex64::new(1.0, 0.0); 60]).is_err());
        let f: Vec<f64> = (0..10).map(|k| k as f64).collect();
        assert!(S21Trace::new(f, vec![Complex64::new(1.0, 0.0); 10]).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let tr = window(&truth(), 20.0, 100);
        assert_eq!(add_noise(&tr, 0.01, 4), add_noise(&tr, 0.01, 4));
        assert_ne!(add_noise(&tr, 0.01, 4), add_noise(&tr, 0.01, 5));
    }
}
