//! Capacitance per unit length and energy participation from a solved field.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::CrossSection;
use crate::units::EPSILON_0;

use super::{discretize, solve_laplace, Boundary, DiscretizeOptions, Grid2D, PotentialField, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacitanceMethod {
    #[default]
    Energy,
    Charge,
}

#[derive(Debug, Clone)]
pub struct CapacitanceOptions {
    pub solver: SolverSettings,
    pub discretize: DiscretizeOptions,
    /// Which per-grid values feed the extrapolation.
    pub method: CapacitanceMethod,
    /// Largest tolerated relative gap between the two methods on the finest grid.
    pub max_method_gap: f64,
}

impl Default for CapacitanceOptions {
    fn default() -> Self {
        CapacitanceOptions {
            solver: SolverSettings::default(),
            discretize: DiscretizeOptions::default(),
            method: CapacitanceMethod::Energy,
            max_method_gap: 0.05,
        }
    }
}

impl CapacitanceOptions {
    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.discretize.boundary = boundary;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.discretize.exec = exec;
        self.solver.exec = exec;
        self
    }
}

/// Energy and electrode charges of one solved field, per unit length.
#[derive(Debug, Clone)]
pub struct FieldEnergy {
    /// Joules per meter.
    pub total: f64,
    /// Energy per grid zone, same order as `Grid2D::zones`.
    pub by_zone: Vec<f64>,
    /// Coulombs per meter on each electrode.
    pub charges: Vec<f64>,
}

impl FieldEnergy {
    pub fn participation(&self, grid: &Grid2D) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for (z, e) in grid.zones.iter().zip(&self.by_zone) {
            let p = if self.total > 0.0 { e / self.total } else { 0.0 };
            match out.iter_mut().find(|(t, _)| *t == z.tag) {
                Some(entry) => entry.1 += p,
                None => out.push((z.tag.clone(), p)),
            }
        }
        out
    }
}

/// Face sums over the solved field. Energy of a face between two cells is
/// split between their zones like two capacitors in series (weight
/// `1/eps` each); a face touching an electrode belongs to the free cell.
pub fn solve_energies(field: &PotentialField<'_>, exec: Execution) -> FieldEnergy {
    let g = field.grid;
    let phi = &field.phi;
    let nx = g.nx;
    let ny = g.ny;
    let nz = g.zones.len();
    let ne = g.electrodes.len();
    let gx = g.dy / g.dx;
    let gy = g.dx / g.dy;
    let grounded = g.boundary == Boundary::Grounded;

    let rows = exec.map(ny, |j| {
        let mut zone_e = vec![0.0; nz];
        let mut charge = vec![0.0; ne];
        let mut add_face = |a: usize, b: usize, geo: f64| {
            let (fa, fb) = (g.is_fixed(a), g.is_fixed(b));
            if fa && fb && g.electrode_at(a) == g.electrode_at(b) {
                return;
            }
            let c = g.face_eps(a, b) * geo;
            let dphi = phi[a] - phi[b];
            let w = 0.5 * c * dphi * dphi;
            match (fa, fb) {
                (false, true) => zone_e[g.zone_at(a)] += w,
                (true, false) => zone_e[g.zone_at(b)] += w,
                _ => {
                    let (ea, eb) = (g.eps[a], g.eps[b]);
                    zone_e[g.zone_at(a)] += w * eb / (ea + eb);
                    zone_e[g.zone_at(b)] += w * ea / (ea + eb);
                }
            }
            if let Some(e) = g.electrode_at(a) {
                charge[e] += c * dphi;
            }
            if let Some(e) = g.electrode_at(b) {
                charge[e] -= c * dphi;
            }
        };
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                add_face(k, k + 1, gx);
            }
            if j + 1 < ny {
                add_face(k, k + nx, gy);
            }
        }
        if grounded {
            let mut boundary = |k: usize, geo: f64| {
                let c = 2.0 * g.eps[k] * geo;
                zone_e[g.zone_at(k)] += 0.5 * c * phi[k] * phi[k];
                if let Some(e) = g.electrode_at(k) {
                    charge[e] += c * phi[k];
                }
            };
            boundary(j * nx, gx);
            boundary(j * nx + nx - 1, gx);
            if j == 0 || j + 1 == ny {
                for i in 0..nx {
                    boundary(j * nx + i, gy);
                }
            }
        }
        (zone_e, charge)
    });

    let mut by_zone = vec![0.0; nz];
    let mut charges = vec![0.0; ne];
    for (z, c) in rows {
        for (acc, v) in by_zone.iter_mut().zip(z) {
            *acc += v;
        }
        for (acc, v) in charges.iter_mut().zip(c) {
            *acc += v;
        }
    }
    by_zone.iter_mut().for_each(|v| *v *= EPSILON_0);
    charges.iter_mut().for_each(|v| *v *= EPSILON_0);
    FieldEnergy {
        total: by_zone.iter().sum(),
        by_zone,
        charges,
    }
}

/// Capacitance values from one grid of the refinement schedule.
#[derive(Debug, Clone)]
pub struct GridCapacitance {
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// `2 W / V^2`, F/m.
    pub energy: f64,
    /// `Q / V` on the high-side electrode, F/m.
    pub charge: f64,
    /// Charge on the low-side electrode over `V` (ideally `-charge`).
    pub charge_low: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub participation: Vec<(String, f64)>,
}

impl GridCapacitance {
    pub fn value(&self, method: CapacitanceMethod) -> f64 {
        match method {
            CapacitanceMethod::Energy => self.energy,
            CapacitanceMethod::Charge => self.charge,
        }
    }

    pub fn method_gap(&self) -> f64 {
        (self.energy - self.charge).abs() / self.energy.abs().max(self.charge.abs())
    }
}

#[derive(Debug, Clone)]
pub struct CapacitanceResult {
    /// Richardson-extrapolated capacitance per length, F/m.
    pub c_per_length: f64,
    pub values_per_grid: Vec<GridCapacitance>,
    pub method: CapacitanceMethod,
    pub warnings: Vec<String>,
}

impl CapacitanceResult {
    pub fn finest(&self) -> &GridCapacitance {
        self.values_per_grid.last().expect("at least two grids")
    }

    /// Energy participation by zone tag on the finest grid.
    pub fn participation(&self, tag: &str) -> f64 {
        self.finest()
            .participation
            .iter()
            .filter(|(t, _)| t == tag)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Capacitance per unit length between the two electrodes of `cs`,
/// extrapolated from the two finest entries of `dx_schedule` assuming
/// second-order convergence.
pub fn capacitance_per_length(
    cs: &CrossSection,
    dx_schedule: &[f64],
    opts: &CapacitanceOptions,
) -> Result<CapacitanceResult> {
    if dx_schedule.len() < 2 {
        return Err(Error::Precondition("dx schedule needs at least two entries".into()));
    }
    if dx_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("dx schedule must be strictly refining".into()));
    }
    if cs.electrodes.len() != 2 {
        return Err(Error::Precondition(format!(
            "capacitance needs exactly two electrodes, found {}",
            cs.electrodes.len()
        )));
    }
    let exec = opts.solver.exec;
    let mut values = Vec::with_capacity(dx_schedule.len());
    for &dx in dx_schedule {
        let mut grid = discretize(cs, dx, &opts.discretize)?;
        grid.set_potentials(&[-0.5, 0.5])?;
        let field = solve_laplace(&grid, &opts.solver)?;
        let energy = solve_energies(&field, exec);
        let v = 1.0;
        log::debug!(
            "dx={dx:e}: {}x{} cells, {} iterations, residual {:e}",
            grid.nx,
            grid.ny,
            field.iterations,
            field.residual
        );
        values.push(GridCapacitance {
            dx: grid.dx,
            dy: grid.dy,
            nx: grid.nx,
            ny: grid.ny,
            energy: 2.0 * energy.total / (v * v),
            charge: energy.charges[1] / v,
            charge_low: energy.charges[0] / v,
            iterations: field.iterations,
            residual: field.residual,
            residual_history: field.residual_history.clone(),
            participation: energy.participation(&grid),
        });
    }

    let finest = values.last().unwrap();
    if finest.method_gap() > opts.max_method_gap {
        return Err(Error::Consistency {
            energy: finest.energy,
            charge: finest.charge,
        });
    }

    let mut warnings = Vec::new();
    let series: Vec<f64> = values.iter().map(|v| v.value(opts.method)).collect();
    let increasing = series.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = series.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        let msg = "per-grid capacitance is not monotone under refinement".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let n = values.len();
    let (coarse, fine) = (&values[n - 2], &values[n - 1]);
    let r2 = (coarse.dx / fine.dx).powi(2);
    let c_f = fine.value(opts.method);
    let c_c = coarse.value(opts.method);
    let c_per_length = (r2 * c_f - c_c) / (r2 - 1.0);

    Ok(CapacitanceResult {
        c_per_length,
        values_per_grid: values,
        method: opts.method,
        warnings,
    })
}

/// Fin capacitance from the 2D extrusion model, `C = (C/L) * length`.
pub fn fin_capacitance(
    cs: &CrossSection,
    fin_length: f64,
    dx_schedule: &[f64],
    opts: &CapacitanceOptions,
) -> Result<f64> {
    if !(fin_length.is_finite() && fin_length > 0.0) {
        return Err(Error::Precondition("fin length must be positive".into()));
    }
    Ok(capacitance_per_length(cs, dx_schedule, opts)?.c_per_length * fin_length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_fin_cross_section, FinGeometry, Material};

    const FF_PER_UM: f64 = 1e-9;

    /// eps_r eps_0 h / t
    fn parallel_plate_oracle(eps_r: f64, h: f64, t: f64) -> f64 {
        eps_r * 8.8541878128e-12 * h / t
    }

    #[test]
    fn closed_parallel_plate_matches_closed_form() {
        let (t, h) = (219e-9, 3.55e-6);
        let cs = CrossSection::parallel_plate(t, h, Material::silicon(), t).unwrap();
        let res = capacitance_per_length(&cs, &[t / 8.0, t / 16.0], &CapacitanceOptions::default()).unwrap();
        let exact = parallel_plate_oracle(11.7, h, t);
        assert!((exact / FF_PER_UM - 1.679).abs() < 5e-4);
        assert!(
            (res.c_per_length - exact).abs() / exact < 1e-6,
            "{} {:?}",
            res.c_per_length,
            res.values_per_grid
                .iter()
                .map(|v| (v.nx, v.ny, v.energy, v.charge))
                .collect::<Vec<_>>()
        );
        assert!(res.finest().method_gap() < 1e-6);
    }

    #[test]
    fn fin_capacitance_is_per_length_times_length() {
        let (t, h) = (219e-9, 3.55e-6);
        let cs = CrossSection::parallel_plate(t, h, Material::silicon(), t).unwrap();
        let opts = CapacitanceOptions::default();
        let sched = [t / 8.0, t / 16.0];
        let c = fin_capacitance(&cs, 100e-6, &sched, &opts).unwrap();
        let cl = capacitance_per_length(&cs, &sched, &opts).unwrap().c_per_length;
        assert!((c - cl * 100e-6).abs() <= 1e-12 * c);
        assert!(fin_capacitance(&cs, 0.0, &sched, &opts).is_err());
    }

    #[test]
    fn schedule_must_refine() {
        let cs = CrossSection::parallel_plate(1.0, 1.0, Material::vacuum(), 0.125).unwrap();
        let opts = CapacitanceOptions::default();
        assert!(capacitance_per_length(&cs, &[1.0 / 32.0], &opts).is_err());
        assert!(capacitance_per_length(&cs, &[1.0 / 32.0, 1.0 / 16.0], &opts).is_err());
    }

    #[test]
    fn symmetric_fin_has_opposite_electrode_charges_and_full_participation() {
        let mut fin = FinGeometry::new(200e-9, 1.2e-6);
        fin.pad_width = 0.5e-6;
        let cs = build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 3.0).unwrap();
        let res = capacitance_per_length(&cs, &[25e-9, 12.5e-9], &CapacitanceOptions::default()).unwrap();
        let f = res.finest();
        assert!((f.charge + f.charge_low).abs() / f.charge < 1e-3);
        let total: f64 = f.participation.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(res.participation("fin") > 0.5);
        // fringing only adds capacitance
        assert!(res.c_per_length > parallel_plate_oracle(11.7, 1.2e-6, 200e-9));
    }
}
