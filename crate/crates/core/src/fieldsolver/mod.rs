//! 2D electrostatics on a regular cell-centred grid.
//!
//! Each cell carries a relative permittivity and is either free or held at
//! an electrode potential. The discrete problem is the flux-conservative
//! five-point form of `div(eps grad phi) = 0`, with face permittivity the
//! harmonic mean of the two adjacent cells. It is solved by conjugate
//! gradients preconditioned with a Galerkin multigrid V-cycle.
//!
//! Grid alignment: along `x`, cell centres sit on integer multiples of `dx`
//! so that symmetric structures centred on `x = 0` stay symmetric and
//! electrode faces placed on multiples of `dx` coincide with cell centres.
//! Along `y`, cell faces coincide with the bounding-box edges.

mod capacitance;
mod multigrid;

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{CrossSection, Material};

pub use capacitance::{
    capacitance_per_length, fin_capacitance, solve_energies, CapacitanceMethod, CapacitanceOptions, CapacitanceResult,
    FieldEnergy, GridCapacitance,
};

use multigrid::{pcg, Multigrid, Stencil};

/// Sentinel for cells not inside any electrode.
const FREE: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Zero normal field on the outer box.
    #[default]
    Reflecting,
    /// Outer box held at 0 V.
    Grounded,
}

#[derive(Debug, Clone)]
pub struct DiscretizeOptions {
    pub node_budget: usize,
    pub min_cells_across: usize,
    pub boundary: Boundary,
    pub exec: Execution,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        DiscretizeOptions {
            node_budget: 20_000_000,
            min_cells_across: 8,
            boundary: Boundary::Reflecting,
            exec: Execution::default(),
        }
    }
}

/// Dielectric bookkeeping unit: a region tag and its material.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub tag: String,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridElectrode {
    pub label: String,
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Centre of cell (0, 0).
    pub x_first: f64,
    pub y_first: f64,
    pub eps: Vec<f64>,
    zone_of: Vec<u16>,
    pub zones: Vec<Zone>,
    electrode_of: Vec<u16>,
    pub electrodes: Vec<GridElectrode>,
    pub boundary: Boundary,
}

impl Grid2D {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_first + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_first + j as f64 * self.dy
    }

    #[inline]
    pub fn is_fixed(&self, k: usize) -> bool {
        self.electrode_of[k] != FREE
    }

    pub fn electrode_at(&self, k: usize) -> Option<usize> {
        let e = self.electrode_of[k];
        (e != FREE).then_some(e as usize)
    }

    /// Potential of a fixed cell, `None` for free cells.
    pub fn fixed_value(&self, k: usize) -> Option<f64> {
        self.electrode_at(k).map(|e| self.electrodes[e].potential)
    }

    pub fn fixed_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_fixed(k)).collect()
    }

    pub fn zone_at(&self, k: usize) -> usize {
        self.zone_of[k] as usize
    }

    /// Number of fixed cells belonging to each electrode.
    pub fn electrode_cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.electrodes.len()];
        for &e in &self.electrode_of {
            if e != FREE {
                counts[e as usize] += 1;
            }
        }
        counts
    }

    pub fn set_potentials(&mut self, potentials: &[f64]) -> Result<()> {
        if potentials.len() != self.electrodes.len() {
            return Err(Error::Precondition(format!(
                "{} potentials for {} electrodes",
                potentials.len(),
                self.electrodes.len()
            )));
        }
        for (e, &v) in self.electrodes.iter_mut().zip(potentials) {
            e.potential = v;
        }
        Ok(())
    }

    /// Face coefficient `eps_face` between cells `a` and `b`.
    #[inline]
    fn face_eps(&self, a: usize, b: usize) -> f64 {
        match (self.is_fixed(a), self.is_fixed(b)) {
            (false, true) => self.eps[a],
            (true, false) => self.eps[b],
            _ => {
                let (ea, eb) = (self.eps[a], self.eps[b]);
                2.0 * ea * eb / (ea + eb)
            }
        }
    }
}

/// Samples a cross-section onto a grid with spacing close to `target_dx`.
pub fn discretize(cs: &CrossSection, target_dx: f64, opts: &DiscretizeOptions) -> Result<Grid2D> {
    cs.validate()?;
    if !(target_dx.is_finite() && target_dx > 0.0) {
        return Err(Error::Precondition("grid spacing must be positive".into()));
    }
    if let Some(feature) = cs.resolve_feature {
        let cells = feature / target_dx;
        if cells < opts.min_cells_across as f64 * (1.0 - 1e-9) {
            return Err(Error::Resolution {
                feature,
                cells,
                required: opts.min_cells_across,
            });
        }
    }
    let bb = cs.bbox;
    let dx = target_dx;
    let k_min = (bb.x0 / dx - 1e-9).ceil() as i64;
    let k_max = (bb.x1 / dx + 1e-9).floor() as i64;
    let nx = (k_max - k_min + 1).max(0) as usize;
    let height = bb.height();
    let ny = (height / dx - 1e-9).ceil().max(1.0) as usize;
    let dy = height / ny as f64;
    if nx < 16 || ny < 16 {
        return Err(Error::Precondition(format!(
            "grid {nx} x {ny} is below the 16 x 16 minimum"
        )));
    }
    let nodes = nx.saturating_mul(ny);
    if nodes > opts.node_budget {
        return Err(Error::Resource {
            nodes,
            budget: opts.node_budget,
        });
    }
    let x_first = k_min as f64 * dx;
    let y_first = bb.y0 + 0.5 * dy;

    let mut zones = vec![Zone {
        tag: cs.background.name.clone(),
        material: cs.background.clone(),
    }];
    let mut region_zone = Vec::with_capacity(cs.regions.len());
    for r in &cs.regions {
        let pos = zones.iter().position(|z| z.tag == r.tag() && z.material == r.material);
        let id = match pos {
            Some(p) => p,
            None => {
                zones.push(Zone {
                    tag: r.tag().to_string(),
                    material: r.material.clone(),
                });
                zones.len() - 1
            }
        };
        region_zone.push(id as u16);
    }

    let mut zone_of = vec![0u16; nodes];
    let mut electrode_of = vec![FREE; nodes];
    opts.exec.for_each_chunk_mut(&mut zone_of, nx, |j, row| {
        let y = y_first + j as f64 * dy;
        for (i, z) in row.iter_mut().enumerate() {
            let x = x_first + i as f64 * dx;
            if let Some(r) = cs.region_index_at(x, y) {
                *z = region_zone[r];
            }
        }
    });
    let snap = 1e-6 * dx.min(dy);
    opts.exec.for_each_chunk_mut(&mut electrode_of, nx, |j, row| {
        let y = y_first + j as f64 * dy;
        for (i, e) in row.iter_mut().enumerate() {
            let x = x_first + i as f64 * dx;
            if let Some(idx) = cs.electrode_index_near(x, y, snap) {
                *e = idx as u16;
            }
        }
    });
    let eps = zone_of
        .iter()
        .map(|&z| zones[z as usize].material.rel_permittivity)
        .collect();

    let grid = Grid2D {
        nx,
        ny,
        dx,
        dy,
        x_first,
        y_first,
        eps,
        zone_of,
        zones,
        electrode_of,
        electrodes: cs
            .electrodes
            .iter()
            .map(|e| GridElectrode {
                label: e.label.clone(),
                potential: e.potential,
            })
            .collect(),
        boundary: opts.boundary,
    };
    for (e, count) in grid.electrode_cell_counts().into_iter().enumerate() {
        if count == 0 {
            return Err(Error::Resolution {
                feature: cs.electrodes[e]
                    .rects
                    .iter()
                    .map(|r| r.width().min(r.height()))
                    .fold(0.0, f64::max),
                cells: 0.0,
                required: 1,
            });
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Relative residual target, in `[1e-12, 1e-4]`.
    pub tol: f64,
    /// Budget in fine-grid sweep equivalents.
    pub max_sweeps: usize,
    pub smoothing_steps: usize,
    pub exec: Execution,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_sweeps: 1_000_000,
            smoothing_steps: 2,
            exec: Execution::default(),
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolverSettings {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialField<'g> {
    pub grid: &'g Grid2D,
    pub phi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub multigrid_levels: usize,
}

/// Assembles the reduced system over free cells. Fixed rows are identity
/// rows with zero right-hand side; couplings to fixed cells move to `b`.
fn assemble(grid: &Grid2D, exec: Execution) -> (Stencil, Vec<f64>) {
    let nx = grid.nx;
    let ny = grid.ny;
    let gx = grid.dy / grid.dx;
    let gy = grid.dx / grid.dy;
    let grounded = grid.boundary == Boundary::Grounded;
    let n = grid.len();
    let mut rows: Vec<([f64; 5], f64)> = vec![([0.0; 5], 0.0); n];
    exec.for_each_chunk_mut(&mut rows, nx, |j, out| {
        for (i, slot) in out.iter_mut().enumerate() {
            let k = j * nx + i;
            if grid.is_fixed(k) {
                *slot = ([1.0, 0.0, 0.0, 0.0, 0.0], 0.0);
                continue;
            }
            let mut a = [0.0; 5];
            let mut b = 0.0;
            let mut face = |nb: usize, g: f64, slot_idx: Option<usize>, diag: &mut f64| {
                let c = grid.face_eps(k, nb) * g;
                *diag += c;
                match grid.fixed_value(nb) {
                    Some(v) => b += c * v,
                    None => {
                        if let Some(s) = slot_idx {
                            a[s] = -c;
                        }
                    }
                }
            };
            let mut diag = 0.0;
            if i + 1 < nx {
                face(k + 1, gx, Some(1), &mut diag);
            } else if grounded {
                diag += 2.0 * grid.eps[k] * gx;
            }
            if i > 0 {
                face(k - 1, gx, None, &mut diag);
            } else if grounded {
                diag += 2.0 * grid.eps[k] * gx;
            }
            if j + 1 < ny {
                face(k + nx, gy, Some(2), &mut diag);
            } else if grounded {
                diag += 2.0 * grid.eps[k] * gy;
            }
            if j > 0 {
                face(k - nx, gy, None, &mut diag);
            } else if grounded {
                diag += 2.0 * grid.eps[k] * gy;
            }
            a[0] = diag;
            *slot = (a, b);
        }
    });
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (row, rhs) in rows {
        a.push(row);
        b.push(rhs);
    }
    let dead = grid.fixed_mask();
    (Stencil { nx, ny, a, dead }, b)
}

/// Solves for the potential with the grid's current electrode potentials.
pub fn solve_laplace<'g>(grid: &'g Grid2D, settings: &SolverSettings) -> Result<PotentialField<'g>> {
    if !(1e-12..=1e-4).contains(&settings.tol) {
        return Err(Error::Precondition(format!(
            "tolerance {:e} outside [1e-12, 1e-4]",
            settings.tol
        )));
    }
    let exec = settings.exec;
    let (op, b) = assemble(grid, exec);
    let nu = settings.smoothing_steps.max(1);
    let mut mg = Multigrid::build(op, nu, exec).ok_or(Error::Convergence {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let per_iteration = 2 + 2 * nu;
    let max_iterations = (settings.max_sweeps / per_iteration).max(1);
    let out = pcg(&mut mg, &b, settings.tol, max_iterations);
    if !out.converged {
        return Err(Error::Convergence {
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    let mut phi = out.x;
    for (k, v) in phi.iter_mut().enumerate() {
        if let Some(fixed) = grid.fixed_value(k) {
            *v = fixed;
        }
    }
    Ok(PotentialField {
        grid,
        phi,
        residual: out.residual,
        iterations: out.iterations,
        residual_history: out.history,
        multigrid_levels: mg.depth(),
    })
}

impl PotentialField<'_> {
    /// Bilinear interpolation of the potential at `(x, y)`, clamped to the
    /// grid of cell centres.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let g = self.grid;
        let fx = ((x - g.x_first) / g.dx).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.y_first) / g.dy).clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx - 2);
        let j0 = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let p = |i: usize, j: usize| self.phi[g.index(i, j)];
        (1.0 - tx) * (1.0 - ty) * p(i0, j0)
            + tx * (1.0 - ty) * p(i0 + 1, j0)
            + (1.0 - tx) * ty * p(i0, j0 + 1)
            + tx * ty * p(i0 + 1, j0 + 1)
    }

    /// Field snapshot as CSV with columns `x,y,phi,eps`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let g = self.grid;
        writeln!(w, "x,y,phi,eps")?;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                writeln!(w, "{:e},{:e},{:e},{:e}", g.x(i), g.y(j), self.phi[k], g.eps[k])?;
            }
        }
        Ok(())
    }

    /// Convergence log as CSV with columns `iteration,relative_residual`.
    pub fn write_convergence_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iteration,relative_residual")?;
        for (it, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{},{:e}", it + 1, r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_fin_cross_section, Electrode, FinGeometry, Rect};

    fn fin219() -> CrossSection {
        let fin = FinGeometry::new(219e-9, 3.55e-6);
        build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 3.0).unwrap()
    }

    #[test]
    fn resolution_rule_needs_eight_cells_across_the_fin() {
        let cs = fin219();
        let opts = DiscretizeOptions::default();
        assert!(matches!(discretize(&cs, 40e-9, &opts), Err(Error::Resolution { .. })));
        assert!(discretize(&cs, 20e-9, &opts).is_ok());
        assert!(discretize(&cs, 219e-9 / 8.0, &opts).is_ok());
    }

    #[test]
    fn node_budget_is_enforced() {
        let cs = fin219();
        let opts = DiscretizeOptions {
            node_budget: 1000,
            ..Default::default()
        };
        assert!(matches!(discretize(&cs, 20e-9, &opts), Err(Error::Resource { .. })));
    }

    #[test]
    fn full_height_plates_fix_exactly_their_columns() {
        let cs = CrossSection::parallel_plate(1.0, 1.0, Material::vacuum(), 0.125).unwrap();
        let g = discretize(&cs, 1.0 / 32.0, &DiscretizeOptions::default()).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.x(i);
                let expect = x <= -0.5 + 1e-12 || x >= 0.5 - 1e-12;
                assert_eq!(g.is_fixed(g.index(i, j)), expect, "i={i} x={x}");
            }
        }
    }

    #[test]
    fn fin_cells_get_silicon_permittivity() {
        let cs = fin219();
        let g = discretize(&cs, 219e-9 / 8.0, &DiscretizeOptions::default()).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = (g.x(i), g.y(j));
                let k = g.index(i, j);
                if x.abs() < 100e-9 && y > 0.1e-6 && y < 3.4e-6 {
                    assert_eq!(g.eps[k], 11.7);
                }
                if y > 4.0e-6 || (x.abs() > 2.2e-6 && y > 0.1e-6) {
                    assert_eq!(g.eps[k], 1.0);
                }
            }
        }
    }

    #[test]
    fn parallel_plate_potential_is_linear() {
        let cs = CrossSection::parallel_plate(1.0, 0.75, Material::new("d", 3.0), 0.125).unwrap();
        let g = discretize(&cs, 1.0 / 40.0, &DiscretizeOptions::default()).unwrap();
        let f = solve_laplace(&g, &SolverSettings::with_tol(1e-10)).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.x(i).clamp(-0.5, 0.5);
                let exact = x;
                assert!((f.phi[g.index(i, j)] - exact).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn maximum_principle_holds() {
        let cs = fin219();
        let g = discretize(&cs, 219e-9 / 8.0, &DiscretizeOptions::default()).unwrap();
        let f = solve_laplace(&g, &SolverSettings::default()).unwrap();
        assert!(f.residual <= 1e-8);
        let lo = f.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -0.5 - 1e-7 && hi <= 0.5 + 1e-7, "{lo} {hi}");
    }

    #[test]
    fn tolerance_range_is_checked() {
        let cs = CrossSection::parallel_plate(1.0, 1.0, Material::vacuum(), 0.125).unwrap();
        let g = discretize(&cs, 1.0 / 32.0, &DiscretizeOptions::default()).unwrap();
        assert!(solve_laplace(&g, &SolverSettings::with_tol(1e-3)).is_err());
        assert!(solve_laplace(&g, &SolverSettings::with_tol(1e-13)).is_err());
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let cs = fin219();
        let g = discretize(&cs, 219e-9 / 8.0, &DiscretizeOptions::default()).unwrap();
        let settings = SolverSettings {
            tol: 1e-12,
            max_sweeps: 12,
            ..Default::default()
        };
        match solve_laplace(&g, &settings) {
            Err(Error::Convergence { residual, .. }) => assert!(residual > 1e-12),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    /// Observed convergence order of an interior probe under grid halving:
    /// two full-height plates in a grounded vacuum box.
    #[test]
    fn interior_potential_converges_at_second_order() {
        let mut cs = CrossSection::new(Rect::new(-1.0, 0.0, 1.0, 1.0), Material::vacuum());
        cs.electrodes
            .push(Electrode::new("L", -0.5, vec![Rect::new(-1.0, 0.0, -0.75, 1.0)]));
        cs.electrodes
            .push(Electrode::new("R", 0.5, vec![Rect::new(0.75, 0.0, 1.0, 1.0)]));
        let probe = |dx: f64| {
            let opts = DiscretizeOptions {
                boundary: Boundary::Grounded,
                ..Default::default()
            };
            let g = discretize(&cs, dx, &opts).unwrap();
            let f = solve_laplace(&g, &SolverSettings::with_tol(1e-12)).unwrap();
            f.sample(0.25, 0.75)
        };
        let (a, b, c) = (probe(1.0 / 16.0), probe(1.0 / 32.0), probe(1.0 / 64.0));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order > 1.7 && order < 2.4, "observed order {order}");
    }

    #[test]
    fn solve_is_deterministic_across_execution_modes() {
        let cs = fin219();
        let opts = DiscretizeOptions::default();
        let g = discretize(&cs, 219e-9 / 8.0, &opts).unwrap();
        let par = solve_laplace(&g, &SolverSettings::default()).unwrap();
        let seq = solve_laplace(
            &g,
            &SolverSettings {
                exec: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(par.residual_history.len(), seq.residual_history.len());
        assert!(par
            .residual_history
            .iter()
            .zip(&seq.residual_history)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(par.phi.iter().zip(&seq.phi).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
