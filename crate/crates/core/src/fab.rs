//! Fin thinning bookkeeping: KOH undercut and digital-etch schedules.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thinnest fin a plan may target.
pub const MINIMUM_VIABLE: f64 = 3e-9;
pub const DEFAULT_SI_CONSUMPTION_RATIO: f64 = 0.45;
/// Per-side removal of one atomic-layer-etch cycle.
pub const DEFAULT_ALE_REMOVAL_PER_SIDE: f64 = 0.1e-9;

/// Relative slack under which a final thickness counts as on target.
const SNAP: f64 = 1e-12;

/// Fin width left under a mask after KOH undercut on both sides.
pub fn undercut_correction(mask_width: f64, undercut_per_side: f64) -> Result<f64> {
    if !(mask_width.is_finite() && undercut_per_side.is_finite() && undercut_per_side >= 0.0) {
        return Err(Error::Domain(
            "mask width and undercut must be finite, undercut >= 0".into(),
        ));
    }
    let t = mask_width - 2.0 * undercut_per_side;
    if !(t > 0.0) {
        return Err(Error::Infeasible(format!(
            "mask {mask_width:e} m with {undercut_per_side:e} m undercut per side leaves no fin"
        )));
    }
    Ok(t)
}

/// Mask width needed for fin width `fin` given the undercut.
pub fn mask_for_fin(fin: f64, undercut_per_side: f64) -> f64 {
    fin + 2.0 * undercut_per_side
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtchKind {
    Digital,
    Ale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtchPlan {
    pub kind: EtchKind,
    pub initial_thickness: f64,
    pub target_thickness: f64,
    /// Oxide grown per cycle (digital etch only; zero for ALE).
    pub oxide_per_cycle: f64,
    /// Silicon consumed per unit oxide grown, per side.
    pub si_consumption_ratio: f64,
    /// Total fin thinning per cycle, both sides.
    pub removal_per_cycle: f64,
    pub cycles: u32,
    pub final_thickness: f64,
    /// Left for the final timed KOH trim.
    pub residual_trim: f64,
}

fn plan_cycles(t0: f64, target: f64, per_cycle: f64) -> (u32, f64) {
    let budget = t0 - target;
    let mut n = ((budget / per_cycle) * (1.0 + SNAP)).floor().max(0.0) as u32;
    loop {
        let fin = t0 - n as f64 * per_cycle;
        if (fin - target).abs() <= SNAP * target {
            return (n, target);
        }
        if fin > target {
            return (n, fin);
        }
        n -= 1;
    }
}

fn check_thicknesses(t0: f64, target: f64, min_viable: f64) -> Result<()> {
    if !(t0.is_finite() && target.is_finite()) {
        return Err(Error::Domain("thicknesses must be finite".into()));
    }
    if target < min_viable {
        return Err(Error::Infeasible(format!(
            "target {target:e} m is below the minimum viable {min_viable:e} m"
        )));
    }
    if !(t0 > target) {
        return Err(Error::Domain("initial thickness must exceed the target".into()));
    }
    Ok(())
}

/// Oxidise-and-strip schedule from `t0` to `target` that never undershoots.
pub fn digital_etch_plan(t0: f64, target: f64, oxide_per_cycle: f64, ratio: f64) -> Result<EtchPlan> {
    check_thicknesses(t0, target, MINIMUM_VIABLE)?;
    if !(1e-9..=10e-9).contains(&oxide_per_cycle) {
        return Err(Error::Domain("oxide per cycle must lie in [1, 10] nm".into()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain("Si consumption ratio must lie in (0, 1]".into()));
    }
    let per_cycle = 2.0 * ratio * oxide_per_cycle;
    let (cycles, final_thickness) = plan_cycles(t0, target, per_cycle);
    Ok(EtchPlan {
        kind: EtchKind::Digital,
        initial_thickness: t0,
        target_thickness: target,
        oxide_per_cycle,
        si_consumption_ratio: ratio,
        removal_per_cycle: per_cycle,
        cycles,
        final_thickness,
        residual_trim: final_thickness - target,
    })
}

/// Atomic-layer-etch schedule removing `removal_per_side` from each wall per
/// cycle.
pub fn ale_plan(t0: f64, target: f64, removal_per_side: f64) -> Result<EtchPlan> {
    check_thicknesses(t0, target, MINIMUM_VIABLE)?;
    if !(removal_per_side > 0.0 && removal_per_side <= 1e-9) {
        return Err(Error::Domain("ALE removal per side must lie in (0, 1] nm".into()));
    }
    let per_cycle = 2.0 * removal_per_side;
    let (cycles, final_thickness) = plan_cycles(t0, target, per_cycle);
    Ok(EtchPlan {
        kind: EtchKind::Ale,
        initial_thickness: t0,
        target_thickness: target,
        oxide_per_cycle: 0.0,
        si_consumption_ratio: 1.0,
        removal_per_cycle: per_cycle,
        cycles,
        final_thickness,
        residual_trim: final_thickness - target,
    })
}

impl EtchPlan {
    pub fn thickness_after(&self, cycle: u32) -> f64 {
        if cycle >= self.cycles {
            self.final_thickness
        } else {
            self.initial_thickness - cycle as f64 * self.removal_per_cycle
        }
    }

    /// `cycle,thickness_m` rows, starting from cycle 0.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "cycle,thickness_m")?;
        for k in 0..=self.cycles {
            writeln!(w, "{k},{:e}", self.thickness_after(k))?;
        }
        Ok(())
    }

    pub fn recipe(&self) -> String {
        let nm = |v: f64| v * 1e9;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "fin thinning plan ({})",
            match self.kind {
                EtchKind::Digital => "digital etch",
                EtchKind::Ale => "atomic layer etch",
            }
        );
        let _ = writeln!(
            s,
            "start: {:.3} nm, target: {:.3} nm",
            nm(self.initial_thickness),
            nm(self.target_thickness)
        );
        match self.kind {
            EtchKind::Digital => {
                let _ = writeln!(
                    s,
                    "cycle: O2 plasma oxidation to {:.3} nm oxide, HF strip; removes {:.3} nm of fin ({}x Si per oxide per side)",
                    nm(self.oxide_per_cycle),
                    nm(self.removal_per_cycle),
                    self.si_consumption_ratio
                );
            }
            EtchKind::Ale => {
                let _ = writeln!(
                    s,
                    "cycle: one ALE cycle, removes {:.3} nm of fin",
                    nm(self.removal_per_cycle)
                );
            }
        }
        let _ = writeln!(s, "repeat {} cycles -> {:.3} nm", self.cycles, nm(self.final_thickness));
        if self.residual_trim > 0.0 {
            let _ = writeln!(s, "final timed KOH trim: {:.3} nm", nm(self.residual_trim));
        } else {
            let _ = writeln!(s, "no final trim needed");
        }
        s
    }
}
