//! Project configuration: one TOML file, SI units spelled out in key names.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use finmet_core::fieldsolver::{Boundary, CapacitanceMethod, CapacitanceOptions, DiscretizeOptions, SolverSettings};
use finmet_core::geometry::{FinGeometry, Material, NitrideCap};
use finmet_core::met::JunctionSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ProjectConfig {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub materials: Vec<MaterialConfig>,
    pub fin: Option<FinConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub resonator: Option<ResonatorConfig>,
    pub loss: Option<LossConfig>,
    pub junction: Option<JunctionConfig>,
    /// Second barrier for the spread comparison; defaults to thermal AlOx.
    pub reference_junction: Option<JunctionConfig>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub design: DesignConfig,
    pub etch: Option<EtchConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MaterialConfig {
    pub name: String,
    pub rel_permittivity: f64,
    #[serde(default)]
    pub loss_tangent: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NitrideCapConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_cap_thickness")]
    pub thickness_m: f64,
    #[serde(default = "default_cap_eps")]
    pub rel_permittivity: f64,
}

fn yes() -> bool {
    true
}
fn default_cap_thickness() -> f64 {
    NitrideCap::default().thickness
}
fn default_cap_eps() -> f64 {
    NitrideCap::default().rel_permittivity
}

#[derive(Debug, Clone, Deserialize)]
pub struct FinConfig {
    pub thickness_m: f64,
    pub height_m: f64,
    pub length_m: Option<f64>,
    pub metal_thickness_m: Option<f64>,
    pub sidewall_coverage: Option<f64>,
    pub trench_depth_m: Option<f64>,
    pub pad_width_m: Option<f64>,
    #[serde(default = "silicon")]
    pub substrate: String,
    #[serde(default = "silicon")]
    pub barrier: String,
    pub nitride_cap: Option<NitrideCapConfig>,
}

fn silicon() -> String {
    "silicon".into()
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolverConfig {
    /// Defaults to `[t/8, t/16]`.
    pub dx_schedule_m: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_padding")]
    pub padding_factor: f64,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_padding() -> f64 {
    3.0
}
fn default_boundary() -> String {
    "reflecting".into()
}
fn default_method() -> String {
    "energy".into()
}
fn default_budget() -> usize {
    20_000_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dx_schedule_m: None,
            tol: default_tol(),
            padding_factor: default_padding(),
            boundary: default_boundary(),
            method: default_method(),
            node_budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SeriesEntryConfig {
    pub n_fins: u32,
    pub frequency_hz: f64,
    #[serde(default = "one")]
    pub fin_length_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
pub struct TraceConfig {
    pub path: PathBuf,
    pub n_fins: Option<u32>,
    #[serde(default = "one")]
    pub fin_length_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacitanceSource {
    /// `C_0` from the zero-fin frequency and the inductance.
    Measured,
    /// `C_0` given directly.
    Simulated,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResonatorConfig {
    pub inductance_h: Option<f64>,
    pub base_capacitance_f: Option<f64>,
    #[serde(default = "default_source")]
    pub base_capacitance_source: CapacitanceSource,
    #[serde(default = "default_fin_counts")]
    pub fin_counts: Vec<u32>,
    #[serde(default = "yes")]
    pub constrain_intercept: bool,
    #[serde(default)]
    pub series: Vec<SeriesEntryConfig>,
    #[serde(default)]
    pub traces: Vec<TraceConfig>,
}

fn default_source() -> CapacitanceSource {
    CapacitanceSource::Simulated
}
fn default_fin_counts() -> Vec<u32> {
    (0..8).collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct LossDeviceConfig {
    pub q_i: f64,
    pub n_fins: u32,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LossConfig {
    pub fin_capacitance_f: f64,
    pub base_capacitance_f: f64,
    /// Devices with known `Q_i`; `resfit` adds its fitted traces.
    #[serde(default)]
    pub devices: Vec<LossDeviceConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct JunctionConfig {
    pub barrier_thickness_m: f64,
    pub barrier_height_ev: f64,
    #[serde(default = "one")]
    pub effective_mass_ratio: f64,
    pub area_m2: f64,
    pub rel_permittivity: f64,
    #[serde(default = "default_gap")]
    pub gap_ev: f64,
    pub r0_ohm_m2: Option<f64>,
    pub normal_resistance_ohm: Option<f64>,
    #[serde(default)]
    pub temperature_k: f64,
}

fn default_gap() -> f64 {
    180e-6
}

#[derive(Debug, Clone, Deserialize)]
pub struct MonteCarloConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sigma_d")]
    pub sigma_d_m: f64,
}

fn default_samples() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_sigma_d() -> f64 {
    0.05e-9
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            samples: default_samples(),
            seed: default_seed(),
            sigma_d_m: default_sigma_d(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct DesignConfig {
    /// Pad area of the planar transmon used for the footprint comparison.
    #[serde(default = "default_pad_area")]
    pub reference_pad_area_m2: f64,
}

fn default_pad_area() -> f64 {
    200e-6 * 400e-6
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            reference_pad_area_m2: default_pad_area(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtchMethod {
    Digital,
    Ale,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EtchConfig {
    pub initial_thickness_m: Option<f64>,
    pub mask_width_m: Option<f64>,
    pub undercut_per_side_m: Option<f64>,
    pub target_thickness_m: f64,
    #[serde(default = "default_etch_method")]
    pub method: EtchMethod,
    #[serde(default = "default_oxide")]
    pub oxide_per_cycle_m: f64,
    #[serde(default = "default_ratio")]
    pub si_consumption_ratio: f64,
    #[serde(default = "default_ale")]
    pub ale_removal_per_side_m: f64,
}

fn default_etch_method() -> EtchMethod {
    EtchMethod::Digital
}
fn default_oxide() -> f64 {
    6e-9
}
fn default_ratio() -> f64 {
    finmet_core::fab::DEFAULT_SI_CONSUMPTION_RATIO
}
fn default_ale() -> f64 {
    finmet_core::fab::DEFAULT_ALE_REMOVAL_PER_SIDE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepTarget {
    Junction,
    Fin,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SweepConfig {
    pub target: SweepTarget,
    /// Key of the swept quantity inside `[junction]` or `[fin]`.
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parsed configuration plus any keys the schema did not recognise.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProjectConfig,
    pub unknown_keys: Vec<String>,
    pub source: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str, strict: bool) -> Result<(ProjectConfig, Vec<String>), CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    let mut unknown = Vec::new();
    let cfg: ProjectConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::Config(e.to_string()))?;
    if strict && !unknown.is_empty() {
        return Err(CliError::Config(format!(
            "unknown configuration keys: {}",
            unknown.join(", ")
        )));
    }
    for k in &unknown {
        log::warn!("ignoring unknown configuration key `{k}`");
    }
    Ok((cfg, unknown))
}

pub fn load_config(path: &Path, strict: bool) -> Result<LoadedConfig, CliError> {
    let source = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(source.clone()).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let (config, unknown_keys) = parse_config(&text, strict)?;
    Ok(LoadedConfig {
        config,
        unknown_keys,
        source,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {msg}"))
}

impl ProjectConfig {
    pub fn material(&self, name: &str) -> Result<Material, CliError> {
        if let Some(m) = self.materials.iter().find(|m| m.name == name) {
            let mat = Material {
                name: m.name.clone(),
                rel_permittivity: m.rel_permittivity,
                loss_tangent: m.loss_tangent,
            };
            mat.validate().map_err(|e| invalid("materials", e))?;
            return Ok(mat);
        }
        match name {
            "silicon" => Ok(Material::silicon()),
            "silicon_nitride" => Ok(Material::silicon_nitride()),
            "vacuum" => Ok(Material::vacuum()),
            other => Err(invalid("materials", format!("unknown material `{other}`"))),
        }
    }

    pub fn fin_block(&self) -> Result<&FinConfig, CliError> {
        self.fin
            .as_ref()
            .ok_or_else(|| CliError::Config("missing required key `fin` (fin geometry block)".into()))
    }

    pub fn fin_geometry(&self) -> Result<FinGeometry, CliError> {
        let f = self.fin_block()?;
        let mut g = FinGeometry::new(f.thickness_m, f.height_m);
        if let Some(v) = f.length_m {
            g.length = v;
        }
        if let Some(v) = f.metal_thickness_m {
            g.metal_thickness = v;
        }
        if let Some(v) = f.sidewall_coverage {
            g.sidewall_coverage = v;
        }
        if let Some(v) = f.trench_depth_m {
            g.trench_depth = v;
        }
        if let Some(v) = f.pad_width_m {
            g.pad_width = v;
        }
        if let Some(cap) = &f.nitride_cap {
            g.nitride_cap = cap.enabled.then_some(NitrideCap {
                thickness: cap.thickness_m,
                rel_permittivity: cap.rel_permittivity,
            });
        }
        g.validate().map_err(|e| invalid("fin", e))?;
        Ok(g)
    }

    pub fn capacitance_options(&self) -> Result<CapacitanceOptions, CliError> {
        let s = &self.solver;
        let boundary = match s.boundary.as_str() {
            "reflecting" => Boundary::Reflecting,
            "grounded" => Boundary::Grounded,
            other => {
                return Err(invalid(
                    "solver.boundary",
                    format!("expected reflecting|grounded, got `{other}`"),
                ))
            }
        };
        let method = match s.method.as_str() {
            "energy" => CapacitanceMethod::Energy,
            "charge" => CapacitanceMethod::Charge,
            other => {
                return Err(invalid(
                    "solver.method",
                    format!("expected energy|charge, got `{other}`"),
                ))
            }
        };
        Ok(CapacitanceOptions {
            solver: SolverSettings {
                tol: s.tol,
                ..SolverSettings::default()
            },
            discretize: DiscretizeOptions {
                node_budget: s.node_budget,
                boundary,
                ..DiscretizeOptions::default()
            },
            method,
            ..CapacitanceOptions::default()
        })
    }

    pub fn dx_schedule(&self, thickness: f64) -> Vec<f64> {
        self.solver
            .dx_schedule_m
            .clone()
            .unwrap_or_else(|| vec![thickness / 8.0, thickness / 16.0])
    }

    pub fn junction_spec(&self) -> Result<JunctionSpec, CliError> {
        let j = self
            .junction
            .as_ref()
            .ok_or_else(|| CliError::Config("missing required key `junction`".into()))?;
        j.to_spec("junction")
    }

    pub fn reference_spec(&self) -> Result<JunctionSpec, CliError> {
        match &self.reference_junction {
            Some(j) => j.to_spec("reference_junction"),
            None => Ok(JunctionSpec::alox_reference()),
        }
    }
}

impl JunctionConfig {
    pub fn to_spec(&self, key: &str) -> Result<JunctionSpec, CliError> {
        let spec = JunctionSpec {
            barrier_thickness: self.barrier_thickness_m,
            barrier_height: self.barrier_height_ev,
            effective_mass_ratio: self.effective_mass_ratio,
            area: self.area_m2,
            rel_permittivity: self.rel_permittivity,
            gap: self.gap_ev,
            r0: self.r0_ohm_m2.unwrap_or(1.0),
            temperature: self.temperature_k,
        };
        match (self.r0_ohm_m2, self.normal_resistance_ohm) {
            (Some(_), None) => {
                spec.validate().map_err(|e| invalid(key, e))?;
                Ok(spec)
            }
            (None, Some(rn)) => spec.with_normal_resistance(rn).map_err(|e| invalid(key, e)),
            _ => Err(invalid(
                key,
                "give exactly one of `r0_ohm_m2` and `normal_resistance_ohm`",
            )),
        }
    }

    /// Sets a field by its config key, for sweeps.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), CliError> {
        match key {
            "barrier_thickness_m" => self.barrier_thickness_m = value,
            "barrier_height_ev" => self.barrier_height_ev = value,
            "effective_mass_ratio" => self.effective_mass_ratio = value,
            "area_m2" => self.area_m2 = value,
            "rel_permittivity" => self.rel_permittivity = value,
            "gap_ev" => self.gap_ev = value,
            "temperature_k" => self.temperature_k = value,
            other => {
                return Err(invalid(
                    "sweep.parameter",
                    format!("cannot sweep junction key `{other}`"),
                ))
            }
        }
        Ok(())
    }
}

impl FinConfig {
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), CliError> {
        match key {
            "thickness_m" => self.thickness_m = value,
            "height_m" => self.height_m = value,
            "length_m" => self.length_m = Some(value),
            "metal_thickness_m" => self.metal_thickness_m = Some(value),
            "sidewall_coverage" => self.sidewall_coverage = Some(value),
            "trench_depth_m" => self.trench_depth_m = Some(value),
            "pad_width_m" => self.pad_width_m = Some(value),
            other => return Err(invalid("sweep.parameter", format!("cannot sweep fin key `{other}`"))),
        }
        Ok(())
    }
}
