//! Subcommand pipelines. Each returns the files it wrote and a short summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use finmet_core::exec::Execution;
use finmet_core::fab::{ale_plan, digital_etch_plan, undercut_correction, EtchPlan};
use finmet_core::fieldsolver::{capacitance_per_length, CapacitanceResult};
use finmet_core::geometry::build_fin_cross_section;
use finmet_core::met::{
    area_sensitivity, compare_barriers, diagonalized_params, junction_energies, transmon_params, wkb_kappa,
    BarrierComparison, JunctionSpec, SpreadReport, TransmonParams,
};
use finmet_core::resonator::{
    capacitive_participation, extract_fin_loss, fit_hanger, hanger_s21, lc_frequency, HangerFit, HangerFitOptions,
    LossBudget, LossDevice, ResonatorSeries, S21Trace, SeriesEntry, SeriesFitOptions,
};
use finmet_core::units::{EPSILON_0, PLANCK};

use crate::config::{CapacitanceSource, EtchMethod, ProjectConfig, SweepTarget};
use crate::error::CliError;
use crate::record::sha256_hex;
use crate::svg::{plot, Series, Style};
use crate::table::{num, Table};
use crate::touchstone::read_trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Svg,
    Txt,
}

#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub seed: Option<u64>,
    pub exec: Execution,
    /// Directory that relative paths in the config are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
    /// Sub-tasks that failed without aborting the command.
    pub failures: Vec<CliError>,
}

impl CommandOutput {
    fn table(&mut self, ctx: &Context, name: &str, t: &Table) -> Result<(), CliError> {
        let p = ctx.out_dir.join(name);
        t.write(&p)?;
        self.files.push(p);
        Ok(())
    }

    fn text(&mut self, ctx: &Context, name: &str, body: &str) -> Result<(), CliError> {
        let p = ctx.out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.files.push(p);
        Ok(())
    }

    pub fn exit_code(&self) -> i32 {
        self.failures.iter().map(CliError::exit_code).max().unwrap_or(0)
    }
}

impl Context {
    fn seed(&self, cfg: &ProjectConfig) -> u64 {
        self.seed.unwrap_or(cfg.monte_carlo.seed)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

struct FinSolve {
    result: CapacitanceResult,
    geometry_hash: String,
    parallel_plate: f64,
    length: f64,
}

fn solve_fin(cfg: &ProjectConfig, ctx: &Context) -> Result<FinSolve, CliError> {
    let fin = cfg.fin_geometry()?;
    let fc = cfg.fin_block()?;
    let substrate = cfg.material(&fc.substrate)?;
    let barrier = cfg.material(&fc.barrier)?;
    let cs = build_fin_cross_section(&fin, &substrate, &barrier, cfg.solver.padding_factor)
        .map_err(|e| CliError::core("fin cross-section", e))?;
    let geometry_hash = sha256_hex(cs.to_toml().as_bytes())[..16].to_string();
    let opts = cfg.capacitance_options()?.with_exec(ctx.exec);
    let context = format!(
        "capacitance of t = {:.1} nm, h = {:.3} um fin (geometry {geometry_hash})",
        fin.thickness * 1e9,
        fin.height * 1e6
    );
    let result =
        capacitance_per_length(&cs, &cfg.dx_schedule(fin.thickness), &opts).map_err(|e| CliError::core(&context, e))?;
    Ok(FinSolve {
        result,
        geometry_hash,
        parallel_plate: barrier.rel_permittivity * EPSILON_0 * fin.height / fin.thickness,
        length: fin.length,
    })
}

pub fn capacitance(cfg: &ProjectConfig, ctx: &Context) -> Result<CommandOutput, CliError> {
    let solve = solve_fin(cfg, ctx)?;
    let r = &solve.result;
    let mut out = CommandOutput::default();

    let mut t = Table::new(&[
        "geometry_hash",
        "dx_m",
        "dy_m",
        "nx",
        "ny",
        "iterations",
        "c_energy_f_per_m",
        "c_charge_f_per_m",
        "c_extrapolated_f_per_m",
    ]);
    for g in &r.values_per_grid {
        t.push(vec![
            solve.geometry_hash.clone(),
            num(g.dx),
            num(g.dy),
            g.nx.to_string(),
            g.ny.to_string(),
            g.iterations.to_string(),
            num(g.energy),
            num(g.charge),
            num(r.c_per_length),
        ]);
    }
    out.table(ctx, "capacitance.csv", &t)?;

    let mut p = Table::new(&["zone", "participation"]);
    for (zone, v) in &r.finest().participation {
        p.push(vec![zone.clone(), num(*v)]);
    }
    out.table(ctx, "participation.csv", &p)?;

    let mut conv = Table::new(&["dx_m", "iteration", "relative_residual"]);
    for g in &r.values_per_grid {
        for (k, res) in g.residual_history.iter().enumerate() {
            conv.push(vec![num(g.dx), (k + 1).to_string(), num(*res)]);
        }
    }
    out.table(ctx, "convergence.csv", &conv)?;

    let fin_c = r.c_per_length * solve.length;
    let mut curve = Vec::new();
    if let Some(res) = &cfg.resonator {
        if let Some(c0) = res.base_capacitance_f {
            let mut c = Table::new(&["n_fins", "c_ratio", "frequency_hz"]);
            for &n in &res.fin_counts {
                let ratio = 1.0 + n as f64 * fin_c / c0;
                let f = match res.inductance_h {
                    Some(l) => num(lc_frequency(l, c0 + n as f64 * fin_c).map_err(|e| CliError::core("resonator", e))?),
                    None => String::new(),
                };
                curve.push((n as f64, ratio));
                c.push(vec![n.to_string(), num(ratio), f]);
            }
            out.table(ctx, "fin_curve.csv", &c)?;
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, "geometry {}", solve.geometry_hash);
    for g in &r.values_per_grid {
        let _ = writeln!(
            s,
            "dx = {:.3} nm ({} x {}): energy {:.5} fF/um, charge {:.5} fF/um, {} iterations",
            g.dx * 1e9,
            g.nx,
            g.ny,
            g.energy * 1e9,
            g.charge * 1e9,
            g.iterations
        );
    }
    let _ = writeln!(s, "extrapolated C/L = {:.4} fF/um", r.c_per_length * 1e9);
    let _ = writeln!(s, "parallel-plate C/L = {:.4} fF/um", solve.parallel_plate * 1e9);
    let _ = writeln!(
        s,
        "fin capacitance over {:.1} um = {:.2} fF",
        solve.length * 1e6,
        fin_c * 1e15
    );
    for (zone, v) in &r.finest().participation {
        let _ = writeln!(s, "participation {zone}: {v:.4}");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }

    match ctx.format {
        OutputFormat::Svg if !curve.is_empty() => {
            let svg = plot(
                "Predicted capacitance ratio",
                "fins",
                "C_n / C_0",
                &[Series {
                    name: "model".into(),
                    points: curve,
                    style: Style::Line,
                }],
            );
            out.text(ctx, "fin_curve.svg", &svg)?;
        }
        OutputFormat::Svg => {
            let series = r
                .values_per_grid
                .iter()
                .map(|g| Series {
                    name: format!("dx = {:.2} nm", g.dx * 1e9),
                    points: g
                        .residual_history
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (k as f64 + 1.0, v.log10()))
                        .collect(),
                    style: Style::Line,
                })
                .collect::<Vec<_>>();
            out.text(
                ctx,
                "convergence.svg",
                &plot("Solver convergence", "iteration", "log10 residual", &series),
            )?;
        }
        OutputFormat::Txt => out.text(ctx, "capacitance.txt", &s)?,
        OutputFormat::Csv => {}
    }
    out.summary = s;
    Ok(out)
}

fn base_capacitance(cfg: &ProjectConfig, f0: Option<f64>) -> Option<f64> {
    let res = cfg.resonator.as_ref()?;
    match res.base_capacitance_source {
        CapacitanceSource::Simulated => res.base_capacitance_f,
        CapacitanceSource::Measured => {
            let (l, f0) = (res.inductance_h?, f0?);
            Some(1.0 / (l * (2.0 * std::f64::consts::PI * f0).powi(2)))
        }
    }
}

fn write_series(
    cfg: &ProjectConfig,
    ctx: &Context,
    out: &mut CommandOutput,
    entries: &[SeriesEntry],
) -> Result<ResonatorSeries, CliError> {
    let opts = SeriesFitOptions {
        constrain_intercept: cfg.resonator.as_ref().is_none_or(|r| r.constrain_intercept),
    };
    let s = finmet_core::resonator::fit_series(entries, opts).map_err(|e| CliError::core("series fit", e))?;
    let mut t = Table::new(&["n_fins", "fin_length_scale", "frequency_hz", "c_ratio"]);
    for (e, r) in s.entries.iter().zip(&s.ratios) {
        t.push(vec![
            e.n_fins.to_string(),
            num(e.fin_length_scale),
            num(e.frequency),
            num(*r),
        ]);
    }
    out.table(ctx, "series.csv", &t)?;
    let c0 = base_capacitance(cfg, s.entries.first().map(|e| e.frequency));
    let mut f = Table::new(&[
        "slope",
        "slope_stderr",
        "intercept",
        "r_squared",
        "constrained",
        "base_capacitance_f",
        "fin_capacitance_f",
    ]);
    f.push(vec![
        num(s.slope),
        num(s.slope_stderr),
        num(s.intercept),
        num(s.r_squared),
        opts.constrain_intercept.to_string(),
        c0.map(num).unwrap_or_default(),
        c0.map(|c| num(s.fin_capacitance(c))).unwrap_or_default(),
    ]);
    out.table(ctx, "series_fit.csv", &f)?;
    let _ = writeln!(
        out.summary,
        "dC/C0 = {:.6} +- {:.2e} (R^2 = {:.8}) over {} resonators",
        s.slope,
        s.slope_stderr,
        s.r_squared,
        s.entries.len()
    );
    if let Some(c0) = c0 {
        let _ = writeln!(
            out.summary,
            "fin capacitance = {:.3} fF for C0 = {:.3} fF",
            s.fin_capacitance(c0) * 1e15,
            c0 * 1e15
        );
    }
    for w in &s.warnings {
        let _ = writeln!(out.summary, "warning: {w}");
    }
    if ctx.format == OutputFormat::Svg {
        let data: Vec<(f64, f64)> = s
            .entries
            .iter()
            .zip(&s.ratios)
            .map(|(e, &r)| (e.n_fins as f64 * e.fin_length_scale, r))
            .collect();
        let xmax = data.iter().map(|p| p.0).fold(0.0, f64::max);
        let fit = vec![(0.0, s.intercept), (xmax, s.intercept + s.slope * xmax)];
        let svg = plot(
            "Capacitance ratio vs fin count",
            "fins",
            "C_n / C_0",
            &[
                Series {
                    name: "data".into(),
                    points: data,
                    style: Style::Scatter,
                },
                Series {
                    name: "fit".into(),
                    points: fit,
                    style: Style::Line,
                },
            ],
        );
        out.text(ctx, "series.svg", &svg)?;
    }
    Ok(s)
}

fn read_series_csv(path: &Path) -> Result<Vec<SeriesEntry>, CliError> {
    let t = Table::read(path)?;
    let n = t.floats("n_fins")?;
    let f = t.floats("frequency_hz")?;
    let scale = if t.column("fin_length_scale").is_some() {
        t.floats("fin_length_scale")?
    } else {
        vec![1.0; n.len()]
    };
    Ok(n.iter()
        .zip(&f)
        .zip(&scale)
        .map(|((&n, &f), &s)| SeriesEntry {
            n_fins: n as u32,
            frequency: f,
            fin_length_scale: s,
        })
        .collect())
}

pub fn series(cfg: &ProjectConfig, ctx: &Context, input: Option<&Path>) -> Result<CommandOutput, CliError> {
    let entries = match input {
        Some(p) => read_series_csv(p)?,
        None => cfg
            .resonator
            .as_ref()
            .map(|r| {
                r.series
                    .iter()
                    .map(|e| SeriesEntry {
                        n_fins: e.n_fins,
                        frequency: e.frequency_hz,
                        fin_length_scale: e.fin_length_scale,
                    })
                    .collect()
            })
            .unwrap_or_default(),
    };
    if entries.is_empty() {
        return Err(CliError::Config(
            "no series data: give a CSV file or `resonator.series` entries".into(),
        ));
    }
    let mut out = CommandOutput::default();
    write_series(cfg, ctx, &mut out, &entries)?;
    if ctx.format == OutputFormat::Txt {
        let s = out.summary.clone();
        out.text(ctx, "series.txt", &s)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TraceInput {
    pub path: PathBuf,
    pub n_fins: Option<u32>,
    pub fin_length_scale: f64,
}

fn fit_row(label: &str, n_fins: Option<u32>, f: &HangerFit) -> Vec<String> {
    let p = &f.params;
    let e = &f.std_errors;
    vec![
        label.to_string(),
        n_fins.map(|n| n.to_string()).unwrap_or_default(),
        num(p.f_r),
        num(p.q_i),
        num(p.q_c),
        num(p.phi),
        num(p.a),
        num(p.theta),
        num(p.tau),
        num(e.f_r),
        num(e.q_i),
        num(e.q_c),
        num(e.phi),
        num(e.a),
        num(e.theta),
        num(e.tau),
        num(f.loaded_q()),
        num(f.cost),
        f.iterations.to_string(),
        f.warnings.join("; "),
    ]
}

pub const RESFIT_COLUMNS: [&str; 20] = [
    "trace",
    "n_fins",
    "f_r_hz",
    "q_i",
    "q_c",
    "phi_rad",
    "a",
    "theta_rad",
    "tau_s",
    "sigma_f_r_hz",
    "sigma_q_i",
    "sigma_q_c",
    "sigma_phi_rad",
    "sigma_a",
    "sigma_theta_rad",
    "sigma_tau_s",
    "q_loaded",
    "cost",
    "iterations",
    "warnings",
];

fn trace_svg(trace: &S21Trace, fit: &HangerFit, title: &str) -> String {
    let db = |z: num_complex::Complex64| 20.0 * z.norm().log10();
    let data = trace
        .frequencies
        .iter()
        .zip(&trace.s21)
        .map(|(&f, &z)| (f * 1e-9, db(z)))
        .collect();
    let model = trace
        .frequencies
        .iter()
        .map(|&f| (f * 1e-9, db(hanger_s21(&fit.params, f))))
        .collect();
    plot(
        title,
        "frequency (GHz)",
        "|S21| (dB)",
        &[
            Series {
                name: "data".into(),
                points: data,
                style: Style::Scatter,
            },
            Series {
                name: "fit".into(),
                points: model,
                style: Style::Line,
            },
        ],
    )
}

pub fn resfit(cfg: &ProjectConfig, ctx: &Context, cli_traces: &[TraceInput]) -> Result<CommandOutput, CliError> {
    let mut inputs: Vec<TraceInput> = cli_traces.to_vec();
    if let Some(r) = &cfg.resonator {
        inputs.extend(r.traces.iter().map(|t| TraceInput {
            path: ctx.resolve(&t.path),
            n_fins: t.n_fins,
            fin_length_scale: t.fin_length_scale,
        }));
    }
    if inputs.is_empty() {
        return Err(CliError::Config("resfit needs at least one trace file".into()));
    }
    let mut out = CommandOutput::default();
    let parsed: Vec<(usize, S21Trace)> = inputs
        .iter()
        .enumerate()
        .filter_map(|(k, t)| match read_trace(&t.path) {
            Ok(tr) => Some((k, tr)),
            Err(e) => {
                log::error!("{}: {e}", t.path.display());
                out.failures.push(CliError::core(t.path.display(), e));
                None
            }
        })
        .collect();
    let opts = HangerFitOptions::default();
    let fits = ctx.exec.map(parsed.len(), |k| fit_hanger(&parsed[k].1, None, &opts));

    let mut table = Table::new(&RESFIT_COLUMNS);
    let mut good: Vec<(usize, HangerFit)> = Vec::new();
    for ((k, trace), fit) in parsed.iter().zip(fits) {
        let input = &inputs[*k];
        let label = input
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match fit {
            Ok(f) => {
                table.push(fit_row(&label, input.n_fins, &f));
                let _ = writeln!(
                    out.summary,
                    "{label}: f_r = {:.6} GHz, Q_i = {:.4e}, Q_c = {:.4e}, phi = {:.4}",
                    f.params.f_r * 1e-9,
                    f.params.q_i,
                    f.params.q_c,
                    f.params.phi
                );
                if ctx.format == OutputFormat::Svg {
                    let name = format!("resfit_{k}.svg");
                    out.text(ctx, &name, &trace_svg(trace, &f, &label))?;
                }
                good.push((*k, f));
            }
            Err(e) => {
                log::error!("{label}: {e}");
                out.failures.push(CliError::core(&label, e));
            }
        }
    }
    out.table(ctx, "resfit.csv", &table)?;

    let entries: Vec<SeriesEntry> = good
        .iter()
        .filter_map(|(k, f)| {
            inputs[*k].n_fins.map(|n| SeriesEntry {
                n_fins: n,
                frequency: f.params.f_r,
                fin_length_scale: inputs[*k].fin_length_scale,
            })
        })
        .collect();
    if entries.len() >= 3 && entries.iter().any(|e| e.n_fins == 0) {
        if let Err(e) = write_series(cfg, ctx, &mut out, &entries) {
            out.failures.push(e);
        }
    }

    if let Some(loss) = &cfg.loss {
        let mut devices = Vec::new();
        let mut add = |q_i: f64, n: u32| -> Result<(), CliError> {
            let (p_fin, p_rest) = capacitive_participation(n, loss.fin_capacitance_f, loss.base_capacitance_f)
                .map_err(|e| CliError::core("loss participation", e))?;
            devices.push(LossDevice { q_i, p_fin, p_rest });
            Ok(())
        };
        for d in &loss.devices {
            add(d.q_i, d.n_fins)?;
        }
        for (k, f) in &good {
            if let Some(n) = inputs[*k].n_fins {
                add(f.params.q_i, n)?;
            }
        }
        match extract_fin_loss(&devices) {
            Ok(b) => write_loss(ctx, &mut out, &b)?,
            Err(e) => out.failures.push(CliError::core("loss extraction", e)),
        }
    }
    if ctx.format == OutputFormat::Txt {
        let s = out.summary.clone();
        out.text(ctx, "resfit.txt", &s)?;
    }
    Ok(out)
}

fn write_loss(ctx: &Context, out: &mut CommandOutput, b: &LossBudget) -> Result<(), CliError> {
    let mut t = Table::new(&["tan_fin", "tan_rest", "condition"]);
    t.push(vec![num(b.tan_fin), num(b.tan_rest), num(b.condition)]);
    out.table(ctx, "loss.csv", &t)?;
    let mut d = Table::new(&["q_i", "p_fin", "p_rest", "inverse_q_residual"]);
    for (dev, r) in b.devices.iter().zip(&b.residuals) {
        d.push(vec![num(dev.q_i), num(dev.p_fin), num(dev.p_rest), num(*r)]);
    }
    out.table(ctx, "loss_devices.csv", &d)?;
    let _ = writeln!(
        out.summary,
        "tan_fin = {:.3e}, tan_rest = {:.3e}",
        b.tan_fin, b.tan_rest
    );
    for w in &b.warnings {
        let _ = writeln!(out.summary, "warning: {w}");
    }
    Ok(())
}

struct Design {
    asymptotic: Result<TransmonParams, finmet_core::Error>,
    diagonal: TransmonParams,
}

fn design_point(spec: &JunctionSpec) -> Result<Design, CliError> {
    let (ej, ec) = junction_energies(spec).map_err(|e| CliError::core("junction", e))?;
    // The charge basis needs more states as E_J/E_C grows; the spectrum call checks convergence.
    let mut diagonal = diagonalized_params(ej, ec, 40);
    for cutoff in [80, 160] {
        if diagonal.is_ok() {
            break;
        }
        diagonal = diagonalized_params(ej, ec, cutoff);
    }
    let diagonal = diagonal.map_err(|e| CliError::core("transmon spectrum", e))?;
    Ok(Design {
        asymptotic: transmon_params(spec),
        diagonal,
    })
}

pub const DESIGN_COLUMNS: [&str; 13] = [
    "d_m",
    "phi_b_ev",
    "area_m2",
    "e_j_hz",
    "e_c_hz",
    "ej_over_ec",
    "f01_hz",
    "anharmonicity_hz",
    "dispersion_hz",
    "regime",
    "f01_diag_hz",
    "anharmonicity_diag_hz",
    "sigma_f_over_f_analytic",
];

fn design_row(spec: &JunctionSpec, d: &Design, sigma_d: f64) -> Vec<String> {
    let g = &d.diagonal;
    let (f01, anh, disp, regime) = match &d.asymptotic {
        Ok(a) => (
            num(a.f01),
            num(a.anharmonicity),
            num(a.charge_dispersion_01),
            if a.transmon_regime { "transmon" } else { "asymptotic" },
        ),
        Err(_) => (String::new(), String::new(), String::new(), "out_of_regime"),
    };
    let kappa = wkb_kappa(spec.barrier_height, spec.effective_mass_ratio).unwrap_or(f64::NAN);
    vec![
        num(spec.barrier_thickness),
        num(spec.barrier_height),
        num(spec.area),
        num(g.e_j_hz()),
        num(g.e_c_hz()),
        num(g.ratio),
        f01,
        anh,
        disp,
        regime.to_string(),
        num(g.f01),
        num(g.anharmonicity),
        num(kappa * sigma_d),
    ]
}

fn spread_row(name: &str, r: &SpreadReport) -> Vec<String> {
    let mut v = vec![
        name.to_string(),
        num(r.sigma_d),
        r.samples.to_string(),
        r.seed.to_string(),
        num(r.nominal_f01),
        num(r.mean_f01),
        num(r.std_f01),
        num(r.relative_spread),
        num(r.analytic_relative_spread),
    ];
    v.extend(r.quantiles.iter().map(|&q| num(q)));
    v
}

pub fn design(cfg: &ProjectConfig, ctx: &Context) -> Result<CommandOutput, CliError> {
    let spec = cfg.junction_spec()?;
    let reference = cfg.reference_spec()?;
    let mc = &cfg.monte_carlo;
    let seed = ctx.seed(cfg);
    let mut out = CommandOutput::default();
    let point = design_point(&spec)?;

    let mut t = Table::new(&DESIGN_COLUMNS);
    t.push(design_row(&spec, &point, mc.sigma_d_m));
    out.table(ctx, "design.csv", &t)?;

    let mut s = String::new();
    let g = &point.diagonal;
    let _ = writeln!(
        s,
        "E_J/h = {:.4} GHz, E_C/h = {:.4} MHz, E_J/E_C = {:.1}",
        g.e_j_hz() * 1e-9,
        g.e_c_hz() * 1e-6,
        g.ratio
    );
    let _ = writeln!(
        s,
        "diagonalised: f01 = {:.5} GHz, anharmonicity = {:.3} MHz",
        g.f01 * 1e-9,
        g.anharmonicity * 1e-6
    );

    let asym = match point.asymptotic {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(s, "design is outside the asymptotic transmon regime: {e}");
            out.failures.push(CliError::core("design", e));
            out.summary = s;
            return Ok(out);
        }
    };
    if !asym.transmon_regime {
        let _ = writeln!(s, "warning: E_J/E_C below the transmon regime");
    }
    let _ = writeln!(
        s,
        "asymptotic: f01 = {:.5} GHz, charge dispersion = {:.3e} Hz",
        asym.f01 * 1e-9,
        asym.charge_dispersion_01
    );

    let sens = area_sensitivity(&spec).map_err(|e| CliError::core("area sensitivity", e))?;
    let analytic = asym.e_c / (PLANCK * asym.f01);
    let _ = writeln!(s, "d ln f01 / d ln A = {sens:.6} (E_C / h f01 = {analytic:.6})");

    let cmp: BarrierComparison = compare_barriers(&spec, &reference, mc.sigma_d_m, mc.samples, seed, ctx.exec)
        .map_err(|e| CliError::core("frequency spread", e))?;
    let mut sp = Table::new(&[
        "barrier",
        "sigma_d_m",
        "samples",
        "seed",
        "nominal_f01_hz",
        "mean_f01_hz",
        "std_f01_hz",
        "sigma_f_over_f",
        "sigma_f_over_f_analytic",
        "q05_hz",
        "q25_hz",
        "q50_hz",
        "q75_hz",
        "q95_hz",
    ]);
    sp.push(spread_row("design", &cmp.si));
    sp.push(spread_row("reference", &cmp.alox));
    out.table(ctx, "spread.csv", &sp)?;

    let area_reduction = cfg.design.reference_pad_area_m2 / spec.area;
    let mut summary = Table::new(&[
        "area_sensitivity",
        "area_sensitivity_analytic",
        "barrier_ratio_analytic",
        "barrier_ratio_mc",
        "reference_pad_area_m2",
        "area_reduction",
    ]);
    summary.push(vec![
        num(sens),
        num(analytic),
        num(cmp.analytic_ratio),
        cmp.mc_ratio.map(num).unwrap_or_default(),
        num(cfg.design.reference_pad_area_m2),
        num(area_reduction),
    ]);
    out.table(ctx, "design_summary.csv", &summary)?;

    let _ = writeln!(
        s,
        "f01 spread for sigma_d = {:.3} nm: {:.4e} (Monte Carlo, {} samples, seed {seed}) vs {:.4e} (kappa sigma_d)",
        mc.sigma_d_m * 1e9,
        cmp.si.relative_spread,
        cmp.si.samples,
        cmp.si.analytic_relative_spread
    );
    let _ = writeln!(
        s,
        "reference barrier spreads {:.3}x more (analytic), {} (Monte Carlo)",
        cmp.analytic_ratio,
        cmp.mc_ratio.map_or("n/a".to_string(), |r| format!("{r:.3}x"))
    );
    let _ = writeln!(
        s,
        "junction footprint is {area_reduction:.3e}x smaller than one {:.0} um^2 reference pad (geometry dependent; full planar transmons with shunt capacitors are commonly quoted near 1e4)",
        cfg.design.reference_pad_area_m2 * 1e12
    );
    for w in cmp.si.warnings.iter().chain(&cmp.alox.warnings) {
        let _ = writeln!(s, "warning: {w}");
    }
    match ctx.format {
        OutputFormat::Txt => out.text(ctx, "design.txt", &s)?,
        OutputFormat::Svg => {
            let levels = [0.05, 0.25, 0.5, 0.75, 0.95];
            let ser = |name: &str, r: &SpreadReport| Series {
                name: name.into(),
                points: levels
                    .iter()
                    .zip(&r.quantiles)
                    .map(|(&q, &v)| (q, v / r.mean_f01))
                    .collect(),
                style: Style::Line,
            };
            let svg = plot(
                "f01 quantiles",
                "quantile",
                "f01 / mean",
                &[ser("design", &cmp.si), ser("reference", &cmp.alox)],
            );
            out.text(ctx, "design.svg", &svg)?;
        }
        OutputFormat::Csv => {}
    }
    out.summary = s;
    Ok(out)
}

fn etch_plan_from(cfg: &ProjectConfig) -> Result<EtchPlan, CliError> {
    let e = cfg
        .etch
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `etch`".into()))?;
    let t0 = match (e.initial_thickness_m, e.mask_width_m, e.undercut_per_side_m) {
        (Some(t), None, _) => t,
        (None, Some(mask), Some(u)) => undercut_correction(mask, u).map_err(|e| CliError::core("undercut", e))?,
        _ => {
            return Err(CliError::Config(
                "`etch`: give `initial_thickness_m`, or `mask_width_m` with `undercut_per_side_m`".into(),
            ))
        }
    };
    let plan = match e.method {
        EtchMethod::Digital => digital_etch_plan(t0, e.target_thickness_m, e.oxide_per_cycle_m, e.si_consumption_ratio),
        EtchMethod::Ale => ale_plan(t0, e.target_thickness_m, e.ale_removal_per_side_m),
    };
    plan.map_err(|e| CliError::core("etch plan", e))
}

pub fn etchplan(cfg: &ProjectConfig, ctx: &Context) -> Result<CommandOutput, CliError> {
    let plan = etch_plan_from(cfg)?;
    let mut out = CommandOutput::default();
    let mut t = Table::new(&["cycle", "thickness_m"]);
    for k in 0..=plan.cycles {
        t.push(vec![k.to_string(), num(plan.thickness_after(k))]);
    }
    out.table(ctx, "etch.csv", &t)?;
    let recipe = plan.recipe();
    out.text(ctx, "recipe.txt", &recipe)?;
    if ctx.format == OutputFormat::Svg {
        let pts = (0..=plan.cycles)
            .map(|k| (k as f64, plan.thickness_after(k) * 1e9))
            .collect();
        let svg = plot(
            "Fin thinning",
            "cycle",
            "thickness (nm)",
            &[Series {
                name: "plan".into(),
                points: pts,
                style: Style::Line,
            }],
        );
        out.text(ctx, "etch.svg", &svg)?;
    }
    out.summary = recipe;
    Ok(out)
}

pub fn sweep(cfg: &ProjectConfig, ctx: &Context) -> Result<CommandOutput, CliError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `sweep`".into()))?;
    if sw.values.is_empty() {
        return Err(CliError::Config("`sweep.values` is empty".into()));
    }
    let mut out = CommandOutput::default();
    let mut pts = Vec::new();
    let (ylabel, table) = match sw.target {
        SweepTarget::Junction => {
            let base = cfg
                .junction
                .as_ref()
                .ok_or_else(|| CliError::Config("missing required key `junction`".into()))?;
            let swept = format!("sweep_{}", sw.parameter);
            let mut cols = vec![swept.as_str()];
            cols.extend(DESIGN_COLUMNS);
            cols.push("error");
            let mut t = Table::new(&cols);
            for &v in &sw.values {
                let mut j = base.clone();
                j.set(&sw.parameter, v)?;
                let spec = j.to_spec("junction")?;
                let mut row = vec![num(v)];
                match design_point(&spec) {
                    Ok(d) => {
                        pts.push((v, d.diagonal.f01 * 1e-9));
                        row.extend(design_row(&spec, &d, cfg.monte_carlo.sigma_d_m));
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat_n(String::new(), DESIGN_COLUMNS.len()));
                        row.push(e.to_string());
                        out.failures.push(e);
                    }
                }
                t.push(row);
            }
            ("f01 (GHz)", t)
        }
        SweepTarget::Fin => {
            let swept = format!("sweep_{}", sw.parameter);
            let mut t = Table::new(&[
                swept.as_str(),
                "geometry_hash",
                "c_extrapolated_f_per_m",
                "c_parallel_plate_f_per_m",
                "fin_capacitance_f",
                "p_fin",
                "error",
            ]);
            for &v in &sw.values {
                let mut c = cfg.clone();
                c.fin
                    .as_mut()
                    .ok_or_else(|| CliError::Config("missing required key `fin`".into()))?
                    .set(&sw.parameter, v)?;
                match solve_fin(&c, ctx) {
                    Ok(s) => {
                        pts.push((v, s.result.c_per_length * 1e9));
                        t.push(vec![
                            num(v),
                            s.geometry_hash.clone(),
                            num(s.result.c_per_length),
                            num(s.parallel_plate),
                            num(s.result.c_per_length * s.length),
                            num(s.result.participation("fin")),
                            String::new(),
                        ]);
                    }
                    Err(e) => {
                        let mut row = vec![num(v)];
                        row.extend(std::iter::repeat_n(String::new(), 5));
                        row.push(e.to_string());
                        t.push(row);
                        out.failures.push(e);
                    }
                }
            }
            ("C/L (fF/um)", t)
        }
    };
    out.table(ctx, "sweep.csv", &table)?;
    let _ = writeln!(
        out.summary,
        "{} points swept over `{}`, {} failed",
        sw.values.len(),
        sw.parameter,
        out.failures.len()
    );
    if ctx.format == OutputFormat::Svg {
        let svg = plot(
            "Sweep",
            &sw.parameter,
            ylabel,
            &[Series {
                name: "sweep".into(),
                points: pts,
                style: Style::Line,
            }],
        );
        out.text(ctx, "sweep.svg", &svg)?;
    }
    Ok(out)
}
