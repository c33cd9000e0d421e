use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use finmet_cli::commands::{self, CommandOutput, Context, OutputFormat, TraceInput};
use finmet_cli::config::{load_config, LoadedConfig, ProjectConfig};
use finmet_cli::error::CliError;
use finmet_cli::record::RunRecord;
use finmet_core::exec::Execution;

#[derive(Debug, Parser)]
#[command(
    name = "finmet",
    version,
    about = "Fin capacitor, resonator and merged-element transmon toolkit"
)]
struct Cli {
    /// Project configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Falls back to `output_dir` in the config, then FINMET_OUT_DIR, then ./finmet-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `monte_carlo.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reject unknown configuration keys instead of warning.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacitance per length of the configured fin.
    Capacitance,
    /// Fit hanger-mode resonances in S21 traces.
    Resfit {
        /// Touchstone (.s2p) or `freq_hz,re,im` CSV files.
        files: Vec<PathBuf>,
        /// Fin count for each file, in order.
        #[arg(long, value_delimiter = ',')]
        fins: Vec<u32>,
    },
    /// Capacitance ratio series from resonance frequencies.
    Series {
        /// CSV with `n_fins,frequency_hz[,fin_length_scale]`. Uses `resonator.series` when absent.
        input: Option<PathBuf>,
    },
    /// Junction energies, transmon parameters and fabrication spread.
    Design,
    /// Fin thinning schedule.
    Etchplan,
    /// Repeat `design` or `capacitance` over one parameter.
    Sweep,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Capacitance => "capacitance",
            Command::Resfit { .. } => "resfit",
            Command::Series { .. } => "series",
            Command::Design => "design",
            Command::Etchplan => "etchplan",
            Command::Sweep => "sweep",
        }
    }
}

fn out_dir(cli: &Cli, cfg: &ProjectConfig, base: &std::path::Path) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Some(o) = &cfg.output_dir {
        return if o.is_absolute() { o.clone() } else { base.join(o) };
    }
    std::env::var_os("FINMET_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("finmet-out"))
}

fn run(cli: &Cli) -> Result<CommandOutput, CliError> {
    let loaded = match &cli.config {
        Some(p) => load_config(p, cli.strict)?,
        None => LoadedConfig {
            config: finmet_cli::config::parse_config("", cli.strict)?.0,
            unknown_keys: Vec::new(),
            source: Vec::new(),
            base_dir: PathBuf::from("."),
        },
    };
    for k in &loaded.unknown_keys {
        log::warn!("unknown configuration key `{k}` ignored");
    }
    let cfg = &loaded.config;
    let ctx = Context {
        out_dir: out_dir(cli, cfg, &loaded.base_dir),
        format: cli.format,
        seed: cli.seed,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
        base_dir: loaded.base_dir.clone(),
    };
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out_dir.display())))?;

    let out = match &cli.command {
        Command::Capacitance => commands::capacitance(cfg, &ctx)?,
        Command::Resfit { files, fins } => {
            if !fins.is_empty() && fins.len() != files.len() {
                return Err(CliError::Config(format!(
                    "--fins has {} entries for {} files",
                    fins.len(),
                    files.len()
                )));
            }
            let traces: Vec<TraceInput> = files
                .iter()
                .enumerate()
                .map(|(k, p)| TraceInput {
                    path: p.clone(),
                    n_fins: fins.get(k).copied(),
                    fin_length_scale: 1.0,
                })
                .collect();
            commands::resfit(cfg, &ctx, &traces)?
        }
        Command::Series { input } => commands::series(cfg, &ctx, input.as_deref())?,
        Command::Design => commands::design(cfg, &ctx)?,
        Command::Etchplan => commands::etchplan(cfg, &ctx)?,
        Command::Sweep => commands::sweep(cfg, &ctx)?,
    };

    let seed = matches!(cli.command, Command::Design).then(|| cli.seed.unwrap_or(cfg.monte_carlo.seed));
    let mut record = RunRecord::new(cli.command.name(), &loaded.source, seed);
    record.add_outputs(&out.files)?;
    record.write(&ctx.out_dir)?;
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.failures {
                eprintln!("error: {f}");
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
