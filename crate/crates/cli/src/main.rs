//! Command-line front end: simulate campaigns, fit the noise surface,
//! print budgets, and emit plot-ready reports from flat config files.
//!
//! Exit codes are a stable contract: 0 success, 1 configuration or input
//! validation, 2 I/O, 3 estimation, 4 selftest failure.

mod budget;
mod config;
mod dataset;
mod report;
mod results;
mod selftest;

use clap::{Parser, Subcommand, ValueEnum};
use config::{parse_config, OutputFormat, RunConfig};
use projnoise::estimator::{self, FitError};
use projnoise::sim::{run_sequence, tabulate_variances};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "projnoise",
    version,
    about = "Faraday-rotation spin-noise toolkit: simulate QND measurement campaigns, \
             fit the five-term noise model, and report projection-noise budgets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a measurement campaign and write the dataset file
    Simulate {
        /// Flat key-value config file; defaults fill anything omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset output path (required here or as [run] out)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the noise surface to a dataset and write the results
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Results output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Print the five-term noise budget at the configured operating point
    Budget {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the budget to a file
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Write plot-ready variance scans from a dataset and fit results
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the scan tables (default ".")
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fast verification checks
    Selftest {
        /// Seed for the statistical checks
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
    Estimation { name: &'static str, message: String },
    Selftest(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Estimation { .. } => 3,
            CliError::Selftest(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Estimation { name, message } => {
                write!(f, "estimation error [{name}]: {message}")
            }
            CliError::Selftest(failures) => write!(f, "selftest: {failures} check(s) failed"),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Estimation {
            name: e.name(),
            message: e.to_string(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)
                .map_err(|e| CliError::Config(format!("{}:{e}", path.display())))
        }
    }
}

/// Writes via a temp file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Runs `f` on the pool selected by PROJNOISE_THREADS, if set.
fn with_thread_pool<T>(f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match std::env::var("PROJNOISE_THREADS") {
        Err(_) => Ok(f()),
        Ok(value) => {
            let threads: usize = value
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "PROJNOISE_THREADS must be a positive integer, got `{value}`"
                    ))
                })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_simulate(
    config_path: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut run = load_config(config_path)?;
    if let Some(seed) = seed {
        run.sim.seed = seed;
    }
    let out = out
        .or(run.out.clone())
        .ok_or_else(|| CliError::Config("simulate needs an output path (--out or [run] out)".into()))?;
    run.sim
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dataset = with_thread_pool(|| run_sequence(&run.sim))?
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(&out, &dataset::serialize(&dataset))?;
    println!(
        "wrote {} ({} trials, seed {})",
        out.display(),
        dataset.records.len(),
        dataset.provenance.seed
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<projnoise::sim::Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    dataset::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_fit(
    config_path: Option<&Path>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
) -> Result<(), CliError> {
    let run = load_config(config_path)?;
    let dataset_path = run
        .fit_dataset
        .clone()
        .ok_or_else(|| CliError::Config("fit needs [fit] dataset = <path>".into()))?;
    let dataset = load_dataset(&dataset_path)?;

    let table = tabulate_variances(&dataset, &run.binning);
    let fit = estimator::fit_noise_surface_with(
        &table.points,
        dataset.config.truth.f(),
        &run.fit_options,
    )?;

    let dispersive = if run.use_dispersive && !dataset.records.is_empty() {
        let pairs: Vec<(f64, f64)> = dataset
            .records
            .iter()
            .map(|r| (r.dispersive_phi, r.n_atoms_imaging))
            .collect();
        let (g, sigma) = estimator::calibrate_g_dispersive(&pairs)?;
        let consistency =
            estimator::consistency_check((fit.g(), fit.g_uncertainty()), (g, sigma));
        Some(results::DispersiveBlock {
            g,
            sigma,
            consistency: (&consistency).into(),
        })
    } else {
        None
    };

    let report = results::fit_report(&fit, table.points.len(), table.dropped_bins, dispersive);
    let format = format.map(OutputFormat::from).unwrap_or(run.format);
    let rendered = match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Io(e.to_string()))?;
            text.push('\n');
            text
        }
        OutputFormat::Csv => results::to_csv(&report),
    };
    match out.or(run.out) {
        Some(path) => {
            write_atomic(&path, &rendered)?;
            println!(
                "wrote {} (G = {:.4e} +/- {:.1e}, chi2/dof = {:.3})",
                path.display(),
                report.g,
                report.g_sigma,
                report.chi_square_per_dof
            );
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_budget(
    config_path: Option<&Path>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
) -> Result<(), CliError> {
    let run = load_config(config_path)?;
    let report = budget::compute(&run.params, &run.point);
    print!("{}", budget::render_text(&report));
    if let Some(path) = out.or(run.out) {
        let format = format.map(OutputFormat::from).unwrap_or(run.format);
        let rendered = match format {
            OutputFormat::Json => {
                let mut text = serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                text.push('\n');
                text
            }
            OutputFormat::Csv => budget::render_csv(&report),
        };
        write_atomic(&path, &rendered)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(config_path: Option<&Path>, out: Option<PathBuf>) -> Result<(), CliError> {
    let run = load_config(config_path)?;
    let dataset_path = run
        .report_dataset
        .clone()
        .ok_or_else(|| CliError::Config("report needs [report] dataset = <path>".into()))?;
    let fit_path = run
        .report_fit
        .clone()
        .ok_or_else(|| CliError::Config("report needs [report] fit = <path>".into()))?;

    let dataset = load_dataset(&dataset_path)?;
    let fit_text = std::fs::read_to_string(&fit_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", fit_path.display())))?;
    let fit: results::FitReport = serde_json::from_str(&fit_text)
        .map_err(|e| CliError::Config(format!("{}: {e}", fit_path.display())))?;
    if fit.schema_version != results::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported results schema version {}",
            fit.schema_version
        )));
    }

    let table = tabulate_variances(&dataset, &run.binning);
    if table.points.is_empty() {
        return Err(CliError::Config("dataset yields no variance points".into()));
    }
    let dir = out.or(run.out).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let atom_path = dir.join("atom_scan.csv");
    let photon_path = dir.join("photon_scan.csv");
    write_atomic(&atom_path, &report::atom_scan(&table.points, &fit.coefficients))?;
    write_atomic(
        &photon_path,
        &report::photon_scan(&table.points, &fit.coefficients),
    )?;
    println!("wrote {}", atom_path.display());
    println!("wrote {}", photon_path.display());
    Ok(())
}

fn run_command(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, seed, out } => {
            cmd_simulate(config.as_deref(), seed, out)
        }
        Command::Fit {
            config,
            out,
            format,
        } => cmd_fit(config.as_deref(), out, format),
        Command::Budget {
            config,
            out,
            format,
        } => cmd_budget(config.as_deref(), out, format),
        Command::Report { config, out } => cmd_report(config.as_deref(), out),
        Command::Selftest { seed } => {
            let failures = with_thread_pool(|| selftest::run(seed.unwrap_or(7)))?;
            if failures > 0 {
                Err(CliError::Selftest(failures))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
