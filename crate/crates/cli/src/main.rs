use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use twr_cli::output::{checks_to_csv, write_atomic};
use twr_cli::{preset, run_experiment, write_experiment, AllocationSpec, ExperimentSpec, PRESETS, WORKERS_ENV};
use twr_core::oracle::{run_suite, CheckStatus, OracleGrid};
use twr_core::WishartConvention;

#[derive(Parser)]
#[command(name = "twr", version, about = "Massive-MIMO two-way relaying simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Complex,
    Printed,
}

impl From<Convention> for WishartConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Complex => WishartConvention::Complex,
            Convention::Printed => WishartConvention::Printed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridPreset {
    Standard,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML experiment spec and write CSV plus a JSON sidecar.
    Run {
        /// Preset name or path to a spec file.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output CSV path; defaults to `<name>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the closed-form moments against sampling.
    Oracle {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, value_enum, default_value = "standard")]
        preset: GridPreset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "complex")]
        convention: Convention,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one power allocation described by a TOML file and print it as JSON.
    Allocate { spec: PathBuf },
    /// List the presets, or print one as TOML.
    Presets { name: Option<String> },
}

fn load_spec(target: &str) -> Result<ExperimentSpec> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {target}"))?;
        return ExperimentSpec::from_toml(&text);
    }
    match preset(target) {
        Some(spec) => spec,
        None => bail!("{target} is neither a file nor a preset ({})", preset_names()),
    }
}

fn preset_names() -> String {
    PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(target: &str, seed: Option<u64>, trials: Option<usize>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut spec = load_spec(target)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    let rows = run_experiment(&spec)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", spec.name)));
    write_experiment(&out, &spec, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn oracle(samples: usize, grid: GridPreset, seed: u64, conv: Convention, out: Option<PathBuf>) -> Result<ExitCode> {
    let grid = match grid {
        GridPreset::Standard => OracleGrid::standard(),
        GridPreset::Full => OracleGrid::full(),
    };
    let checks = run_suite(&grid, samples, seed, conv.into())?;
    println!(
        "{:<56} {:>14} {:>14} {:>11} {:>8}  status",
        "check", "analytic", "estimate", "stderr", "z"
    );
    for c in &checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Inconclusive => "inconclusive",
        };
        println!(
            "{:<56} {:>14.6e} {:>14.6e} {:>11.3e} {:>8.2}  {status}",
            c.name, c.analytic, c.estimate, c.stderr, c.z
        );
    }
    if let Some(out) = out {
        write_atomic(&out, &checks_to_csv(&checks)?)?;
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name.as_str())
        .collect();
    let inconclusive = checks.iter().filter(|c| c.status == CheckStatus::Inconclusive).count();
    if inconclusive > 0 {
        eprintln!("{inconclusive} checks inconclusive at {samples} samples");
    }
    if failed.is_empty() {
        eprintln!("{} checks, none failed", checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "{} of {} checks failed: {}",
            failed.len(),
            checks.len(),
            failed.join(", ")
        );
        Ok(ExitCode::FAILURE)
    }
}

fn allocate(path: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let result = AllocationSpec::from_toml(&text)?.run()?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(ExitCode::SUCCESS)
}

fn presets(name: Option<String>) -> Result<ExitCode> {
    match name {
        None => PRESETS.iter().for_each(|(n, _)| println!("{n}")),
        Some(n) => match PRESETS.iter().find(|(p, _)| *p == n) {
            Some((_, src)) => print!("{src}"),
            None => bail!("no preset {n} ({})", preset_names()),
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match cli.command {
        Command::Run {
            target,
            seed,
            trials,
            out,
        } => run(&target, seed, trials, out),
        Command::Oracle {
            samples,
            preset,
            seed,
            convention,
            out,
        } => oracle(samples, preset, seed, convention, out),
        Command::Allocate { spec } => allocate(&spec),
        Command::Presets { name } => presets(name),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
