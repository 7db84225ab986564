//! Command-line interface: validate, enumerate, reach, export-prism and
//! simulate, with reproducible outputs and an accompanying run manifest.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::automaton::{self, LoadError};
use crate::semantics::{self, SemanticsError, DEFAULT_STATE_CAP};
use crate::sim::{self, SimConfig, SimError};
use crate::solemodel::{load_species_config, ConfigError};

#[derive(Parser, Debug)]
#[command(
    name = "epdta",
    version,
    about = "Extended probabilistic discrete timed automata: simulate, enumerate, verify, export"
)]
pub struct Cli {
    /// Print progress details to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load a model file and report every validation problem.
    Validate {
        /// Model file (.epdta).
        #[arg(long)]
        model: PathBuf,
    },
    /// Enumerate the reachable MDP graph and dump it as text.
    Enumerate {
        #[arg(long)]
        model: PathBuf,
        /// Time horizon; defaults to the model's max_time.
        #[arg(long)]
        horizon: Option<u64>,
        /// Reachable-state cap (also via EPDTA_STATE_CAP).
        #[arg(long)]
        state_cap: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact probability of reaching a location within a horizon, under the
    /// uniform resolution of nondeterminism.
    Reach {
        #[arg(long)]
        model: PathBuf,
        /// Target location name.
        #[arg(long)]
        target: String,
        /// Time horizon; defaults to the model's max_time.
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        state_cap: Option<usize>,
    },
    /// Translate a model to PRISM MDP syntax.
    ExportPrism {
        #[arg(long)]
        model: PathBuf,
        /// Output file (.nm); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the agent-based population simulation and write monthly
    /// statistics as CSV.
    Simulate {
        /// Species configuration file.
        #[arg(long)]
        species: PathBuf,
        /// Annual fishing index override (0 disables fishing).
        #[arg(long)]
        f: Option<f64>,
        /// Duration in months.
        #[arg(long, default_value_t = 72)]
        months: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the config's halve_initial_population flag.
        #[arg(long)]
        halve_initial: Option<bool>,
        /// CSV output path; a `<out>.manifest.json` is written alongside.
        #[arg(long)]
        out: PathBuf,
        /// Also write one JSON object per month to this path.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
}

/// Exit codes: 0 success, 1 invalid input (arguments, model, config),
/// 2 runtime failure (deadlock, state cap, I/O on outputs).
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SemanticsError> for CliError {
    fn from(e: SemanticsError) -> Self {
        match e {
            SemanticsError::UnknownLocation(_) | SemanticsError::HorizonTooLarge { .. } => {
                CliError::Invalid(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Build(_) => CliError::Invalid(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn state_cap(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("EPDTA_STATE_CAP")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(DEFAULT_STATE_CAP)
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

/// Write-then-rename so a failed run never leaves a partial file behind.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let fail = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    let mut f = std::fs::File::create(&tmp).map_err(fail)?;
    f.write_all(content.as_bytes()).map_err(fail)?;
    f.sync_all().map_err(fail)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(fail)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'a str,
    version: &'a str,
    seed: u64,
    months: u64,
    fishing_index: Option<f64>,
    species_config: String,
    species_config_sha256: String,
    output: String,
}

fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Invalid(format!("reading {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { model } => {
            let a = automaton::load_file(&model)?;
            if cli.verbose {
                eprintln!(
                    "ok: {} locations, {} edges, max_time {}",
                    a.locations.len(),
                    a.edges.len(),
                    a.max_time
                );
            }
            Ok(())
        }
        Command::Enumerate {
            model,
            horizon,
            state_cap: cap,
            out,
        } => {
            let a = automaton::load_file(&model)?;
            let horizon = horizon.unwrap_or(a.max_time);
            let graph = semantics::enumerate(&a, horizon, state_cap(cap))?;
            if cli.verbose {
                eprintln!("{} reachable states", graph.len());
            }
            let text = graph.dump(&a);
            match out {
                Some(path) => write_output(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Reach {
            model,
            target,
            horizon,
            state_cap: cap,
        } => {
            let a = automaton::load_file(&model)?;
            let horizon = horizon.unwrap_or(a.max_time);
            let p = semantics::reach_probability(&a, &target, horizon, state_cap(cap))?;
            println!("{}", semantics::format_significant(p, 12));
            Ok(())
        }
        Command::ExportPrism { model, out } => {
            let a = automaton::load_file(&model)?;
            let text = crate::prism::export(&a);
            match out {
                Some(path) => write_output(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate {
            species,
            f,
            months,
            seed,
            halve_initial,
            out,
            jsonl,
        } => {
            let mut species_cfg = load_species_config(&species)?;
            if let Some(h) = halve_initial {
                species_cfg.halve_initial_population = h;
            }
            let config_hash = file_sha256(&species)?;
            let cfg = SimConfig {
                species: species_cfg,
                fishing_index: f,
                months,
                seed,
            };
            if cli.verbose {
                eprintln!(
                    "simulating {months} months, seed {seed}, F {:?}",
                    f.map(|v| v.to_string())
                );
            }
            let stats = sim::run(&cfg)?;
            write_atomic(&out, &sim::stats_to_csv(&stats))?;
            if let Some(jsonl_path) = jsonl {
                write_atomic(&jsonl_path, &sim::stats_to_jsonl(&stats))?;
            }
            let manifest = RunManifest {
                tool: "epdta",
                version: env!("CARGO_PKG_VERSION"),
                seed,
                months,
                fishing_index: f,
                species_config: species.display().to_string(),
                species_config_sha256: config_hash,
                output: out.display().to_string(),
            };
            let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
            let body = serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_atomic(&manifest_path, &body)?;
            if cli.verbose {
                let last = stats.last().expect("at least the initial census");
                eprintln!(
                    "final month {}: {} alive, {:.3} kg biomass",
                    last.month,
                    last.living(),
                    last.biomass_kg
                );
            }
            Ok(())
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
