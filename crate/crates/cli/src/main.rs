//! `purcell-lab` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error
//! (including unknown scenario names), 3 simulation failure, 4 an `--assert`
//! threshold was violated.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use output::Assertion;
use purcell_lab::units::{parse_with_unit, Dimension};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Usage(String),
    Simulation(String),
    Assertion(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Simulation(m) => write!(f, "simulation failed: {m}"),
            CliError::Assertion(m) => write!(f, "assertion violated: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn quantity(dim: Dimension) -> impl Fn(&str) -> Result<f64, String> + Clone {
    move |s: &str| parse_with_unit(s, dim)
}

fn freq(s: &str) -> Result<f64, String> {
    quantity(Dimension::Frequency)(s)
}

fn time(s: &str) -> Result<f64, String> {
    quantity(Dimension::Time)(s)
}

/// Tunable Purcell filter design, reset simulation and parameter search.
///
/// Quantities accept unit suffixes ("20 MHz", "70 ns"); bare numbers are
/// base SI units.
#[derive(Debug, Parser)]
#[command(name = "purcell-lab", version)]
struct Cli {
    /// Device configuration file (JSON, see device.schema.json).
    #[arg(long, global = true, env = "PURCELL_LAB_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; one manifest.json is written per run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter passband frequency versus SQUID flux (requires --config).
    FilterTune(FilterTuneArgs),
    /// Effective readout linewidth versus filter-resonator detuning.
    KappaScan(KappaScanArgs),
    /// Photon-noise dephasing versus filter-resonator detuning.
    DephasingScan(DephasingScanArgs),
    /// Readout error budget from state fidelities or IQ clouds.
    ReadoutBudget(ReadoutBudgetArgs),
    /// Run a named or file-defined reset scenario.
    Reset(ResetArgs),
    /// Several couplers emptying through one shared lossy filter.
    MultiCoupler(MultiCouplerArgs),
    /// Parameter search on the synthetic benchmark surfaces.
    Optimize(OptimizeArgs),
    /// Evaluate a single closed-form relation and print it as JSON.
    #[command(subcommand)]
    Formula(FormulaCmd),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FilterTune(_) => "filter-tune",
            Command::KappaScan(_) => "kappa-scan",
            Command::DephasingScan(_) => "dephasing-scan",
            Command::ReadoutBudget(_) => "readout-budget",
            Command::Reset(_) => "reset",
            Command::MultiCoupler(_) => "multi-coupler",
            Command::Optimize(_) => "optimize",
            Command::Formula(_) => "formula",
        }
    }

    fn overrides(&self) -> serde_json::Value {
        let v = match self {
            Command::FilterTune(a) => serde_json::to_value(a),
            Command::KappaScan(a) => serde_json::to_value(a),
            Command::DephasingScan(a) => serde_json::to_value(a),
            Command::ReadoutBudget(a) => serde_json::to_value(a),
            Command::Reset(a) => serde_json::to_value(a),
            Command::MultiCoupler(a) => serde_json::to_value(a),
            Command::Optimize(a) => serde_json::to_value(a),
            Command::Formula(a) => serde_json::to_value(a),
        };
        v.unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FilterTuneArgs {
    /// Filter id (defaults to the first filter in the config).
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Flux range in units of the flux quantum.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub flux_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub flux_max: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LinkArgs {
    /// Resonator-filter coupling [config resonator g_rf, else 20 MHz].
    #[arg(long, value_parser = freq)]
    pub g_rf: Option<f64>,
    /// Filter linewidth [config filter kappa, else 150 MHz].
    #[arg(long, value_parser = freq)]
    pub kappa_f: Option<f64>,
    /// Resonator id in the config (defaults to the first).
    #[arg(long)]
    pub resonator: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct KappaScanArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    /// Half-width of the detuning sweep.
    #[arg(long, value_parser = freq, default_value = "1 GHz")]
    pub span: f64,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Sweep filter flux over [0, 1] quanta instead of detuning (needs --config).
    #[arg(long)]
    pub flux: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DephasingScanArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    /// Dispersive shift 2χ [from the config qubit and resonator, else 1.4 MHz].
    #[arg(long, value_parser = freq)]
    pub two_chi: Option<f64>,
    /// Residual thermal photon number in the resonator.
    #[arg(long, default_value_t = 0.01)]
    pub n_noise: f64,
    #[arg(long, value_parser = freq, default_value = "800 MHz")]
    pub span: f64,
    #[arg(long, default_value_t = 801)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ModeArg {
    ZeroOne,
    ZeroTwo,
}

#[derive(Debug, Args, Serialize)]
pub struct ReadoutBudgetArgs {
    #[arg(long)]
    pub state0_fidelity: Option<f64>,
    #[arg(long)]
    pub state1_fidelity: Option<f64>,
    /// Overlap error to attribute when fidelities are given directly.
    #[arg(long, default_value_t = 0.0)]
    pub separation_error: f64,
    /// |0⟩ cloud as "I,Q,sigma".
    #[arg(long, allow_hyphen_values = true)]
    pub cloud0: Option<String>,
    /// |1⟩ cloud as "I,Q,sigma".
    #[arg(long, allow_hyphen_values = true)]
    pub cloud1: Option<String>,
    /// Preparation error used with clouds.
    #[arg(long, default_value_t = 0.0)]
    pub prep_error: f64,
    /// Measurement duration.
    #[arg(long, value_parser = time, default_value = "500 ns")]
    pub tau_m: f64,
    /// Qubit T1 [config qubit t1].
    #[arg(long, value_parser = time)]
    pub t1: Option<f64>,
    /// Qubit id in the config (defaults to the first).
    #[arg(long)]
    pub qubit: Option<String>,
    #[arg(long, value_enum, default_value = "zero-one")]
    pub mode: ModeArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ResetArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "scenario_file")]
    pub scenario: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// List built-in scenarios and exit.
    #[arg(long)]
    pub list: bool,
    /// Take the device from --config using these element ids.
    #[arg(long, requires_all = ["coupler", "filter"])]
    pub qubit: Option<String>,
    #[arg(long)]
    pub coupler: Option<String>,
    #[arg(long)]
    pub filter: Option<String>,
    /// Threshold on a summary field, e.g. "residual<0.012"; repeatable.
    #[arg(long = "assert")]
    #[serde(serialize_with = "display_list")]
    pub asserts: Vec<Assertion>,
}

fn display_list<S: serde::Serializer>(v: &[Assertion], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|a| a.to_string()))
}

#[derive(Debug, Args, Serialize)]
pub struct MultiCouplerArgs {
    /// Coupler detunings from the filter, comma separated.
    #[arg(long, value_parser = freq, value_delimiter = ',', allow_hyphen_values = true,
          default_value = "0 MHz,-25.89 MHz,26.74 MHz")]
    pub detunings: Vec<f64>,
    #[arg(long, value_parser = freq, default_value = "20 MHz")]
    pub g_cf: f64,
    #[arg(long, value_parser = freq, default_value = "140 MHz")]
    pub kappa_f: f64,
    /// "all" (every coupler excited), "dark" (antisymmetric first pair) or a
    /// bit string such as "101".
    #[arg(long, default_value = "all")]
    pub init: String,
    #[arg(long, value_parser = time, default_value = "500 ns")]
    pub duration: f64,
    #[arg(long, value_parser = time, default_value = "1 ns")]
    pub sample_dt: f64,
    /// Also write the slowest Liouvillian modes.
    #[arg(long)]
    pub spectrum: bool,
    #[arg(long = "assert")]
    #[serde(serialize_with = "display_list")]
    pub asserts: Vec<Assertion>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum BenchArg {
    Quadratic,
    Bimodal,
    Correlated,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum MethodArg {
    Tpe,
    Random,
    Grid,
    Alternating,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long, value_enum)]
    pub benchmark: BenchArg,
    #[arg(long, value_enum, default_value = "tpe")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    /// Points per axis for grid and alternating scans.
    #[arg(long, default_value_t = 21)]
    pub resolution: usize,
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
    /// Continue a saved TPE state instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum FormulaCmd {
    /// κ_eff = (4g²/κ_f) / (1 + (2Δ/κ_f)²).
    KappaEff {
        #[arg(long, value_parser = freq)]
        g_rf: f64,
        #[arg(long, value_parser = freq, allow_hyphen_values = true)]
        detuning: f64,
        #[arg(long, value_parser = freq)]
        kappa_f: f64,
    },
    /// Dispersive shifts for a qubit-resonator coupling.
    Dispersive {
        #[arg(long, value_parser = freq)]
        g_qr: f64,
        #[arg(long, value_parser = freq)]
        qubit_freq: f64,
        #[arg(long, value_parser = freq, allow_hyphen_values = true)]
        anharmonicity: f64,
        #[arg(long, value_parser = freq)]
        resonator_freq: f64,
    },
    /// Qubit-resonator coupling giving a target |2χ|.
    CouplingForShift {
        #[arg(long, value_parser = freq)]
        two_chi: f64,
        #[arg(long, value_parser = freq)]
        qubit_freq: f64,
        #[arg(long, value_parser = freq, allow_hyphen_values = true)]
        anharmonicity: f64,
        #[arg(long, value_parser = freq)]
        resonator_freq: f64,
    },
    /// Purcell decay rate through resonator and filter.
    Purcell {
        #[arg(long, value_parser = freq)]
        g_qr: f64,
        #[arg(long, value_parser = freq)]
        g_rf: f64,
        #[arg(long, value_parser = freq)]
        kappa_f: f64,
        #[arg(long, value_parser = freq)]
        filter_freq: f64,
        #[arg(long, value_parser = freq)]
        qubit_freq: f64,
        #[arg(long, value_parser = freq)]
        resonator_freq: f64,
    },
    /// Relaxation error 1 − exp(−τ/T1).
    RelaxationError {
        #[arg(long, value_parser = time)]
        tau_m: f64,
        #[arg(long, value_parser = time)]
        t1: f64,
    },
    /// Coupler frequency at a Z amplitude (coupler from --config).
    CouplerFrequency {
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        /// Coupler id (defaults to the first).
        #[arg(long)]
        coupler: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("purcell-lab {}: {e}", cli.command.name());
            ExitCode::from(e.code())
        }
    }
}
