//! `pvhier` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pvhier::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "pvhier", version, about = "Cell-resolution PV system simulator")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Weather CSV (`timestamp,dni,dhi,temp_air,wind_speed`).
    #[arg(long)]
    weather: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Extra module datasheet TOML, merged over the bundled records.
    #[arg(long)]
    module_db: Option<PathBuf>,
    /// Per-cell effective irradiance CSV (`timestamp,cell_index,e_eff`).
    #[arg(long)]
    irradiance: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump every IV curve of one timestep plus a JSON summary.
    IvCurve {
        #[command(flatten)]
        run: RunArgs,
        /// Timestamp of a weather record (RFC 3339 or `YYYY-MM-DD HH:MM:SS`, UTC).
        #[arg(long)]
        timestamp: String,
    },
    /// Simulate the whole weather series.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also write one row per cell and timestep.
        #[arg(long)]
        cells: bool,
    },
    /// Electrical runs at several irradiance resolutions.
    CompareResolutions {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of cell,substring,module,string.
        #[arg(long, value_delimiter = ',', default_value = "cell,substring,module,string")]
        levels: Vec<String>,
    },
    /// Cell-resolution runs of several inverter architectures.
    CompareArchitectures {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of central-inverter,string-inverter,optimizers,microinverters.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "central-inverter,string-inverter,optimizers,microinverters"
        )]
        architectures: Vec<String>,
    },
    /// Direct clearness index of every daylight record.
    Clearness {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        weather: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic cloudless-day weather CSV for the scenario site.
    ClearSky {
        #[arg(long)]
        scenario: PathBuf,
        /// Day to generate (`YYYY-MM-DD`).
        #[arg(long)]
        date: String,
        /// Step in seconds.
        #[arg(long, default_value_t = 60)]
        step: i64,
        #[arg(long, default_value_t = 12.0)]
        t_min: f64,
        #[arg(long, default_value_t = 24.0)]
        t_max: f64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// R², mean bias error and RMSE of two series (last CSV column).
    Metrics {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        measured: PathBuf,
    },
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Data, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl From<pvhier::Error> for CliError {
    fn from(e: pvhier::Error) -> Self {
        Self { class: e.class(), message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::IvCurve { run, timestamp } => commands::iv_curve(&run, &timestamp),
        Command::Simulate { run, cells } => commands::simulate(&run, cells),
        Command::CompareResolutions { run, levels } => commands::compare_resolutions(&run, &levels),
        Command::CompareArchitectures { run, architectures } => commands::compare_architectures(&run, &architectures),
        Command::Clearness { scenario, weather, out } => commands::clearness(&scenario, &weather, &out),
        Command::ClearSky { scenario, date, step, t_min, t_max, out } => {
            commands::clear_sky(&scenario, &date, step, t_min, t_max, &out)
        }
        Command::Metrics { predicted, measured } => commands::metrics(&predicted, &measured),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit_code())
        }
    }
}
