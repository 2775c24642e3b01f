use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oamsim::report::to_json;
use oamsim::{
    emit_report, run_with_workers, Charge, Config, Error, Format, Scenario, ScenarioKind,
};

#[derive(Parser, Debug)]
#[command(
    name = "oamsim",
    version,
    about = "Heralded OAM single-photon source simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; defaults are the calibrated profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; defaults to `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files; the JSON report goes to stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Pulses per acquisition, replacing rate times duration.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Keep per-projection reports and write time tags with origins.
    #[arg(long, global = true)]
    debug: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coincidence acquisition.
    Run {
        #[arg(long, value_enum, default_value_t = ScenarioArg::Sww)]
        scenario: ScenarioArg,
        /// Topological charge of the emitted mode, required for `oam`.
        #[arg(long, allow_hyphen_values = true)]
        charge: Option<i32>,
    },
    /// Drop-port transmission spectrum.
    Sweep {
        /// Heater power in mW, replacing `sweep.power_mw`.
        #[arg(long)]
        power_mw: Option<f64>,
    },
    /// Purity from the 15-mask projection loop.
    Tomography {
        #[arg(long, allow_hyphen_values = true)]
        charge: i32,
        /// Shots per mask, 0 for the exact distribution.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Fit pair rate, dark probability and heater resistance.
    Calibrate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    Sww,
    Oam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let common = cli.common;
    let base = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let mut overrides = common.set.clone();
    if let Some(p) = common.pulses {
        overrides.push(format!("simulation.pulses={p}"));
    }
    let (kind, charge) = match cli.command {
        Command::Run { scenario, charge } => {
            let kind = match scenario {
                ScenarioArg::Sww => ScenarioKind::SwwOnly,
                ScenarioArg::Oam => ScenarioKind::OamRun,
            };
            (kind, charge)
        }
        Command::Sweep { power_mw } => {
            if let Some(p) = power_mw {
                overrides.push(format!("sweep.power_mw={p:?}"));
            }
            (ScenarioKind::SpectrumSweep, None)
        }
        Command::Tomography { charge, shots } => {
            if let Some(s) = shots {
                overrides.push(format!("tomography.shots={s}"));
            }
            (ScenarioKind::Tomography, Some(charge))
        }
        Command::Calibrate => (ScenarioKind::Calibrate, None),
    };
    let config = base.with_overrides(&overrides)?;
    let seed = common.seed.unwrap_or(config.simulation.seed);
    let mut scenario = Scenario::new(kind, charge.map(Charge), seed);
    scenario.debug = common.debug;
    let report = run_with_workers(&scenario, &config, common.workers)?;
    match &common.out {
        Some(dir) => {
            for path in emit_report(&report, common.format.into(), dir)? {
                log::info!("wrote {}", path.display());
            }
        }
        None => print!("{}", to_json(&report)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
