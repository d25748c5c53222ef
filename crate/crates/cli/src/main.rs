//! `bsquant`: command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical or domain
//! failure. Every run writes `manifest.json` into the output directory.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bsquant::io::atomic_write;
use bsquant::pendulum::Orientation;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::Value;

use commands::Outcome;
use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "bsquant", version, about = "Bohr-Sommerfeld quantization toolkit")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files and the run manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dirac commutator residuals for observable pairs at two grid resolutions.
    DiracCheck {
        /// Pair `f=<obs>,g=<obs>`; repeatable. Defaults to the standard family.
        #[arg(long)]
        pairs: Vec<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Single-valuedness of the angle shift flow at t = h, with the t = h/2 control.
    ShiftCheck {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Applies a shift word to a basis state and prints the result as JSON.
    Shift {
        /// Word such as `a:1,0 b:0,1`; letters apply left to right.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        word: String,
        /// Start label `chart:n1,...,nk`.
        #[arg(long, allow_hyphen_values = true)]
        label: String,
        /// Atlas JSON; defaults to a single cubical chart.
        #[arg(long)]
        atlas: Option<PathBuf>,
        #[arg(long)]
        planck_h: Option<f64>,
        #[arg(long)]
        box_half_width: Option<f64>,
    },
    /// Atlas operations.
    Atlas {
        #[command(subcommand)]
        command: AtlasCommand,
    },
    /// Spherical pendulum.
    Pendulum {
        #[command(subcommand)]
        command: PendulumCommand,
    },
}

#[derive(Subcommand, Debug)]
enum AtlasCommand {
    /// Checks an atlas file and reports whether it admits global labels.
    Validate { path: PathBuf },
}

#[derive(Subcommand, Debug)]
enum PendulumCommand {
    /// Bohr-Sommerfeld joint spectrum as CSV and SVG.
    Spectrum {
        #[arg(long)]
        h_planck: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        h_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        h_max: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        j_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        j_max: Option<f64>,
        #[arg(long)]
        critical_margin: Option<f64>,
    },
    /// Monodromy matrix of a loop in the energy-momentum plane, as JSON.
    Monodromy {
        #[arg(long, allow_hyphen_values = true)]
        radius: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum)]
        orientation: Option<OrientationArg>,
        #[arg(long, allow_hyphen_values = true)]
        start_angle: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        center_h: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        center_j: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    planck_h: Option<f64>,
    #[arg(long)]
    action_points: Option<usize>,
    #[arg(long)]
    angle_points: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrientationArg {
    Ccw,
    Cw,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::DiracCheck { .. } => "dirac-check",
            Command::ShiftCheck { .. } => "shift-check",
            Command::Shift { .. } => "shift",
            Command::Atlas { .. } => "atlas validate",
            Command::Pendulum { command: PendulumCommand::Spectrum { .. } } => "pendulum spectrum",
            Command::Pendulum { command: PendulumCommand::Monodromy { .. } } => "pendulum monodromy",
        }
    }

    /// Writes flag values over the configuration.
    fn apply_overrides(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        match self {
            Command::DiracCheck { grid, .. } | Command::ShiftCheck { grid } => {
                set(&mut cfg.grid.planck_h, &grid.planck_h);
                set(&mut cfg.grid.action_points, &grid.action_points);
                set(&mut cfg.grid.angle_points, &grid.angle_points);
            }
            Command::Shift { atlas, planck_h, box_half_width, .. } => {
                set(&mut cfg.shift.atlas, atlas);
                set(&mut cfg.shift.planck_h, planck_h);
                set(&mut cfg.shift.box_half_width, box_half_width);
            }
            Command::Atlas { .. } => {}
            Command::Pendulum { command } => match command {
                PendulumCommand::Spectrum { h_planck, h_min, h_max, j_min, j_max, critical_margin } => {
                    let p = &mut cfg.pendulum;
                    set(&mut p.h_planck, h_planck);
                    set(&mut p.critical_margin, critical_margin);
                    set(&mut p.window.h_min, h_min);
                    set(&mut p.window.h_max, h_max);
                    set(&mut p.window.j_min, j_min);
                    set(&mut p.window.j_max, j_max);
                }
                PendulumCommand::Monodromy { radius, samples, orientation, start_angle, center_h, center_j } => {
                    let l = &mut cfg.pendulum.loop_;
                    set(&mut l.radius, radius);
                    set(&mut l.samples, samples);
                    set(&mut l.start_angle, start_angle);
                    set(&mut l.center_h, center_h);
                    set(&mut l.center_j, center_j);
                    if let Some(o) = orientation {
                        l.orientation = Some(match o {
                            OrientationArg::Ccw => Orientation::Counterclockwise,
                            OrientationArg::Cw => Orientation::Clockwise,
                        });
                    }
                }
            },
        }
    }

    fn run(&self, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
        match self {
            Command::DiracCheck { pairs, .. } => commands::dirac_check(cfg, pairs, out),
            Command::ShiftCheck { .. } => commands::shift_check(cfg, out),
            Command::Shift { word, label, .. } => commands::shift(cfg, word, label, out),
            Command::Atlas { command: AtlasCommand::Validate { path } } => commands::atlas_validate(path, out),
            Command::Pendulum { command: PendulumCommand::Spectrum { .. } } => commands::pendulum_spectrum(cfg, out),
            Command::Pendulum { command: PendulumCommand::Monodromy { .. } } => {
                commands::pendulum_monodromy(cfg, out)
            }
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: Vec<String>,
    started_at: String,
    wall_clock_s: f64,
    exit_code: i32,
    config: Option<RunConfig>,
    outputs: Vec<String>,
    summary: Value,
    error: Option<String>,
}

const LOG_LEVELS: [&str; 3] = ["error", "info", "debug"];

fn init_logging(cfg: Option<&RunConfig>) -> Result<(), CliError> {
    let level = match std::env::var("BS_LOG") {
        Ok(v) => v,
        Err(_) => cfg.and_then(|c| c.log.clone()).unwrap_or_else(|| "error".into()),
    };
    if !LOG_LEVELS.contains(&level.as_str()) {
        return Err(CliError::Config(format!("log level must be one of {LOG_LEVELS:?}, got {level:?}")));
    }
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = Some(d.clone());
    }
    cli.command.apply_overrides(&mut cfg);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let started = Instant::now();
    let started_at = chrono::Local::now().to_rfc3339();
    let loaded = load_config(&cli);
    let logging = init_logging(loaded.as_ref().ok());
    let out = loaded.as_ref().map(RunConfig::out_dir).unwrap_or_else(|_| {
        cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR))
    });
    let result = logging.and_then(|()| {
        let cfg = loaded.as_ref().map_err(|e| CliError::Config(e.to_string()))?;
        info!("running {} with output directory {}", cli.command.name(), out.display());
        cli.command.run(cfg, &out)
    });
    let (outputs, summary, err) = match result {
        Ok(o) => (o.outputs, o.summary, o.failure.map(CliError::Failure)),
        Err(e) => (Vec::new(), Value::Null, Some(e)),
    };
    let mut code = err.as_ref().map_or(0, CliError::exit_code);
    if let Some(e) = &err {
        eprintln!("bsquant: {e}");
    }
    let manifest = Manifest {
        tool: "bsquant",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        args: std::env::args().skip(1).collect(),
        started_at,
        wall_clock_s: started.elapsed().as_secs_f64(),
        exit_code: code,
        config: loaded.as_ref().ok().map(RunConfig::effective),
        outputs,
        summary,
        error: err.as_ref().map(|e| e.to_string()),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    if let Err(e) = atomic_write(&out.join("manifest.json"), text.as_bytes()) {
        eprintln!("bsquant: cannot write manifest: {e}");
        if code == 0 {
            code = 2;
        }
    }
    ExitCode::from(code as u8)
}
