use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use codesign::codesign::{
    brute_force_minimum, run_fixed_baseline, run_simulation, run_simulation_observed, CodesignError,
    RunLog,
};
use codesign::config::{parse_config, parse_config_str, ConfigError, RunConfig, ScenarioKind};
use codesign::output::{self, BruteRow, RunMeta};
use codesign::scenario::Scenario;

#[derive(Parser)]
#[command(name = "qcodesign", version, about = "Online controller/certificate co-design runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the scenario defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// consensus1, consensus2 or motor; overrides the file's scenario key.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config (default "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Online co-design over the full horizon.
    Run,
    /// Constant design over the full horizon.
    Baseline {
        /// Comma-separated gains: one value for every controller gain, the
        /// controller gains only, or the full design vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        gains: Option<Vec<f64>>,
    },
    /// Online run plus an exhaustive search over each epoch's encoding.
    Brute {
        /// Largest qubit count searched exhaustively.
        #[arg(long, default_value_t = 12)]
        cap: usize,
    },
    /// Print the fully resolved configuration.
    PrintConfig,
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<CodesignError> for Failure {
    fn from(e: CodesignError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

fn io_err(what: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", what.display()))
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let kind = match &c.scenario {
        Some(s) => Some(
            ScenarioKind::parse(s)
                .ok_or_else(|| Failure::Config(format!("invalid `scenario`: unknown scenario {s:?}")))?,
        ),
        None => None,
    };
    let mut cfg = match &c.config {
        Some(p) => parse_config(p, kind)?,
        None => parse_config_str("", kind)?,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = Some(out.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn write_run(dir: &Path, command: &str, cfg: &RunConfig, sc: &Scenario, log: &RunLog) -> Result<(), Failure> {
    let plant = sc.plant.as_ref();
    let p = dir.join("epochs.csv");
    output::write_epochs(&p, plant, log).map_err(|e| io_err(&p, e))?;
    let p = dir.join("trajectory.csv");
    output::write_trajectory(&p, plant, log).map_err(|e| io_err(&p, e))?;
    if command != "baseline" {
        let p = dir.join("qite_trace.csv");
        output::write_qite_traces(&p, log).map_err(|e| io_err(&p, e))?;
    }
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        epochs: log.epochs.len(),
        terminated_early: log.terminated_early,
        termination_reason: log.termination_reason.clone(),
        config: cfg.clone(),
    };
    let p = dir.join("run_meta.toml");
    output::write_meta(&p, &meta).map_err(|e| io_err(&p, e))
}

fn baseline_design(cfg: &RunConfig, sc: &Scenario, gains: Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    let mut design = cfg.baseline_design.clone();
    let n_ctrl = sc.plant.n_controller();
    match gains {
        None => {}
        Some(g) if g.len() == 1 => design[..n_ctrl].iter_mut().for_each(|v| *v = g[0]),
        Some(g) if g.len() == n_ctrl => design[..n_ctrl].copy_from_slice(&g),
        Some(g) if g.len() == design.len() => design = g,
        Some(g) => {
            return Err(Failure::Config(format!(
                "invalid `gains`: got {} values, expected 1, {n_ctrl} or {}",
                g.len(),
                design.len()
            )))
        }
    }
    Ok(design)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Config("invalid `threads`: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Run => {
            let sc = cfg.build_scenario()?;
            let log = run_simulation(&sc, &cfg.simulation_settings())?;
            let dir = out_dir(&cfg)?;
            write_run(&dir, "run", &cfg, &sc, &log)?;
            eprintln!("{} epochs; {}", log.epochs.len(), log.termination_reason);
            Ok(())
        }
        Command::Baseline { gains } => {
            let sc = cfg.build_scenario()?;
            let design = baseline_design(&cfg, &sc, gains)?;
            let log = run_fixed_baseline(&sc, &design, &cfg.simulation_settings())?;
            let dir = out_dir(&cfg)?;
            write_run(&dir, "baseline", &cfg, &sc, &log)?;
            eprintln!("{} boundaries; {}", log.epochs.len(), log.termination_reason);
            Ok(())
        }
        Command::Brute { cap } => {
            let sc = cfg.build_scenario()?;
            let settings = cfg.simulation_settings();
            let mut rows = Vec::new();
            let log = run_simulation_observed(&sc, &settings, |rec| {
                let (min, bits) = brute_force_minimum(rec, &sc, &settings.epoch, cap)?;
                rows.push(BruteRow {
                    epoch: rec.index,
                    t_start: rec.t_start,
                    n_qubits: rec.n_qubits,
                    winner_cost: rec.exact_cost,
                    brute_min: min,
                    winner_bits: rec.winner_bits.to_string(),
                    brute_bits: bits.to_string(),
                });
                Ok(())
            })?;
            let dir = out_dir(&cfg)?;
            write_run(&dir, "brute", &cfg, &sc, &log)?;
            let p = dir.join("brute.csv");
            output::write_brute(&p, &rows).map_err(|e| io_err(&p, e))?;
            eprintln!("{} epochs checked exhaustively", rows.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}
