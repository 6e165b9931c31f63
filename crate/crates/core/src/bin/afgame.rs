use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use afgame::config::{ExperimentConfig, ExperimentId};
use afgame::experiments::{self, Outputs, Play};
use afgame::simulate::TrajectoryBatch;
use afgame::validate::{run_validate, Fault, ValidationOptions};
use afgame::GameError;

#[derive(Parser)]
#[command(name = "afgame", version, about = "LQ differential game under partial information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config merged over the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated paths, also used as the detector's replication count.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Full-information Riccati solution at the true couplings.
    SolveRiccati(Common),
    /// Belief-averaged coefficients and baseline gains.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Also write the simulated baseline paths.
        #[arg(long)]
        dump: bool,
    },
    /// Alignment-faking controller and ascent history.
    AfOptimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dump: bool,
    },
    /// Fisher matrices and asymptotic variances.
    Fisher(Common),
    /// Residual regression detector.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "baseline")]
        play: PlayArg,
        /// Trajectory dump to analyse instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// One of the three parameter sweeps.
    Experiment {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        common: Common,
    },
    /// Oracle checks; exits with status 1 if any fails.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlayArg {
    Baseline,
    Af,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Fig2,
    Fig3,
    Fig4,
}

enum Failure {
    Validation,
    Game(GameError),
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Failure::Game(e)
    }
}

fn exit_code(e: &GameError) -> u8 {
    match e.root() {
        GameError::NonFinite { .. }
        | GameError::SingularBlock { .. }
        | GameError::NoConvergence { .. }
        | GameError::RankDeficient { .. } => 3,
        _ => 2,
    }
}

fn load(common: &Common, id: Option<ExperimentId>) -> Result<(ExperimentConfig, PathBuf), GameError> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| GameError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_json(&text, id)?;
    if let Some(s) = common.seed {
        cfg.sim.seed = s;
    }
    if let Some(n) = common.paths {
        cfg.sim.n_paths = n;
        cfg.detect_reps = n;
    }
    if let Some(n) = common.steps {
        cfg.sim.n_steps = n;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.display().to_string();
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out_dir);
    Ok((cfg, out))
}

fn emit(outputs: &Outputs, cfg: &ExperimentConfig, dir: &std::path::Path) -> Result<(), GameError> {
    for p in outputs.write(dir, cfg)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SolveRiccati(c) => {
            let (cfg, dir) = load(&c, None)?;
            let out = Outputs {
                tables: vec![("riccati.csv".into(), experiments::riccati_table(&cfg)?)],
                blobs: Vec::new(),
            };
            emit(&out, &cfg, &dir)?;
        }
        Command::Baseline { common, dump } => {
            let (cfg, dir) = load(&common, None)?;
            emit(&experiments::baseline_outputs(&cfg, dump)?, &cfg, &dir)?;
        }
        Command::AfOptimize { common, dump } => {
            let (cfg, dir) = load(&common, None)?;
            emit(&experiments::af_outputs(&cfg, dump)?, &cfg, &dir)?;
        }
        Command::Fisher(c) => {
            let (cfg, dir) = load(&c, None)?;
            emit(&experiments::fisher_outputs(&cfg)?, &cfg, &dir)?;
        }
        Command::Detect { common, play, input } => {
            let (cfg, dir) = load(&common, None)?;
            let batch = match input {
                Some(p) => {
                    let f = fs::File::open(&p).map_err(|e| GameError::Io(format!("{}: {e}", p.display())))?;
                    Some(TrajectoryBatch::read_from(std::io::BufReader::new(f))?)
                }
                None => None,
            };
            let play = match play {
                PlayArg::Baseline => Play::Baseline,
                PlayArg::Af => Play::Af,
            };
            emit(&experiments::detect_outputs(&cfg, play, batch)?, &cfg, &dir)?;
        }
        Command::Experiment { which, common } => {
            let id = match which {
                Which::Fig2 => ExperimentId::Fig2,
                Which::Fig3 => ExperimentId::Fig3,
                Which::Fig4 => ExperimentId::Fig4,
            };
            let (cfg, dir) = load(&common, Some(id))?;
            let out = match which {
                Which::Fig2 => experiments::run_fig2(&cfg)?,
                Which::Fig3 => experiments::run_fig3(&cfg)?,
                Which::Fig4 => experiments::run_fig4(&cfg)?,
            };
            emit(&out, &cfg, &dir)?;
        }
        Command::Validate {
            seed,
            paths,
            out,
            inject_fault,
        } => {
            let mut opts = ValidationOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(n) = paths {
                opts.paths = n;
            }
            if inject_fault {
                opts.fault = Fault::SensitivitySource;
            }
            let report = run_validate(&opts)?;
            for c in &report.checks {
                println!("{}", c.line());
            }
            if let Some(dir) = out {
                let hash = afgame::report::config_hash(&format!("{opts:?}"))?;
                report.table()?.write(&dir.join("validate.csv"), &hash, opts.seed)?;
            }
            if !report.passed() {
                return Err(Failure::Validation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("afgame: validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Game(e)) => {
            eprintln!("afgame: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
