//! Command-line entry point.
//!
//! ```text
//! mrn [--config FILE] [--out DIR] [--workers N] [--set section.key=value]... <command>
//! ```
//!
//! Commands write into `<out>/<command>/` and always leave a
//! `config.toml` snapshot of the resolved settings there. The output root
//! is `--out`, else `$MRN_OUT`, else `common.out_dir`, else `runs`.
//!
//! Exit codes: `0` all checks passed, `1` a check failed or a run aborted,
//! `2` the configuration (or checkpoint path) is unusable.

pub mod config;
pub mod runners;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ConfigError, ExperimentConfig};
pub use runners::RunError;

use crate::gcrl::{self, DdpgAgent};
use crate::nets::{load_params, save_params, CriticVariant};

pub const OUT_ENV: &str = "MRN_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mrn", version, about = "Metric residual network critics: theory checks and experiments")]
pub struct Cli {
    /// Config file with one section per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Override a config key, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Finite-difference check of every critic and the actor loss.
    Gradcheck,
    /// Exact-Q* and MRN-head property checks over generated instances.
    VerifyTheory,
    /// Regression on the asymmetric toy world.
    Toy,
    /// DDPG + HER on the point mass over the variant × seed grid.
    Train,
    /// Success rate of a saved agent.
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gradcheck => "gradcheck",
            Command::VerifyTheory => "verify-theory",
            Command::Toy => "toy",
            Command::Train => "train",
            Command::Eval => "eval",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("checkpoint {0} does not exist")]
    MissingCheckpoint(String),
    #[error("eval needs eval.checkpoint")]
    NoCheckpoint,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingCheckpoint(_) | CliError::NoCheckpoint | CliError::Pool(_) => EXIT_CONFIG,
            CliError::Run(RunError::Config(_)) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(RunError::Io(e))
    }
}

/// Result of one command: whether its checks passed and where it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

pub fn output_root(cli_out: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.common.out_dir.as_deref().map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Parses arguments, runs the command and reports. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(outcome) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            println!("output: {}", outcome.out_dir.display());
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<Outcome, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("common.workers={w}"));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let root = output_root(cli.out.as_deref(), &cfg);
    run(cli.command, &cfg, &root)
}

/// Runs `command` with a resolved config, writing under `root/<command>`.
pub fn run(command: Command, cfg: &ExperimentConfig, root: &Path) -> Result<Outcome, CliError> {
    if command == Command::Eval {
        // fail on the checkpoint before creating any output
        checkpoint_path(cfg)?;
    }
    let out_dir = root.join(command.name());
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.common.workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let mut lines = Vec::new();
    let passed = match command {
        Command::Gradcheck => {
            let rows = runners::gradcheck_suite(&cfg.gradcheck, &pool)?;
            fs::write(out_dir.join("gradcheck.csv"), runners::gradcheck_csv(&rows))?;
            let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
            let failed = rows.iter().filter(|r| !r.passed).count();
            lines.push(format!("gradcheck: {} checks, {failed} failed, max rel err {worst:.3e}", rows.len()));
            failed == 0
        }
        Command::VerifyTheory => {
            let report = runners::theory_suite(&cfg.verify_theory, &pool)?;
            fs::write(out_dir.join("theory.csv"), report.to_csv())?;
            for check in report.checks() {
                let (n, bad, v, worst) = report.totals(check);
                let status = if bad == 0 { "ok" } else { "FAIL" };
                lines.push(format!("{check}: {n} instances, {bad} failing, {v} violations, worst {worst:.3e} [{status}]"));
            }
            report.passed()
        }
        Command::Toy => {
            let study = runners::toy_study(&cfg.toy, &pool)?;
            fs::write(out_dir.join("curves.csv"), study.curves_csv())?;
            fs::write(out_dir.join("best.csv"), study.best_csv())?;
            fs::write(out_dir.join("k_study.csv"), study.k_csv())?;
            let summary = study.summary_csv(&cfg.toy);
            fs::write(out_dir.join("summary.csv"), &summary)?;
            lines.extend(summary.lines().skip(1).map(str::to_string));
            true
        }
        Command::Train => {
            let runs = runners::train_grid(&cfg.train, &pool)?;
            for (curve, agent) in &runs {
                let stem = format!("{}_seed{}", curve.arch, curve.seed);
                fs::write(out_dir.join(format!("curve_{stem}.csv")), curve.csv())?;
                if cfg.train.save_checkpoints {
                    save_params(agent, &out_dir.join(format!("agent_{stem}.params"))).map_err(RunError::from)?;
                }
                let to90 = curve.epochs_to(0.9).map_or("never".to_string(), |e| e.to_string());
                lines.push(format!(
                    "{} seed {}: final success {:.2}, 90% at epoch {to90}, {:.0}s",
                    curve.arch,
                    curve.seed,
                    curve.final_success(),
                    curve.wall_secs
                ));
            }
            let curves: Vec<_> = runs.into_iter().map(|(c, _)| c).collect();
            fs::write(out_dir.join("summary.csv"), runners::emit_summary(&curves)?)?;
            true
        }
        Command::Eval => {
            let path = checkpoint_path(cfg)?;
            let variant: CriticVariant = cfg.eval.variant.parse().map_err(RunError::from)?;
            let train_cfg = cfg.train.run_config(variant, cfg.eval.seed).map_err(RunError::from)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
            let mut agent = DdpgAgent::new(&train_cfg.env, &train_cfg.agent, &mut rng).map_err(RunError::from)?;
            load_params(&mut agent, &path).map_err(RunError::from)?;
            let rate = gcrl::evaluate(&train_cfg.env, &agent, cfg.eval.rollouts, &mut rng).map_err(RunError::from)?;
            fs::write(
                out_dir.join("eval.csv"),
                format!("checkpoint,arch,seed,rollouts,success_rate\n{},{},{},{},{rate}\n", path.display(), variant, cfg.eval.seed, cfg.eval.rollouts),
            )?;
            lines.push(format!("success rate {rate} over {} rollouts", cfg.eval.rollouts));
            true
        }
    };
    Ok(Outcome { passed, out_dir, lines })
}

fn checkpoint_path(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let p = cfg.eval.checkpoint.as_deref().ok_or(CliError::NoCheckpoint)?;
    let path = PathBuf::from(p);
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(p.to_string()));
    }
    Ok(path)
}
