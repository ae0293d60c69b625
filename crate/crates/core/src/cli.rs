//! Command-line front end: single runs, batch evaluation, training and export.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{ControllerKind, ExperimentConfig};
use crate::curriculum::ObservabilityMode;
use crate::episode::{outcome_from_log, run_episode, EpisodeLog};
use crate::error::{PlmError, Result};
use crate::geometry::{rotate_planar, Pose};
use crate::metrics::{summarize_batch, write_episode_csv, write_summary_csv, EpisodeOutcome, Termination, METRIC_WINDOW_START};
use crate::policy::{
    load_checkpoint, save_checkpoint, save_params, ParamsHeader, PolicyParams, TrainerState, FEATURE_VERSION,
};
use crate::training::{total_generations, train};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DROP: i32 = 4;
pub const EXIT_ROBOT_FAILURE: i32 = 5;

pub const OUT_DIR_ENV: &str = "PLM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "plm-out";

#[derive(Parser, Debug)]
#[command(name = "plm", version, about = "Decentralized pinch-lift-move transport: run, evaluate, train, export")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    CfPlus,
    CfInit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Scripted,
    RigidOracle,
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    /// Episode metrics table recomputed from the log.
    Metrics,
    /// Per-tick normal force of every robot.
    Forces,
    /// Per-tick payload tracking errors.
    Errors,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results never depend on this.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory; falls back to the config, then `plm-out`.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the curriculum phase (1 pinch, 2 pinch-lift, 3 transport).
    #[arg(long)]
    pub phase: Option<u8>,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerArg>,
    /// Learned-controller weights; overrides the config.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one episode and write its trajectory log.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a batch of episodes and write per-episode and summary CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Overrides the config episode count.
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write every episode's trajectory log.
        #[arg(long)]
        logs: bool,
    },
    /// Train the shared policy through the configured stages; resumes from a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Stop after this many generations in this invocation.
        #[arg(long)]
        generations: Option<u64>,
    },
    /// Convert a trajectory log into CSV tables.
    Export {
        /// Trajectory log (JSON lines).
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        kind: ExportKind,
        #[arg(long, env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
    },
}

/// Parses `args` and runs; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("plm: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &PlmError) -> i32 {
    match e {
        PlmError::Config(_) | PlmError::InfeasibleScene(_) | PlmError::NoFeasibleContacts { .. } => EXIT_CONFIG,
        PlmError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_ERROR,
    }
}

/// Outcome-to-exit-code mapping of a single run.
pub fn outcome_code(o: &EpisodeOutcome) -> i32 {
    if o.robot_failed {
        EXIT_ROBOT_FAILURE
    } else if o.dropped {
        EXIT_DROP
    } else {
        EXIT_OK
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run { common } => cmd_run(&common),
        Command::Eval { common, episodes, logs } => cmd_eval(&common, episodes, logs),
        Command::Train { common, generations } => cmd_train(&common, generations),
        Command::Export { log, kind, out_dir } => {
            let dir = out_dir.unwrap_or_else(|| log.parent().unwrap_or(Path::new(".")).to_path_buf());
            let path = cmd_export(&log, kind, &dir)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
    }
}

/// Loads the config and applies command-line overrides.
pub fn effective_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.phase {
        cfg.phase = p;
    }
    if let Some(c) = common.controller {
        cfg.controller.kind = match c {
            ControllerArg::Scripted => ControllerKind::Scripted,
            ControllerArg::RigidOracle => ControllerKind::RigidOracle,
            ControllerArg::Learned => ControllerKind::Learned,
        };
    }
    if let Some(p) = &common.params {
        cfg.controller.params = Some(p.clone());
    }
    if let Some(m) = common.mode {
        cfg.observability = match m {
            ModeArg::CfPlus => ObservabilityMode::cf_plus(),
            ModeArg::CfInit => ObservabilityMode::cf_init(),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(PlmError::InvalidArgument("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PlmError::InvalidArgument(e.to_string()))
}

/// Writes `bytes` through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn log_file_name(seed: u64) -> String {
    format!("episode_{seed}.jsonl")
}

fn cmd_run(common: &Common) -> Result<i32> {
    let cfg = effective_config(common)?;
    let hash = cfg.hash()?;
    let controller = cfg.controller()?;
    let ep_cfg = cfg.episode_config()?;
    let result = run_episode(&ep_cfg, cfg.seed, &controller, &cfg.run_options(), &hash)?;
    let dir = out_dir(common, &cfg);
    std::fs::create_dir_all(&dir)?;
    let log = result.log.as_ref().expect("run records its log");
    let mut bytes = Vec::new();
    log.write_jsonl(&mut bytes)?;
    let path = dir.join(log_file_name(cfg.seed));
    write_atomic(&path, &bytes)?;
    println!("{}", serde_json::to_string(&result.outcome)?);
    eprintln!("log written to {}", path.display());
    Ok(outcome_code(&result.outcome))
}

/// Outcome recorded for an episode that could not be simulated.
fn failed_outcome(seed: u64, n: usize) -> EpisodeOutcome {
    EpisodeOutcome {
        seed,
        lin_vel_rmse: None,
        ang_vel_rmse: None,
        height_rmse: None,
        dropped: false,
        robot_failed: true,
        termination: Termination::Diverged,
        end_time: 0.0,
        per_robot_mean_normal_force: vec![0.0; n],
        side_imbalance: None,
        mean_return: 0.0,
    }
}

fn cmd_eval(common: &Common, episodes: Option<usize>, logs: bool) -> Result<i32> {
    let mut cfg = effective_config(common)?;
    if let Some(n) = episodes {
        cfg.episodes = n;
        cfg.validate()?;
    }
    let hash = cfg.hash()?;
    let controller = cfg.controller()?;
    let ep_cfg = cfg.episode_config()?;
    let mut opts = cfg.run_options();
    opts.record = logs;
    let dir = out_dir(common, &cfg);
    std::fs::create_dir_all(&dir)?;
    let seeds: Vec<u64> = (0..cfg.episodes as u64).map(|i| cfg.seed.wrapping_add(i)).collect();

    // results are collected in episode order regardless of completion order
    let results: Vec<(EpisodeOutcome, Option<Vec<u8>>)> = pool(common.workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| match run_episode(&ep_cfg, seed, &controller, &opts, &hash) {
                Ok(r) => {
                    let bytes = r.log.map(|l| {
                        let mut b = Vec::new();
                        l.write_jsonl(&mut b).map(|_| b)
                    });
                    (r.outcome, bytes.transpose())
                }
                Err(e) => {
                    eprintln!("episode seed {seed}: {e}");
                    (failed_outcome(seed, cfg.scene.n_robots), Ok(None))
                }
            })
            .map(|(o, b)| b.map(|b| (o, b)))
            .collect::<Result<Vec<_>>>()
    })?;

    let outcomes: Vec<EpisodeOutcome> = results.iter().map(|(o, _)| o.clone()).collect();
    if logs {
        for (o, bytes) in &results {
            if let Some(b) = bytes {
                write_atomic(&dir.join(log_file_name(o.seed)), b)?;
            }
        }
    }
    let summary = summarize_batch(&outcomes)?;
    let mut episodes_csv = Vec::new();
    write_episode_csv(&mut episodes_csv, &hash, &outcomes, &summary, cfg.seed)?;
    write_atomic(&dir.join("episodes.csv"), &episodes_csv)?;
    let mut summary_csv = Vec::new();
    write_summary_csv(&mut summary_csv, &hash, cfg.seed, &summary)?;
    write_atomic(&dir.join("summary.csv"), &summary_csv)?;
    println!(
        "episodes {} drop {:.1}% failure {:.1}% lin_vel_rmse {}",
        outcomes.len(),
        summary.drop_percent,
        summary.failure_percent,
        summary.lin_vel_rmse_mean.map_or("n/a".to_string(), |v| format!("{v:.4}"))
    );
    Ok(EXIT_OK)
}

pub const FITNESS_COLUMNS: [&str; 10] = [
    "config_hash",
    "seed",
    "iteration",
    "phase",
    "anneal_stage",
    "mean_fitness",
    "best_fitness",
    "discarded",
    "sigma",
    "learning_rate",
];

fn fitness_csv(state: &TrainerState) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FITNESS_COLUMNS)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in &state.history {
        let stage = serde_json::to_value(r.anneal_stage)?;
        w.write_record([
            state.config_hash.clone(),
            state.seed.to_string(),
            r.iteration.to_string(),
            r.phase.to_string(),
            stage.as_str().unwrap_or_default().to_string(),
            opt(r.mean_fitness),
            opt(r.best_fitness),
            r.discarded.to_string(),
            r.sigma.to_string(),
            r.learning_rate.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| PlmError::Io(e.into_error()))
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const FITNESS_FILE: &str = "fitness.csv";

fn write_training_outputs(dir: &Path, state: &TrainerState, cfg: &ExperimentConfig) -> Result<()> {
    save_checkpoint(&dir.join(CHECKPOINT_FILE), state)?;
    let params = PolicyParams::from_values(cfg.training_setup()?.net, state.params.clone())?;
    let header = ParamsHeader {
        shape: params.shape,
        seed: state.seed,
        iteration: state.iteration,
        config_hash: cfg.hash_bytes()?,
        feature_version: FEATURE_VERSION,
    };
    let tmp = dir.join("params.partial");
    save_params(&tmp, &header, &params)?;
    std::fs::rename(&tmp, dir.join(PARAMS_FILE))?;
    write_atomic(&dir.join(FITNESS_FILE), &fitness_csv(state)?)
}

fn cmd_train(common: &Common, generations: Option<u64>) -> Result<i32> {
    let cfg = effective_config(common)?;
    let hash = cfg.hash()?;
    let setup = cfg.training_setup()?;
    let dir = out_dir(common, &cfg);
    let checkpoint = dir.join(CHECKPOINT_FILE);
    let mut state = if checkpoint.exists() {
        let s = load_checkpoint(&checkpoint)?;
        if s.config_hash != hash {
            return Err(PlmError::Config(format!(
                "checkpoint {} was written for config {} but this config hashes to {hash}",
                checkpoint.display(),
                s.config_hash
            )));
        }
        eprintln!("resuming from iteration {}", s.iteration);
        s
    } else {
        let mut s = TrainerState::new(cfg.initial_params().values, cfg.seed);
        s.config_hash = hash.clone();
        s
    };
    std::fs::create_dir_all(&dir)?;
    let every = cfg.training.checkpoint_every.max(1);
    let total = total_generations(&setup.schedule);
    pool(common.workers)?.install(|| {
        train(&mut state, &setup, generations, |s, r| {
            eprintln!(
                "generation {}/{total} phase {} mean fitness {}",
                r.iteration + 1,
                r.phase,
                r.mean_fitness.map_or("n/a".to_string(), |v| format!("{v:.4}"))
            );
            if s.iteration % every == 0 {
                write_training_outputs(&dir, s, &cfg)?;
            }
            Ok(())
        })
    })?;
    write_training_outputs(&dir, &state, &cfg)?;
    println!("{}", dir.join(PARAMS_FILE).display());
    Ok(EXIT_OK)
}

/// Writes the requested table for a log and returns its path.
pub fn cmd_export(log_path: &Path, kind: ExportKind, dir: &Path) -> Result<PathBuf> {
    let log = EpisodeLog::load(log_path)?;
    let stem = log_path
        .file_stem()
        .map_or("episode".to_string(), |s| s.to_string_lossy().into_owned());
    let (suffix, bytes) = match kind {
        ExportKind::Metrics => ("metrics", export_metrics(&log)?),
        ExportKind::Forces => ("forces", export_forces(&log)?),
        ExportKind::Errors => ("errors", export_errors(&log)?),
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}_{suffix}.csv"));
    write_atomic(&path, &bytes)?;
    Ok(path)
}

fn export_metrics(log: &EpisodeLog) -> Result<Vec<u8>> {
    let outcome = outcome_from_log(log)?;
    let outcomes = [outcome];
    let summary = summarize_batch(&outcomes)?;
    let mut out = Vec::new();
    write_episode_csv(&mut out, &log.header.config_hash, &outcomes, &summary, log.header.seed)?;
    Ok(out)
}

fn export_forces(log: &EpisodeLog) -> Result<Vec<u8>> {
    let n = log.header.episode.scene.contact_frames.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["config_hash".to_string(), "seed".to_string(), "t".to_string(), "in_window".to_string()];
    head.extend((0..n).map(|r| format!("normal_force_{r}")));
    w.write_record(&head)?;
    for t in &log.ticks {
        let mut row = vec![
            log.header.config_hash.clone(),
            log.header.seed.to_string(),
            t.t.to_string(),
            (t.t + 1e-9 >= METRIC_WINDOW_START).to_string(),
        ];
        row.extend(t.robots.iter().map(|r| r.normal_force.to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| PlmError::Io(e.into_error()))
}

fn export_errors(log: &EpisodeLog) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config_hash",
        "seed",
        "t",
        "vx_error",
        "vy_error",
        "yaw_rate_error",
        "height_error",
    ])?;
    for t in &log.ticks {
        let pose = Pose::from_array(t.payload);
        let v_cmd = rotate_planar(t.command.v_pl, pose.yaw());
        w.write_record([
            log.header.config_hash.clone(),
            log.header.seed.to_string(),
            t.t.to_string(),
            (t.payload_twist[0] - v_cmd[0]).to_string(),
            (t.payload_twist[1] - v_cmd[1]).to_string(),
            (t.payload_twist[5] - t.command.omega_pl).to_string(),
            (pose.position.z - t.command.h_pl).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| PlmError::Io(e.into_error()))
}

/// Flushes stdout; used by the binary before exiting.
pub fn flush() {
    let _ = std::io::stdout().flush();
}
