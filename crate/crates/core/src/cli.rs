//! Command-line driver.
//!
//! Every command that produces data writes a run directory under the output
//! root holding `config.json` (the resolved configuration), `manifest.json`
//! (seed, command and build identifier) and one or more CSV files. Run
//! directories are named after the command, environment and seed, so a
//! re-run replaces its previous output.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on configuration
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use envs::Transcript;
use serde::Serialize;

use crate::agents::training::{evaluate, train_offline, Learner, OfflineMode};
use crate::agents::{NaiveGreedy, NaiveRandom};
use crate::config::{parse_override, ExperimentKind, RunConfig};
use crate::error::{Result, WinneError};
use crate::harness::{
    run_ablation, run_adaptation, run_benchmark, run_prediction, run_retention,
    run_tournament_recorded, summary_to_csv, write_records, AgentType, MetricRecord, Roster,
    TrainMode, Zoo, BENCHMARK_KEYS,
};
use crate::persist::{write_atomic, write_json};

/// Identifies the build in run manifests.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(
    name = "winne",
    version,
    about = "Train, play and analyse individualized competitive agents"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Environment (`duel` or `card`); overrides the file.
    #[arg(long, global = true)]
    pub env: Option<String>,
    /// Output root; overrides the file and the WINNE_OUTPUT_ROOT variable.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Any other key as `key=value`, dotted for sections
    /// (`training.vs_naive_games=50`). May be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one baseline learner offline and save its checkpoint.
    Train,
    /// Play one elimination tournament.
    Tournament,
    /// Run the experiment named by the config's `experiment` key.
    Run,
    /// Repeated tournaments of the baseline roster.
    ExpBenchmark,
    /// Per-game prediction accuracy against each opponent type.
    ExpPrediction,
    /// Win fraction of the composite agent per opponent type.
    ExpAdaptation,
    /// Long-gap re-encounters with the agent persisted between cycles.
    ExpRetention,
    /// Full pipeline against the global-policy-only ablation.
    ExpAblation,
    /// Finite-difference check of every layer and loss.
    Gradcheck {
        /// Random cases per layer kind; defaults to the config value or 50.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Re-simulate a recorded transcript and compare every state hash.
    ReplayVerify {
        /// Transcript in JSON-lines form.
        transcript: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &WinneError) -> i32 {
    if e.is_config() {
        2
    } else {
        1
    }
}

/// Resolves the run configuration: the file, then flags.
pub fn resolve_config(
    common: &CommonArgs,
    experiment: Option<ExperimentKind>,
) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(seed) = common.seed {
        overrides.push((
            "seed".to_string(),
            toml::Value::Integer(seed_as_toml(seed)?),
        ));
    }
    if let Some(env) = &common.env {
        overrides.push(("env".to_string(), toml::Value::String(env.clone())));
    }
    if let Some(out) = &common.output {
        overrides.push((
            "output".to_string(),
            toml::Value::String(out.display().to_string()),
        ));
    }
    for s in &common.set {
        overrides.push(parse_override(s)?);
    }
    if let Some(kind) = experiment {
        overrides.push((
            "experiment".to_string(),
            toml::Value::String(kind.name().to_string()),
        ));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn seed_as_toml(seed: u64) -> Result<i64> {
    i64::try_from(seed)
        .map_err(|_| WinneError::Config(format!("`seed`: {seed} does not fit a TOML integer")))
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gradcheck { cases } => gradcheck(&cli.common, *cases),
        Command::ReplayVerify { transcript } => replay_verify(transcript),
        Command::Train => train(&resolve_config(&cli.common, None)?, "train"),
        Command::Tournament => tournament(&resolve_config(&cli.common, None)?),
        Command::Run => {
            let c = resolve_config(&cli.common, None)?;
            experiment(&c, c.experiment)
        }
        Command::ExpBenchmark => experiment_cmd(&cli.common, ExperimentKind::Benchmark),
        Command::ExpPrediction => experiment_cmd(&cli.common, ExperimentKind::Prediction),
        Command::ExpAdaptation => experiment_cmd(&cli.common, ExperimentKind::Adaptation),
        Command::ExpRetention => experiment_cmd(&cli.common, ExperimentKind::Retention),
        Command::ExpAblation => experiment_cmd(&cli.common, ExperimentKind::Ablation),
    }
}

fn experiment_cmd(common: &CommonArgs, kind: ExperimentKind) -> Result<()> {
    let c = resolve_config(common, Some(kind))?;
    experiment(&c, kind)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seed: u64,
    build: &'a str,
    outputs: Vec<String>,
}

/// A run directory being filled.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    seed: u64,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(config: &RunConfig, command: &str) -> Result<Self> {
        let name = format!("{command}-{}-seed{}", config.env.name(), config.seed);
        let path = config.output_root().join(name);
        std::fs::create_dir_all(&path)?;
        write_json(&path.join("config.json"), config)?;
        Ok(Self {
            path,
            command: command.to_string(),
            seed: config.seed,
            outputs: Vec::new(),
        })
    }

    pub fn write_csv(&mut self, name: &str, records: &[MetricRecord]) -> Result<()> {
        write_records(&self.path.join(name), records)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest last, so its presence marks a complete run.
    pub fn finish(self) -> Result<PathBuf> {
        let m = RunManifest {
            command: &self.command,
            seed: self.seed,
            build: BUILD_ID,
            outputs: self.outputs,
        };
        write_json(&self.path.join("manifest.json"), &m)?;
        println!("{}", self.path.display());
        Ok(self.path)
    }
}

fn zoo(c: &RunConfig) -> Zoo {
    let mut z = Zoo::new(c.env, c.training.clone(), c.seed);
    z.winne = c.winne_config();
    z
}

fn train(c: &RunConfig, command: &str) -> Result<()> {
    let mut dir = RunDir::create(c, command)?;
    let alg = c.train.algorithm;
    let fresh = Learner::fresh_with(alg, c.env, c.training.preset, c.seed);
    let (mode, games) = match c.train.mode {
        TrainMode::Ofvn => (OfflineMode::VsNaive, c.training.vs_naive_games),
        _ => (
            OfflineMode::SelfPlay {
                generations: c.training.self_play_generations,
                segments: c.training.self_play_segments,
            },
            c.training.self_play_games,
        ),
    };
    let (learner, report) = train_offline(fresh, c.env, mode, games, c.seed)?;
    let agent = format!("{alg}-{}", c.train.mode.name());
    let mut records: Vec<MetricRecord> = report
        .curve
        .iter()
        .enumerate()
        .map(|(g, &v)| MetricRecord {
            run: 0,
            tournament: 0,
            phase: 0,
            game: g as u64,
            agent: agent.clone(),
            opponents: String::new(),
            metric: "training_victory".into(),
            value: v,
        })
        .collect();
    let eval_seed = neurocore::rng::derive_seed(c.seed, &[0xE7A1]);
    for (name, opponent) in [
        ("naive-random", &NaiveRandom as &dyn crate::agents::Agent),
        ("naive-greedy", &NaiveGreedy as &dyn crate::agents::Agent),
    ] {
        let rate = evaluate(&learner, opponent, c.env, c.train.eval_games, eval_seed)?;
        records.push(MetricRecord {
            run: 0,
            tournament: 0,
            phase: 0,
            game: 0,
            agent: agent.clone(),
            opponents: name.into(),
            metric: "eval_win_rate".into(),
            value: rate,
        });
        println!("{agent} vs {name}: {rate:.3}");
    }
    dir.write_csv("train.csv", &records)?;
    let ckpt = c
        .checkpoint
        .clone()
        .unwrap_or_else(|| dir.path.join("checkpoint"));
    learner.save(
        &ckpt,
        crate::agents::training::AgentManifest {
            algorithm: alg,
            env_kind: c.env,
            mode: c.train.mode.name().into(),
            spec: serde_json::Value::Null,
            training_games: report.games,
            seed: c.seed,
        },
    )?;
    dir.finish().map(|_| ())
}

fn tournament(c: &RunConfig) -> Result<()> {
    let mut dir = RunDir::create(c, "tournament")?;
    let mut z = zoo(c);
    let mut roster = Roster::build(&mut z, &c.roster, c.roster_size)?;
    let (out, transcripts) = run_tournament_recorded(&mut roster, c.env, c.seed)?;
    let records = out.records(&roster, 0, 0);
    println!(
        "champion: {} ({} phases, {} games)",
        roster.entrants[out.winner].id,
        out.phases,
        out.games.len()
    );
    dir.write_csv("tournament.csv", &records)?;
    if c.record_transcripts {
        for (i, t) in transcripts.iter().enumerate() {
            dir.write_bytes(
                &format!("transcripts/game-{i:03}.jsonl"),
                t.to_jsonl().as_bytes(),
            )?;
        }
    }
    dir.finish().map(|_| ())
}

fn experiment(c: &RunConfig, kind: ExperimentKind) -> Result<()> {
    let command = format!("exp-{}", kind.name());
    let mut dir = RunDir::create(c, &command)?;
    let mut z = zoo(c);
    match kind {
        ExperimentKind::Benchmark => {
            let template = Roster::build(&mut z, &c.roster, c.roster_size)?;
            let out = run_benchmark(&template, c.env, c.tournaments, c.runs, c.seed)?;
            dir.write_csv("benchmark.csv", &out.records)?;
            dir.write_bytes(
                "benchmark_summary.csv",
                &summary_to_csv(&out.summary, &BENCHMARK_KEYS)?,
            )?;
        }
        ExperimentKind::Prediction => {
            let records = run_prediction(&mut z, &c.opponents, c.games, c.seed)?;
            dir.write_csv("prediction.csv", &records)?;
        }
        ExperimentKind::Adaptation => {
            let mut types = vec![AgentType::Winne];
            types.extend(c.roster.iter().copied().filter(|&t| t != AgentType::Winne));
            if types.len() > c.roster_size {
                return Err(WinneError::Config(format!(
                    "`roster`: {} entrants plus the composite agent exceed roster_size {}",
                    types.len() - 1,
                    c.roster_size
                )));
            }
            let template = Roster::build(&mut z, &types, c.roster_size)?;
            let records = run_adaptation(&template, c.env, c.tournaments, c.runs, c.seed)?;
            dir.write_csv("adaptation.csv", &records)?;
        }
        ExperimentKind::Retention => {
            let bundle = dir.path.join("bundle");
            let out = run_retention(&mut z, &c.opponents, c.cycles, c.block, &bundle, c.seed)?;
            if let Some(cycle) = out.round_trips.iter().position(|&ok| !ok) {
                return Err(WinneError::Persist(format!(
                    "bundle did not round-trip after cycle {cycle}"
                )));
            }
            dir.write_csv("retention.csv", &out.records)?;
        }
        ExperimentKind::Ablation => {
            let out = run_ablation(&mut z, c.ablation_opponent, c.ablation_games, c.seed)?;
            println!("full {:.3}, global only {:.3}", out.full, out.global_only);
            dir.write_csv("ablation.csv", &out.records)?;
        }
    }
    dir.finish().map(|_| ())
}

fn gradcheck(common: &CommonArgs, cases: Option<usize>) -> Result<()> {
    // The config is optional here; only the seed and case count matter.
    let from_file = match &common.config {
        Some(_) => Some(resolve_config(common, None)?),
        None => None,
    };
    let seed = common
        .seed
        .or(from_file.as_ref().map(|c| c.seed))
        .unwrap_or(0);
    let cases = cases
        .or(from_file.as_ref().map(|c| c.gradcheck_cases))
        .unwrap_or(50);
    let started = std::time::Instant::now();
    let report = neurocore::gradcheck::run_suite(cases, seed);
    let mut out = std::io::stdout().lock();
    for c in &report.cases {
        writeln!(
            out,
            "{:<24} cases {:>4}  max relative error {:.3e}",
            c.name, c.cases, c.max_relative_error
        )?;
    }
    writeln!(
        out,
        "worst {:.3e} in {:.1?}",
        report.worst(),
        started.elapsed()
    )?;
    if report.passes(GRADCHECK_TOLERANCE) {
        Ok(())
    } else {
        Err(WinneError::Neuro(neurocore::NeuroError::Contract(format!(
            "gradient check exceeded {GRADCHECK_TOLERANCE:e}"
        ))))
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn replay_verify(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| WinneError::Persist(format!("{}: {e}", path.display())))?;
    let t = Transcript::from_jsonl(&text)?;
    let turns = envs::verify(&t)?;
    println!("{}: {turns} turns verified", path.display());
    Ok(())
}
