//! Run configuration.
//!
//! A run is described by a TOML document. Command-line flags are applied on
//! top of the file as `key = value` overrides (dotted keys reach into
//! sections), and the merged document is then parsed strictly: unknown keys,
//! missing required keys and type mismatches are configuration errors that
//! name the key.

use std::path::{Path, PathBuf};

use envs::EnvKind;
use serde::{Deserialize, Serialize};

use crate::agents::training::Algorithm;
use crate::error::{Result, WinneError};
use crate::harness::{bracket_shape, AgentType, TrainMode, TrainingBudget};
use crate::winne::WinneConfig;

/// Environment variable naming the directory under which run directories
/// are created when the config has no `output` key.
pub const OUTPUT_ROOT_VAR: &str = "WINNE_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    #[default]
    Benchmark,
    Prediction,
    Adaptation,
    Retention,
    Ablation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::Prediction => "prediction",
            ExperimentKind::Adaptation => "adaptation",
            ExperimentKind::Retention => "retention",
            ExperimentKind::Ablation => "ablation",
        }
    }
}

/// Settings of the `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub algorithm: Algorithm,
    /// `ofvn` trains against the greedy baseline, `ofsp` by self-play.
    pub mode: TrainMode,
    /// Evaluation games against each naive agent after training.
    pub eval_games: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            mode: TrainMode::Ofvn,
            eval_games: 200,
        }
    }
}

/// Optional changes to the composite agent's per-environment preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WinneOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_best: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csp_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csp_steps_per_observation: Option<usize>,
}

impl WinneOverrides {
    pub fn apply(&self, mut c: WinneConfig) -> WinneConfig {
        if let Some(n) = self.n_best {
            c.n_best = n;
        }
        if let Some(w) = self.aux_weight {
            c.aux_weight = w;
        }
        if let Some(lr) = self.csp_lr {
            c.csp.lr = lr;
        }
        if let Some(s) = self.csp_steps_per_observation {
            c.csp.steps_per_observation = s;
        }
        c
    }
}

fn default_runs() -> u64 {
    10
}
fn default_tournaments() -> u64 {
    10
}
fn default_roster_size() -> usize {
    32
}
fn default_roster() -> Vec<AgentType> {
    AgentType::learners()
}
fn default_opponents() -> Vec<AgentType> {
    vec![AgentType::NaiveGreedy, AgentType::NaiveRandom]
}
fn default_games() -> u64 {
    10
}
fn default_ablation_games() -> u64 {
    100
}
fn default_ablation_opponent() -> AgentType {
    AgentType::NaiveGreedy
}
fn default_cycles() -> usize {
    10
}
fn default_block() -> u64 {
    10
}
fn default_gradcheck_cases() -> usize {
    50
}

/// Fully resolved description of one run. Serialised next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    #[serde(default)]
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Root directory for run directories; falls back to
    /// [`OUTPUT_ROOT_VAR`] and then `runs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Independent repetitions of the benchmark and adaptation series.
    #[serde(default = "default_runs")]
    pub runs: u64,
    /// Consecutive tournaments per run.
    #[serde(default = "default_tournaments")]
    pub tournaments: u64,
    #[serde(default = "default_roster_size")]
    pub roster_size: usize,
    /// Entrants before the naive fill.
    #[serde(default = "default_roster")]
    pub roster: Vec<AgentType>,
    /// Opponent types of the prediction and retention experiments.
    #[serde(default = "default_opponents")]
    pub opponents: Vec<AgentType>,
    /// Prediction games per opponent type.
    #[serde(default = "default_games")]
    pub games: u64,
    #[serde(default = "default_ablation_games")]
    pub ablation_games: u64,
    #[serde(default = "default_ablation_opponent")]
    pub ablation_opponent: AgentType,
    /// Retention cycles.
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    /// Retention games per opponent type and cycle.
    #[serde(default = "default_block")]
    pub block: u64,
    #[serde(default)]
    pub training: TrainingBudget,
    #[serde(default)]
    pub winne: WinneOverrides,
    #[serde(default)]
    pub train: TrainSection,
    /// Directory the `train` command writes its checkpoint to; defaults to
    /// `checkpoint` inside the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Write a transcript of every tournament game.
    #[serde(default)]
    pub record_transcripts: bool,
    #[serde(default = "default_gradcheck_cases")]
    pub gradcheck_cases: usize,
}

impl RunConfig {
    /// Parses a TOML document without overrides.
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| WinneError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path` (if any), applies `overrides` in order and parses the
    /// result.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| WinneError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| WinneError::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_dotted(&mut doc, key, value.clone())?;
        }
        // Re-rendering the merged table lets the parser point at the
        // offending line in its messages.
        let text = toml::to_string(&doc).map_err(|e| WinneError::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(WinneError::Config(format!("`{key}`: {msg}")));
        if self.runs == 0 {
            return bad("runs", "must be at least 1".into());
        }
        if self.tournaments == 0 {
            return bad("tournaments", "must be at least 1".into());
        }
        if let Err(e) = bracket_shape(self.env, self.roster_size) {
            return bad("roster_size", e.to_string());
        }
        if self.roster.len() > self.roster_size {
            return bad(
                "roster",
                format!(
                    "{} entrants exceed roster_size {}",
                    self.roster.len(),
                    self.roster_size
                ),
            );
        }
        if self.opponents.is_empty() {
            return bad("opponents", "needs at least one opponent type".into());
        }
        if self.cycles == 0 {
            return bad("cycles", "must be at least 1".into());
        }
        if self.games == 0 || self.block == 0 || self.ablation_games == 0 {
            let key = if self.games == 0 {
                "games"
            } else if self.block == 0 {
                "block"
            } else {
                "ablation_games"
            };
            return bad(key, "must be at least 1".into());
        }
        if !matches!(self.train.mode, TrainMode::Ofvn | TrainMode::Ofsp) {
            return bad(
                "train.mode",
                "only the offline modes `ofvn` and `ofsp` can be trained ahead of play".into(),
            );
        }
        Ok(())
    }

    /// Root directory for run directories.
    pub fn output_root(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Composite agent configuration: preset for the environment plus the
    /// overrides.
    pub fn winne_config(&self) -> WinneConfig {
        self.winne.apply(WinneConfig::preset(self.env))
    }
}

/// Sets `key` (dotted for nested tables) in `doc`, creating intermediate
/// tables as needed.
fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| WinneError::Config(format!("empty key in `{key}`")))?;
    let mut table = doc;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            WinneError::Config(format!("`{p}` is not a table, cannot set `{key}`"))
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses a `key=value` override. The value is read as a TOML value and
/// taken as a bare string when it is not one, so `env=card` works unquoted.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s.split_once('=').ok_or_else(|| {
        WinneError::Config(format!("override `{s}` is not of the form key=value"))
    })?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c =
            RunConfig::from_toml("env = \"duel\"\nexperiment = \"benchmark\"\nseed = 1\n").unwrap();
        assert_eq!(c.env, EnvKind::Duel);
        assert_eq!(c.runs, 10);
        assert_eq!(c.tournaments, 10);
        assert_eq!(c.roster.len(), 8);
        assert_eq!(c.roster_size, 32);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_toml("env = \"duel\"\nseed = 1\ngama = 0.9\n").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("gama"), "{e}");
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let e = RunConfig::from_toml("env = \"duel\"\nseed = 1\n[training]\nvs_naive = 3\n")
            .unwrap_err();
        assert!(e.to_string().contains("vs_naive"), "{e}");
    }

    #[test]
    fn missing_and_mistyped_keys_are_named() {
        let e = RunConfig::from_toml("env = \"duel\"\n").unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
        let e = RunConfig::from_toml("env = \"duel\"\nseed = \"one\"\n").unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn overrides_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "env = \"duel\"\nseed = 1\n[training]\nvs_naive_games = 5\n",
        )
        .unwrap();
        let o = vec![
            parse_override("seed=7").unwrap(),
            parse_override("training.self_play_games=12").unwrap(),
            parse_override("env=card").unwrap(),
        ];
        let c = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.env, EnvKind::Card);
        assert_eq!(c.training.vs_naive_games, 5);
        assert_eq!(c.training.self_play_games, 12);
    }

    #[test]
    fn validation_names_the_key() {
        let e = RunConfig::from_toml("env = \"card\"\nseed = 1\nroster_size = 24\n").unwrap_err();
        assert!(e.to_string().contains("roster_size"), "{e}");
        let e = RunConfig::from_toml("env = \"duel\"\nseed = 1\nopponents = [\"naive-wizard\"]\n")
            .unwrap_err();
        assert!(e.to_string().contains("naive-wizard"), "{e}");
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let c =
            RunConfig::from_toml("env = \"duel\"\nseed = 3\n[winne]\naux_weight = 0.5\n").unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.winne_config().aux_weight, 0.5);
    }
}
