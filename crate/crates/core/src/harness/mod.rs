//! Tournaments, the benchmark, and the prediction, adaptation, retention
//! and ablation experiments.
//!
//! Every experiment returns [`MetricRecord`]s. They are written as CSV with
//! the fixed header `run,tournament,phase,game,agent,opponents,metric,value`
//! and summarised with [`aggregate`].

pub mod experiments;
pub mod roster;
pub mod tournament;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WinneError};
use crate::persist::write_atomic;

pub use experiments::{
    directory_digest, retention_schedule, run_ablation, run_adaptation, run_prediction,
    run_retention, AblationOutcome, RetentionOutcome,
};
pub use roster::{AgentType, Entrant, Roster, TrainMode, TrainingBudget, Zoo};
pub use tournament::{
    bracket_shape, records_of_type, run_benchmark, run_tournament, run_tournament_recorded,
    BenchmarkOutcome, GameRecord, TournamentOutcome, BENCHMARK_KEYS,
};

pub const CSV_HEADER: [&str; 8] = [
    "run",
    "tournament",
    "phase",
    "game",
    "agent",
    "opponents",
    "metric",
    "value",
];

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run: u64,
    pub tournament: u64,
    pub phase: u64,
    pub game: u64,
    pub agent: String,
    /// Opponent ids separated by `;`.
    pub opponents: String,
    pub metric: String,
    pub value: f64,
}

/// Serialises records with the fixed header. Values use Rust's shortest
/// round-trip float formatting, so identical runs give identical bytes.
pub fn records_to_csv(records: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| WinneError::Io(e.into_error()))
}

pub fn write_records(path: &Path, records: &[MetricRecord]) -> Result<()> {
    write_atomic(path, &records_to_csv(records)?)
}

pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Column a summary can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Run,
    Tournament,
    Phase,
    Game,
    Agent,
    /// The agent id without its `#k` instance suffix.
    AgentType,
    Opponents,
    Metric,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyPart {
    Num(u64),
    Text(String),
}

impl std::fmt::Display for KeyPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeyPart::Num(n) => write!(f, "{n}"),
            KeyPart::Text(s) => f.write_str(s),
        }
    }
}

/// Strips the `#k` instance suffix from an entrant id.
pub fn agent_type_of(id: &str) -> &str {
    id.split_once('#').map_or(id, |(t, _)| t)
}

fn key_part(r: &MetricRecord, k: GroupKey) -> KeyPart {
    match k {
        GroupKey::Run => KeyPart::Num(r.run),
        GroupKey::Tournament => KeyPart::Num(r.tournament),
        GroupKey::Phase => KeyPart::Num(r.phase),
        GroupKey::Game => KeyPart::Num(r.game),
        GroupKey::Agent => KeyPart::Text(r.agent.clone()),
        GroupKey::AgentType => KeyPart::Text(agent_type_of(&r.agent).to_string()),
        GroupKey::Opponents => KeyPart::Text(r.opponents.clone()),
        GroupKey::Metric => KeyPart::Text(r.metric.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: Vec<KeyPart>,
    pub mean: f64,
    pub count: usize,
    /// Population standard deviation.
    pub sd: f64,
}

/// Mean, count and standard deviation per group, ordered by key. An empty
/// `keys` slice yields one global row.
pub fn aggregate(records: &[MetricRecord], keys: &[GroupKey]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(WinneError::EmptyTable);
    }
    let mut groups: BTreeMap<Vec<KeyPart>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = keys.iter().map(|&k| key_part(r, k)).collect();
        groups.entry(key).or_default().push(r.value);
    }
    Ok(groups
        .into_iter()
        .map(|(key, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            SummaryRow {
                key,
                mean,
                count: values.len(),
                sd: var.sqrt(),
            }
        })
        .collect())
}

/// CSV of summary rows with the group columns named by `keys`.
pub fn summary_to_csv(rows: &[SummaryRow], keys: &[GroupKey]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = keys
        .iter()
        .map(|k| {
            serde_json::to_value(k)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        })
        .collect();
    header.extend(["mean", "count", "sd"].map(String::from));
    w.write_record(&header)?;
    for row in rows {
        let mut fields: Vec<String> = row.key.iter().map(|k| k.to_string()).collect();
        fields.extend([
            row.mean.to_string(),
            row.count.to_string(),
            row.sd.to_string(),
        ]);
        w.write_record(&fields)?;
    }
    w.into_inner().map_err(|e| WinneError::Io(e.into_error()))
}
