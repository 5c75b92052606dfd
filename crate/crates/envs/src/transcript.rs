//! Line-delimited JSON match transcripts.
//!
//! The first line is a header `{env, seed, format_version}`; every further
//! line is one event `{turn, player, action_id, reward, state_hash}` where
//! `turn` is the index of the step (starting at 0) and `state_hash` is the
//! hash of the state after that step. In the duel both simultaneous choices
//! of a step share its turn index.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::game::{EnvKind, GameState};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub env: EnvKind,
    pub seed: u64,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub turn: u32,
    pub player: usize,
    pub action_id: usize,
    pub reward: f64,
    pub state_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: Header,
    pub events: Vec<Event>,
}

impl Transcript {
    pub fn new(env: EnvKind, seed: u64) -> Self {
        Self {
            header: Header {
                env,
                seed,
                format_version: TRANSCRIPT_VERSION,
            },
            events: Vec::new(),
        }
    }

    /// Appends the events of one step.
    pub fn record(
        &mut self,
        turn: u32,
        actions: &[(usize, usize)],
        rewards: &[f64],
        after: &GameState,
    ) {
        let hash = after.state_hash();
        for &(player, action_id) in actions {
            self.events.push(Event {
                turn,
                player,
                action_id,
                reward: rewards[player],
                state_hash: hash.clone(),
            });
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.header)?)?;
        for e in &self.events {
            writeln!(w, "{}", serde_json::to_string(e)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, EnvError> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| EnvError::Transcript("empty transcript".into()))?
            .map_err(|e| EnvError::Transcript(e.to_string()))?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| EnvError::Transcript(format!("header: {e}")))?;
        if header.format_version != TRANSCRIPT_VERSION {
            return Err(EnvError::Transcript(format!(
                "unsupported format_version {} (expected {TRANSCRIPT_VERSION})",
                header.format_version
            )));
        }
        let mut events = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| EnvError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Event = serde_json::from_str(&line)
                .map_err(|e| EnvError::Transcript(format!("line {}: {e}", n + 2)))?;
            events.push(e);
        }
        Ok(Self { header, events })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, EnvError> {
        Self::read_from(s.as_bytes())
    }
}

/// Re-simulates a transcript from its header seed and checks every recorded
/// hash. Returns the number of steps replayed.
pub fn verify(t: &Transcript) -> Result<usize, EnvError> {
    let mut state = GameState::reset(t.header.env, t.header.seed);
    let mut i = 0;
    let mut steps = 0;
    while i < t.events.len() {
        let turn = t.events[i].turn;
        let mut j = i;
        while j < t.events.len() && t.events[j].turn == turn {
            j += 1;
        }
        let group = &t.events[i..j];
        let actions: Vec<(usize, usize)> = group.iter().map(|e| (e.player, e.action_id)).collect();
        let out = state.step(&actions).map_err(|e| EnvError::ReplayMismatch {
            turn,
            expected: group[0].state_hash.clone(),
            actual: format!("step failed: {e}"),
        })?;
        let actual = out.state.state_hash();
        for e in group {
            if e.state_hash != actual || e.reward.to_bits() != out.rewards[e.player].to_bits() {
                return Err(EnvError::ReplayMismatch {
                    turn,
                    expected: e.state_hash.clone(),
                    actual,
                });
            }
        }
        state = out.state;
        steps += 1;
        i = j;
    }
    Ok(steps)
}
