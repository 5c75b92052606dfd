//! Baseline agents and their offline training modes.
//!
//! Every player implements [`Agent`]. The harness calls [`Agent::act`] when
//! the agent's seat is to move, hands back the environment reward with
//! [`Agent::reward`], reports other players' moves through
//! [`Agent::observe`] and closes each game with [`Agent::end_game`].

pub mod dql;
pub mod naive;
pub mod ppo;
pub mod replay;
pub mod spec;
pub mod training;

use envs::GameState;
use neurocore::{masked_argmax, masked_softmax, NeuroError, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub use dql::DqlAgent;
pub use naive::{NaiveGreedy, NaiveRandom};
pub use ppo::PpoAgent;
pub use spec::{DqlSpec, HyperPreset, PpoSpec};
pub use training::{train_offline, OfflineMode, OpponentPool, TrainingReport};

/// What an agent sees when it is asked to move.
#[derive(Debug, Clone, Copy)]
pub struct TurnContext<'a> {
    pub state: &'a GameState,
    pub player: usize,
    /// Entrant id occupying every seat of the game.
    pub seats: &'a [String],
}

impl TurnContext<'_> {
    pub fn observation(&self) -> Vec<f64> {
        self.state.encode_full(self.player)
    }

    pub fn mask(&self) -> Result<Vec<bool>> {
        Ok(self.state.legal_actions(self.player)?)
    }
}

/// Another seat's move, reported to every other agent before the step is
/// applied.
#[derive(Debug, Clone, Copy)]
pub struct ObservedTurn<'a> {
    /// State in which the move was chosen.
    pub state: &'a GameState,
    /// Seat of the observing agent.
    pub observer: usize,
    pub player: usize,
    pub action: usize,
    pub opponent_id: &'a str,
}

/// Extra information from the composite agent's act pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub initial_action: usize,
    pub opponent_id: String,
    pub predicted_action: usize,
    /// Predicted probability of the opponent's most likely response after
    /// the executed action.
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub diagnostics: Option<Diagnostics>,
}

impl Decision {
    pub fn plain(action: usize) -> Self {
        Self {
            action,
            diagnostics: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Greedy,
    Sample,
}

/// Draws from (or takes the argmax of) the masked softmax of `logits`.
/// Returns the action and its log-probability.
pub fn select_action(
    logits: &[f64],
    mask: &[bool],
    mode: SelectMode,
    rng: &mut StreamRng,
) -> Result<(usize, f64)> {
    let probs = masked_softmax(logits, mask)?;
    let action = match mode {
        SelectMode::Greedy => masked_argmax(&probs, mask).ok_or(NeuroError::EmptySupport)?,
        SelectMode::Sample => sample_index(&probs, rng),
    };
    Ok((action, probs[action].ln()))
}

/// Inverse-CDF draw from a probability vector. Zero entries are never
/// returned.
pub fn sample_index(probs: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Hex SHA-256 over the bit patterns of a flat parameter vector.
pub fn digest_values(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub trait Agent: Send {
    /// Short type label used in reports, e.g. `ppo` or `naive-greedy`.
    fn label(&self) -> String;

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision>;

    /// Environment reward earned since the agent's previous decision.
    fn reward(&mut self, _r: f64) {}

    fn observe(&mut self, _turn: &ObservedTurn, _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }

    fn end_game(&mut self, _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }

    fn is_learning(&self) -> bool {
        false
    }

    fn set_learning(&mut self, _on: bool) {}

    /// Digest of every trainable parameter; constant for non-learning
    /// agents.
    fn param_digest(&self) -> String;

    fn boxed_clone(&self) -> Box<dyn Agent>;
}

impl Clone for Box<dyn Agent> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}
