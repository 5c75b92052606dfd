use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::card::{self, CardState};
use crate::duel::{self, DuelState};
use crate::error::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Duel,
    Card,
}

impl EnvKind {
    pub fn players(self) -> usize {
        match self {
            EnvKind::Duel => 2,
            EnvKind::Card => card::PLAYERS,
        }
    }

    pub fn action_count(self) -> usize {
        match self {
            EnvKind::Duel => duel::ACTIONS,
            EnvKind::Card => card::ACTIONS,
        }
    }

    pub fn full_len(self) -> usize {
        match self {
            EnvKind::Duel => duel::FULL_LEN,
            EnvKind::Card => card::FULL_LEN,
        }
    }

    pub fn public_len(self) -> usize {
        match self {
            EnvKind::Duel => duel::PUBLIC_LEN,
            EnvKind::Card => card::PUBLIC_LEN,
        }
    }

    /// Legal actions of the modeled player as far as a public encoding
    /// reveals them.
    pub fn public_mask(self, public: &[f64]) -> Vec<bool> {
        match self {
            EnvKind::Duel => duel::public_mask(public),
            EnvKind::Card => card::public_mask(public),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Duel => "duel",
            EnvKind::Card => "card",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "duel" => Ok(EnvKind::Duel),
            "card" => Ok(EnvKind::Card),
            other => Err(format!(
                "unknown environment `{other}` (expected duel or card)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GameState {
    Duel(DuelState),
    Card(CardState),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    /// Hit points removed by each player's move this step (duel).
    pub damage: Vec<u32>,
    /// Cards laid down by each player this step (card game).
    pub discarded: Vec<u8>,
    /// Finishing position reached this step, 1-based (card game).
    pub finish_position: Vec<Option<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: GameState,
    pub rewards: Vec<f64>,
    pub terminal: bool,
    pub info: StepInfo,
}

impl GameState {
    pub fn reset(kind: EnvKind, seed: u64) -> Self {
        match kind {
            EnvKind::Duel => GameState::Duel(DuelState::reset(seed)),
            EnvKind::Card => GameState::Card(CardState::reset(seed)),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            GameState::Duel(_) => EnvKind::Duel,
            GameState::Card(_) => EnvKind::Card,
        }
    }

    pub fn players(&self) -> usize {
        self.kind().players()
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            GameState::Duel(s) => s.is_terminal(),
            GameState::Card(s) => s.terminal,
        }
    }

    pub fn turn(&self) -> u32 {
        match self {
            GameState::Duel(s) => s.turn,
            GameState::Card(s) => s.turn,
        }
    }

    /// Identifier of the current match; a duel is a single match.
    pub fn match_index(&self) -> u32 {
        match self {
            GameState::Duel(_) => 0,
            GameState::Card(s) => s.match_index,
        }
    }

    /// Players whose action the next [`Self::step`] expects.
    pub fn to_act(&self) -> Vec<usize> {
        match self {
            GameState::Duel(s) => s.to_act(),
            GameState::Card(s) => s.to_act(),
        }
    }

    pub fn legal_actions(&self, player: usize) -> Result<Vec<bool>, EnvError> {
        match self {
            GameState::Duel(s) => s.legal_actions(player),
            GameState::Card(s) => s.legal_actions(player),
        }
    }

    /// Advances the game by one step. `actions` holds one `(player, action)`
    /// pair for every player in [`Self::to_act`].
    pub fn step(&self, actions: &[(usize, usize)]) -> Result<StepOutcome, EnvError> {
        match self {
            GameState::Duel(s) => {
                let out = s.step(actions)?;
                let terminal = out.state.is_terminal();
                Ok(StepOutcome {
                    state: GameState::Duel(out.state),
                    rewards: out.rewards.to_vec(),
                    terminal,
                    info: StepInfo {
                        damage: out.damage.to_vec(),
                        discarded: vec![0; 2],
                        finish_position: vec![None; 2],
                    },
                })
            }
            GameState::Card(s) => {
                let expected = s.to_act();
                let got: Vec<usize> = actions.iter().map(|a| a.0).collect();
                if got != expected {
                    if s.terminal {
                        return Err(EnvError::Terminal);
                    }
                    return Err(EnvError::ActionSet { expected, got });
                }
                let (p, a) = actions[0];
                let out = s.step(p, a)?;
                let mut discarded = vec![0; card::PLAYERS];
                discarded[p] = out.discarded;
                let mut finish_position = vec![None; card::PLAYERS];
                finish_position[p] = out.finish_position;
                let terminal = out.state.terminal;
                Ok(StepOutcome {
                    state: GameState::Card(out.state),
                    rewards: out.rewards.to_vec(),
                    terminal,
                    info: StepInfo {
                        damage: vec![0; card::PLAYERS],
                        discarded,
                        finish_position,
                    },
                })
            }
        }
    }

    /// Pure forward model: the state after `player` takes `action`, with no
    /// other player acting. In the card game this is exactly the state
    /// [`Self::step`] produces.
    pub fn project(&self, player: usize, action: usize) -> Result<GameState, EnvError> {
        match self {
            GameState::Duel(s) => s.project(player, action).map(GameState::Duel),
            GameState::Card(s) => s.step(player, action).map(|o| GameState::Card(o.state)),
        }
    }

    pub fn encode_full(&self, player: usize) -> Vec<f64> {
        match self {
            GameState::Duel(s) => s.encode_full(player),
            GameState::Card(s) => s.encode_full(player),
        }
    }

    /// Public view of `modeled` as seen by `observer`; carries no private
    /// information of either.
    pub fn encode_public(&self, observer: usize, modeled: usize) -> Vec<f64> {
        debug_assert_ne!(observer, modeled);
        match self {
            GameState::Duel(s) => s.encode_public(observer, modeled),
            GameState::Card(s) => s.encode_public(),
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Players from best to worst once the game is over: the duel winner
    /// first, card players by game score then first places then seat.
    pub fn ranking(&self) -> Vec<usize> {
        match self {
            GameState::Duel(s) => match s.winner {
                Some(w) => vec![w, 1 - w],
                None => vec![0, 1],
            },
            GameState::Card(s) => s.standings(),
        }
    }

    pub fn as_duel(&self) -> Option<&DuelState> {
        match self {
            GameState::Duel(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_card(&self) -> Option<&CardState> {
        match self {
            GameState::Card(s) => Some(s),
            _ => None,
        }
    }
}
