//! Deterministic, seedable competitive game engines.
//!
//! Two games share one interface, [`GameState`]:
//!
//! * [`duel`]: two players, three elemental creatures each, six actions,
//!   a 22-value full and a 10-value public observation.
//! * [`card`]: four players shedding a 68-card deck, 200 actions, a 28-value
//!   full and an 11-value public observation, matches scored 3/2/1/0 and
//!   games played to 15 points.
//!
//! States are immutable values: [`GameState::step`] and
//! [`GameState::project`] return new states and never modify their input.
//! All randomness (team generation, shuffles, speed ties) comes from a
//! generator carried inside the state, so a seed fixes the whole game given
//! the actions. Games can be recorded as JSONL [`transcript`]s and replayed.
//!
//! ```
//! use envs::{EnvKind, GameState};
//!
//! let s = GameState::reset(EnvKind::Card, 7);
//! let p = s.to_act()[0];
//! let mask = s.legal_actions(p).unwrap();
//! let a = mask.iter().position(|&m| m).unwrap();
//! let next = s.step(&[(p, a)]).unwrap().state;
//! assert_eq!(next.encode_full(p).len(), 28);
//! ```

pub mod card;
pub mod duel;
pub mod error;
pub mod game;
pub mod transcript;

pub use error::EnvError;
pub use game::{EnvKind, GameState, StepInfo, StepOutcome};
pub use transcript::{verify, Transcript};
