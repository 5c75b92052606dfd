//! Individualized competitive agents for two turn-based games.
//!
//! A composite agent pairs a general-purpose global policy with one
//! contrastive strategy predictor and one local policy per opponent it has
//! met. The crate holds the agents ([`agents`], [`csp`], [`winne`]), the
//! shared game loop ([`play`]), tournaments and experiments ([`harness`]),
//! run configuration ([`config`]) and the command-line driver ([`cli`]).
//! Numerics live in `neurocore` and the games in `envs`.

pub mod agents;
pub mod cli;
pub mod config;
pub mod csp;
pub mod error;
pub mod harness;
pub mod persist;
pub mod play;
pub mod winne;

pub use error::{Result, WinneError};
