//! Trains a PPO duelist against the greedy baseline and measures it
//! against the random one.
//!
//! `cargo run --release --example train_ppo -- 2000`

use envs::EnvKind;
use winne::agents::training::{evaluate, train_offline, Algorithm, Learner, OfflineMode};
use winne::agents::{HyperPreset, NaiveRandom};

fn main() -> winne::Result<()> {
    let games: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let fresh = Learner::fresh_with(Algorithm::Ppo, EnvKind::Duel, HyperPreset::Stable, 4);
    let before = evaluate(&fresh, &NaiveRandom, EnvKind::Duel, 200, 40)?;
    let (trained, _) = train_offline(fresh, EnvKind::Duel, OfflineMode::VsNaive, games, 4)?;
    let after = evaluate(&trained, &NaiveRandom, EnvKind::Duel, 200, 40)?;
    println!("win rate vs random: {before:.3} untrained, {after:.3} after {games} games");
    Ok(())
}
