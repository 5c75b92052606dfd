//! Plays recorded duels between the greedy and random baselines, then
//! replays each transcript against the engine.

use envs::{verify, EnvKind};
use winne::agents::{Agent, NaiveGreedy, NaiveRandom};
use winne::play::{play_game, PlayOptions};

fn main() -> winne::Result<()> {
    let kind = EnvKind::Duel;
    let seats = vec!["greedy".to_string(), "random".to_string()];
    let opts = PlayOptions {
        record: true,
        ..PlayOptions::new(kind)
    };
    let mut greedy_wins = 0;
    for game in 0..20u64 {
        let (mut a, mut b) = (NaiveGreedy, NaiveRandom);
        let mut agents: Vec<&mut dyn Agent> = vec![&mut a, &mut b];
        let result = play_game(kind, game, 1000 + game, &mut agents, &seats, opts)?;
        let turns = verify(result.transcript.as_ref().expect("recorded"))?;
        greedy_wins += (result.winner() == 0) as u32;
        println!(
            "game {game:>2}: {} wins after {} turns ({turns} replayed)",
            seats[result.winner()],
            result.turns
        );
    }
    println!("greedy won {greedy_wins} of 20");
    Ok(())
}
