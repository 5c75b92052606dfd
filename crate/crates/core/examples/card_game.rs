//! Plays one four-seat card game and prints the final standings.

use envs::EnvKind;
use winne::agents::{Agent, NaiveGreedy, NaiveRandom};
use winne::play::{play_game, PlayOptions};

fn main() -> winne::Result<()> {
    let kind = EnvKind::Card;
    let seats: Vec<String> = ["greedy-a", "random-b", "greedy-c", "random-d"]
        .map(String::from)
        .to_vec();
    let (mut a, mut b, mut c, mut d) = (NaiveGreedy, NaiveRandom, NaiveGreedy, NaiveRandom);
    let mut agents: Vec<&mut dyn Agent> = vec![&mut a, &mut b, &mut c, &mut d];
    let result = play_game(kind, 7, 8, &mut agents, &seats, PlayOptions::new(kind))?;
    println!("{} turns, truncated: {}", result.turns, result.truncated);
    for (place, &seat) in result.ranking.iter().enumerate() {
        println!(
            "{}. {:<9} return {:+.1}",
            place + 1,
            seats[seat],
            result.returns[seat]
        );
    }
    Ok(())
}
