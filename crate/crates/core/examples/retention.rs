//! Cycles the composite agent through two opponent types, storing it
//! in a bundle between cycles, and checks that every save reloads exactly.

use envs::EnvKind;
use winne::harness::{run_retention, AgentType, TrainingBudget, Zoo};

fn main() -> winne::Result<()> {
    let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::none(), 5);
    let types = [AgentType::NaiveRandom, AgentType::NaiveGreedy];
    let bundle = tempfile::tempdir()?;
    let out = run_retention(&mut zoo, &types, 4, 5, bundle.path(), 5)?;
    for cycle in 0..4 {
        let row: Vec<String> = types
            .iter()
            .map(|t| format!("{t} {:.2}", out.mean(cycle, &t.to_string()).unwrap_or(0.0)))
            .collect();
        println!("cycle {}: {}", cycle + 1, row.join(", "));
    }
    println!(
        "bit-exact round trips: {}",
        out.round_trips.iter().all(|&ok| ok)
    );
    Ok(())
}
