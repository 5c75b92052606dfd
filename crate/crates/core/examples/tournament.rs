//! Runs a small benchmark of knockout tournaments and prints the mean
//! victories per entrant type.

use envs::EnvKind;
use winne::harness::{run_benchmark, AgentType, Roster, TrainingBudget, Zoo};

fn main() -> winne::Result<()> {
    let kind = EnvKind::Duel;
    let budget = TrainingBudget {
        vs_naive_games: 200,
        self_play_generations: 1,
        self_play_games: 50,
        ..TrainingBudget::default()
    };
    let mut zoo = Zoo::new(kind, budget, 3);
    let types: Vec<AgentType> = ["naive-random", "naive-greedy", "ppo-ofvn", "dql-onsc"]
        .iter()
        .map(|s| s.parse())
        .collect::<winne::Result<_>>()?;
    let template = Roster::build(&mut zoo, &types, 16)?;
    let out = run_benchmark(&template, kind, 5, 4, 11)?;
    for t in &types {
        let per: Vec<String> = (0..5)
            .map(|i| {
                format!(
                    "{:.2}",
                    out.mean_victories(i, &t.to_string()).unwrap_or(0.0)
                )
            })
            .collect();
        println!("{:<13} {}", t.to_string(), per.join(" "));
    }
    Ok(())
}
