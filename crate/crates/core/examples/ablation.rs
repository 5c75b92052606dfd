//! Compares the full composite agent with its global policy alone against
//! the greedy baseline.

use envs::EnvKind;
use winne::harness::{run_ablation, AgentType, TrainingBudget, Zoo};

fn main() -> winne::Result<()> {
    let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::default(), 2);
    let out = run_ablation(&mut zoo, AgentType::NaiveGreedy, 50, 2)?;
    println!("full {:.2}, global only {:.2}", out.full, out.global_only);
    Ok(())
}
