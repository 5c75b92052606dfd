//! Tracks how well the strategy predictor anticipates two fixed opponents
//! over ten games of the duel.

use envs::EnvKind;
use winne::harness::{run_prediction, AgentType, TrainingBudget, Zoo};

fn main() -> winne::Result<()> {
    let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::none(), 1);
    zoo.winne.csp.steps_per_observation = 128;
    let records = run_prediction(
        &mut zoo,
        &[AgentType::NaiveGreedy, AgentType::NaiveRandom],
        10,
        1,
    )?;
    println!(
        "{:<14} {:>4} {:>9} {:>7}",
        "opponent", "game", "accuracy", "chance"
    );
    for acc in records.iter().filter(|r| r.metric == "csp_accuracy") {
        let chance = records
            .iter()
            .find(|r| r.metric == "chance" && r.game == acc.game && r.opponents == acc.opponents)
            .map_or(0.0, |r| r.value);
        println!(
            "{:<14} {:>4} {:>9.3} {:>7.3}",
            acc.opponents,
            acc.game + 1,
            acc.value,
            chance
        );
    }
    Ok(())
}
