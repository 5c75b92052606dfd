//! The game loop shared by training, tournaments and experiments.

use envs::{EnvKind, GameState, Transcript};
use neurocore::{stream, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Diagnostics, ObservedTurn, TurnContext};
use crate::error::Result;

/// Default step limits. Unlimited play always terminates in both games,
/// the caps only guard against pathological learned policies.
pub const DUEL_TURN_CAP: u32 = 500;
pub const CARD_TURN_CAP: u32 = 20_000;

pub fn default_turn_cap(kind: EnvKind) -> u32 {
    match kind {
        EnvKind::Duel => DUEL_TURN_CAP,
        EnvKind::Card => CARD_TURN_CAP,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayOptions {
    pub turn_cap: u32,
    pub record: bool,
}

impl PlayOptions {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            turn_cap: default_turn_cap(kind),
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub turn: u32,
    pub seat: usize,
    pub action: usize,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone)]
pub struct GameResult {
    /// Seats from best to worst.
    pub ranking: Vec<usize>,
    /// Sum of environment rewards per seat.
    pub returns: Vec<f64>,
    pub turns: u32,
    pub truncated: bool,
    pub final_state: GameState,
    pub transcript: Option<Transcript>,
    pub decisions: Vec<DecisionLog>,
}

impl GameResult {
    pub fn winner(&self) -> usize {
        self.ranking[0]
    }
}

/// Ranking of a game stopped at the turn cap. Duel seats are ordered by
/// remaining team hit points with a coin on ties; card seats use the
/// regular standings.
pub fn truncated_ranking(state: &GameState, rng: &mut StreamRng) -> Vec<usize> {
    match state {
        GameState::Duel(d) => {
            let hp = |p: usize| d.teams[p].iter().map(|c| c.hp).sum::<u32>();
            let (a, b) = (hp(0), hp(1));
            let first = if a > b || (a == b && rng.gen::<bool>()) {
                0
            } else {
                1
            };
            vec![first, 1 - first]
        }
        GameState::Card(_) => state.ranking(),
    }
}

/// Plays one game from `GameState::reset(kind, env_seed)`. `agents[p]`
/// occupies seat `p` under the entrant id `seats[p]`. Agent randomness is
/// drawn from per-seat streams of `agent_seed`.
pub fn play_game(
    kind: EnvKind,
    env_seed: u64,
    agent_seed: u64,
    agents: &mut [&mut dyn Agent],
    seats: &[String],
    opts: PlayOptions,
) -> Result<GameResult> {
    let players = kind.players();
    assert_eq!(agents.len(), players, "one agent per seat");
    assert_eq!(seats.len(), players, "one entrant id per seat");
    let mut rngs: Vec<StreamRng> = (0..players)
        .map(|p| stream(agent_seed, &[p as u64]))
        .collect();
    let mut state = GameState::reset(kind, env_seed);
    let mut transcript = opts.record.then(|| Transcript::new(kind, env_seed));
    let mut returns = vec![0.0; players];
    let mut decisions = Vec::new();
    let mut steps = 0u32;

    while !state.is_terminal() && steps < opts.turn_cap {
        let acting = state.to_act();
        let mut actions = Vec::with_capacity(acting.len());
        for &p in &acting {
            let ctx = TurnContext {
                state: &state,
                player: p,
                seats,
            };
            let d = agents[p].act(&ctx, &mut rngs[p])?;
            decisions.push(DecisionLog {
                turn: state.turn(),
                seat: p,
                action: d.action,
                diagnostics: d.diagnostics,
            });
            actions.push((p, d.action));
        }
        for &(p, a) in &actions {
            for q in (0..players).filter(|&q| q != p) {
                let seen = ObservedTurn {
                    state: &state,
                    observer: q,
                    player: p,
                    action: a,
                    opponent_id: &seats[p],
                };
                agents[q].observe(&seen, &mut rngs[q])?;
            }
        }
        let out = state.step(&actions)?;
        for p in 0..players {
            returns[p] += out.rewards[p];
            agents[p].reward(out.rewards[p]);
        }
        if let Some(t) = transcript.as_mut() {
            t.record(state.turn(), &actions, &out.rewards, &out.state);
        }
        state = out.state;
        steps += 1;
    }

    let truncated = !state.is_terminal();
    let ranking = if truncated {
        truncated_ranking(&state, &mut stream(agent_seed, &[u64::MAX]))
    } else {
        state.ranking()
    };
    for (p, agent) in agents.iter_mut().enumerate() {
        agent.end_game(&mut rngs[p])?;
    }
    Ok(GameResult {
        ranking,
        returns,
        turns: steps,
        truncated,
        final_state: state,
        transcript,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{NaiveGreedy, NaiveRandom};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn recorded_games_replay() {
        for kind in [EnvKind::Duel, EnvKind::Card] {
            let mut a: Vec<Box<dyn Agent>> = (0..kind.players())
                .map(|i| {
                    if i % 2 == 0 {
                        Box::new(NaiveGreedy) as Box<dyn Agent>
                    } else {
                        Box::new(NaiveRandom)
                    }
                })
                .collect();
            let mut refs: Vec<&mut dyn Agent> =
                a.iter_mut().map(|b| &mut **b as &mut dyn Agent).collect();
            let opts = PlayOptions {
                record: true,
                ..PlayOptions::new(kind)
            };
            let r = play_game(kind, 11, 12, &mut refs, &ids(kind.players()), opts).unwrap();
            assert!(!r.truncated);
            let t = r.transcript.unwrap();
            assert_eq!(envs::verify(&t).unwrap() as u32, r.turns);
        }
    }

    #[test]
    fn truncation_applies_the_cap() {
        let mut a = NaiveRandom;
        let mut b = NaiveRandom;
        let mut refs: Vec<&mut dyn Agent> = vec![&mut a, &mut b];
        let opts = PlayOptions {
            turn_cap: 1,
            record: false,
        };
        let r = play_game(EnvKind::Duel, 3, 4, &mut refs, &ids(2), opts).unwrap();
        assert!(r.truncated);
        assert_eq!(r.turns, 1);
        let mut sorted = r.ranking.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1]);
    }
}
