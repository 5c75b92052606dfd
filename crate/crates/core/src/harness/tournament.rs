//! Elimination brackets and the repeated-tournament benchmark.
//!
//! Duel brackets pair entrants and advance the winner. Card brackets seat
//! four entrants per group; the two best by game score advance, with ties
//! broken by first places and then a seeded coin. Entrants are shuffled
//! into the bracket with the tournament seed.

use envs::{EnvKind, Transcript};
use neurocore::rng::derive_seed;
use neurocore::stream;
use rand::seq::SliceRandom;
use rand::Rng;

use super::roster::Roster;
use super::{agent_type_of, aggregate, GroupKey, MetricRecord, SummaryRow};
use crate::error::{Result, WinneError};
use crate::play::{play_game, GameResult, PlayOptions};

/// Groups played in each phase for `entrants` players.
pub fn bracket_shape(kind: EnvKind, entrants: usize) -> Result<Vec<usize>> {
    let group = kind.players();
    let bad = || {
        WinneError::Config(format!(
            "{entrants} entrants cannot be reduced to one {} group",
            kind.name()
        ))
    };
    if entrants < group || !entrants.is_multiple_of(group) || !(entrants / group).is_power_of_two() {
        return Err(bad());
    }
    let mut shape = Vec::new();
    let mut alive = entrants;
    loop {
        shape.push(alive / group);
        if alive == group {
            return Ok(shape);
        }
        alive /= 2;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub phase: usize,
    /// Index of the game within the tournament.
    pub game: usize,
    /// Roster position of each seat.
    pub seats: Vec<usize>,
    /// Roster positions from best to worst, as used for advancement.
    pub order: Vec<usize>,
    pub turns: u32,
    pub truncated: bool,
}

impl GameRecord {
    pub fn winner(&self) -> usize {
        self.order[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentOutcome {
    /// Roster position of the champion.
    pub winner: usize,
    pub phases: usize,
    pub games: Vec<GameRecord>,
}

impl TournamentOutcome {
    /// Games won by each roster position.
    pub fn victories(&self, entrants: usize) -> Vec<u64> {
        let mut v = vec![0; entrants];
        for g in &self.games {
            v[g.winner()] += 1;
        }
        v
    }

    /// One `victory` record per game, credited to the winner with every
    /// other seat listed as opponents.
    pub fn records(&self, roster: &Roster, run: u64, tournament: u64) -> Vec<MetricRecord> {
        self.games
            .iter()
            .map(|g| {
                let w = g.winner();
                let opponents: Vec<&str> = g
                    .seats
                    .iter()
                    .filter(|&&s| s != w)
                    .map(|&s| roster.entrants[s].id.as_str())
                    .collect();
                MetricRecord {
                    run,
                    tournament,
                    phase: g.phase as u64,
                    game: g.game as u64,
                    agent: roster.entrants[w].id.clone(),
                    opponents: opponents.join(";"),
                    metric: "victory".into(),
                    value: 1.0,
                }
            })
            .collect()
    }
}

/// Seats in advancement order: the game ranking for duels, and for the
/// card game score, then first places, then a seeded coin.
fn advancement(result: &GameResult, seed: u64) -> Vec<usize> {
    match result.final_state.as_card() {
        Some(card) => {
            let mut coin = stream(seed, &[0xC01]);
            let keys: Vec<u64> = (0..card.game_scores.len()).map(|_| coin.gen()).collect();
            let mut seats: Vec<usize> = (0..card.game_scores.len()).collect();
            seats.sort_by(|&a, &b| {
                card.game_scores[b]
                    .cmp(&card.game_scores[a])
                    .then(card.first_places[b].cmp(&card.first_places[a]))
                    .then(keys[a].cmp(&keys[b]))
            });
            seats
        }
        _ => result.ranking.clone(),
    }
}

/// Plays one bracket. Games run sequentially in bracket order; learning
/// entrants update during their games.
pub fn run_tournament(roster: &mut Roster, kind: EnvKind, seed: u64) -> Result<TournamentOutcome> {
    bracket(roster, kind, seed, false).map(|(out, _)| out)
}

/// [`run_tournament`] that also returns the transcript of every game in
/// bracket order.
pub fn run_tournament_recorded(
    roster: &mut Roster,
    kind: EnvKind,
    seed: u64,
) -> Result<(TournamentOutcome, Vec<Transcript>)> {
    bracket(roster, kind, seed, true)
}

fn bracket(
    roster: &mut Roster,
    kind: EnvKind,
    seed: u64,
    record: bool,
) -> Result<(TournamentOutcome, Vec<Transcript>)> {
    let shape = bracket_shape(kind, roster.len())?;
    let group = kind.players();
    let advance = if group == 2 { 1 } else { 2 };
    let mut alive: Vec<usize> = (0..roster.len()).collect();
    alive.shuffle(&mut stream(seed, &[0xB7]));
    let ids = roster.ids();
    let mut games = Vec::new();
    let mut transcripts = Vec::new();
    for (phase, &groups) in shape.iter().enumerate() {
        let mut next = Vec::with_capacity(alive.len() / 2);
        for gi in 0..groups {
            let seats = alive[gi * group..(gi + 1) * group].to_vec();
            let game_seed = derive_seed(seed, &[phase as u64, gi as u64]);
            let seat_ids: Vec<String> = seats.iter().map(|&s| ids[s].clone()).collect();
            let mut agents = roster.seat_agents(&seats);
            let result = play_game(
                kind,
                derive_seed(game_seed, &[0]),
                derive_seed(game_seed, &[1]),
                &mut agents,
                &seat_ids,
                PlayOptions {
                    record,
                    ..PlayOptions::new(kind)
                },
            )?;
            transcripts.extend(result.transcript.clone());
            let order: Vec<usize> = advancement(&result, game_seed)
                .into_iter()
                .map(|p| seats[p])
                .collect();
            if phase + 1 < shape.len() {
                next.extend_from_slice(&order[..advance]);
            }
            games.push(GameRecord {
                phase,
                game: games.len(),
                seats,
                order,
                turns: result.turns,
                truncated: result.truncated,
            });
        }
        if phase + 1 < shape.len() {
            alive = next;
        }
    }
    let winner = games.last().expect("at least one game").winner();
    let outcome = TournamentOutcome {
        winner,
        phases: shape.len(),
        games,
    };
    Ok((outcome, transcripts))
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    /// Per-game `victory` records followed by per-entrant `victories`
    /// counts for every run and tournament.
    pub records: Vec<MetricRecord>,
    /// Mean victories per tournament index and agent type.
    pub summary: Vec<SummaryRow>,
}

impl BenchmarkOutcome {
    /// Mean victories of `agent_type` in tournament `t` (0-based).
    pub fn mean_victories(&self, t: u64, agent_type: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| {
                r.key[0] == super::KeyPart::Num(t)
                    && r.key[1] == super::KeyPart::Text(agent_type.to_string())
            })
            .map(|r| r.mean)
    }
}

pub const BENCHMARK_KEYS: [GroupKey; 2] = [GroupKey::Tournament, GroupKey::AgentType];

/// `runs` repetitions of `tournaments` brackets in a row. Each run starts
/// from a copy of `template`, so online entrants keep learning across the
/// tournaments of one run and are reset between runs.
pub fn run_benchmark(
    template: &Roster,
    kind: EnvKind,
    tournaments: u64,
    runs: u64,
    seed: u64,
) -> Result<BenchmarkOutcome> {
    let mut games = Vec::new();
    let mut counts = Vec::new();
    for run in 0..runs {
        let mut roster = template.clone();
        for t in 0..tournaments {
            let out = run_tournament(&mut roster, kind, derive_seed(seed, &[run, t]))?;
            games.extend(out.records(&roster, run, t));
            for (i, v) in out.victories(roster.len()).into_iter().enumerate() {
                counts.push(MetricRecord {
                    run,
                    tournament: t,
                    phase: 0,
                    game: 0,
                    agent: roster.entrants[i].id.clone(),
                    opponents: String::new(),
                    metric: "victories".into(),
                    value: v as f64,
                });
            }
        }
    }
    let summary = aggregate(&counts, &BENCHMARK_KEYS)?;
    games.extend(counts);
    Ok(BenchmarkOutcome {
        records: games,
        summary,
    })
}

/// All entrants of `records` whose type is `agent_type`.
pub fn records_of_type<'a>(
    records: &'a [MetricRecord],
    agent_type: &'a str,
) -> impl Iterator<Item = &'a MetricRecord> {
    records
        .iter()
        .filter(move |r| agent_type_of(&r.agent) == agent_type)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(
            bracket_shape(EnvKind::Duel, 32).unwrap(),
            vec![16, 8, 4, 2, 1]
        );
        assert_eq!(bracket_shape(EnvKind::Card, 32).unwrap(), vec![8, 4, 2, 1]);
        assert_eq!(bracket_shape(EnvKind::Card, 4).unwrap(), vec![1]);
        assert!(bracket_shape(EnvKind::Duel, 12).unwrap_err().is_config());
        assert!(bracket_shape(EnvKind::Card, 2).unwrap_err().is_config());
        assert!(bracket_shape(EnvKind::Card, 24).unwrap_err().is_config());
    }
}
