//! Prediction, adaptation, retention and ablation experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use envs::EnvKind;
use neurocore::rng::derive_seed;
use neurocore::StreamRng;
use sha2::{Digest, Sha256};

use super::roster::{AgentType, Roster, Zoo};
use super::tournament::run_tournament;
use super::MetricRecord;
use crate::agents::{Agent, Decision, ObservedTurn, TurnContext};
use crate::error::{Result, WinneError};
use crate::play::{play_game, GameResult, PlayOptions};
use crate::winne::{WinneAgent, WinneMode};

/// Wraps an opponent and counts the size of its legal set at every
/// decision, for the chance level of a uniform guesser.
#[derive(Clone)]
struct LegalCounter {
    inner: Box<dyn Agent>,
    legal: u64,
    decisions: u64,
    inverse_legal: f64,
}

impl LegalCounter {
    fn new(inner: Box<dyn Agent>) -> Self {
        Self {
            inner,
            legal: 0,
            decisions: 0,
            inverse_legal: 0.0,
        }
    }

    fn reset(&mut self) {
        self.legal = 0;
        self.decisions = 0;
        self.inverse_legal = 0.0;
    }
}

impl Agent for LegalCounter {
    fn label(&self) -> String {
        self.inner.label()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let n = ctx.mask()?.iter().filter(|&&m| m).count() as u64;
        self.legal += n;
        self.inverse_legal += 1.0 / n as f64;
        self.decisions += 1;
        self.inner.act(ctx, rng)
    }

    fn reward(&mut self, r: f64) {
        self.inner.reward(r)
    }

    fn observe(&mut self, turn: &ObservedTurn, rng: &mut StreamRng) -> Result<()> {
        self.inner.observe(turn, rng)
    }

    fn end_game(&mut self, rng: &mut StreamRng) -> Result<()> {
        self.inner.end_game(rng)
    }

    fn is_learning(&self) -> bool {
        self.inner.is_learning()
    }

    fn set_learning(&mut self, on: bool) {
        self.inner.set_learning(on)
    }

    fn param_digest(&self) -> String {
        self.inner.param_digest()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Plays one game with `me` in `seat` and `opponents` filling the other
/// seats in order.
fn play_against(
    kind: EnvKind,
    me: &mut dyn Agent,
    me_id: &str,
    seat: usize,
    opponents: Vec<(&str, &mut dyn Agent)>,
    env_seed: u64,
    agent_seed: u64,
) -> Result<GameResult> {
    let players = kind.players();
    let mut ids = Vec::with_capacity(players);
    let mut refs: Vec<&mut dyn Agent> = Vec::with_capacity(players);
    let mut me = Some(me);
    let mut opp = opponents.into_iter();
    for p in 0..players {
        if p == seat {
            ids.push(me_id.to_string());
            refs.push(me.take().expect("one seat for the agent"));
        } else {
            let (id, a) = opp.next().expect("one opponent per remaining seat");
            ids.push(id.to_string());
            refs.push(a);
        }
    }
    play_game(
        kind,
        env_seed,
        agent_seed,
        &mut refs,
        &ids,
        PlayOptions::new(kind),
    )
}

fn borrow_all(opponents: &mut [(String, Box<dyn Agent>)]) -> Vec<(&str, &mut dyn Agent)> {
    opponents
        .iter_mut()
        .map(|(id, a)| (id.as_str(), &mut **a as &mut dyn Agent))
        .collect()
}

fn instances(zoo: &mut Zoo, t: AgentType) -> Result<Vec<(String, Box<dyn Agent>)>> {
    (0..zoo.kind.players() - 1)
        .map(|k| Ok((format!("{t}#{k}"), zoo.build(t)?)))
        .collect()
}

fn require_types(types: &[AgentType]) -> Result<()> {
    if types.is_empty() {
        return Err(WinneError::Config(
            "at least one opponent type is required".into(),
        ));
    }
    Ok(())
}

fn record(game: u64, opponents: String, metric: &str, value: f64) -> MetricRecord {
    MetricRecord {
        run: 0,
        tournament: 0,
        phase: 0,
        game,
        agent: "winne".into(),
        opponents,
        metric: metric.into(),
        value,
    }
}

/// Plays `games` games of a fresh composite agent against instances of
/// each opponent type in turn and reports, per game, the online argmax
/// accuracy of its predictors (`csp_accuracy`) and the accuracy of a
/// uniform guesser, `1 / mean |legal actions|` of the opponents
/// (`chance`). `chance_expected` is the mean of `1 / |legal actions|`,
/// the expected accuracy of any guess against a uniform choice; the two
/// differ when the legal set size varies, as with forced passes.
///
/// Every game against one type starts from the same deal, so a fixed
/// strategy meets the same situations again; the agent keeps seat 0.
pub fn run_prediction(
    zoo: &mut Zoo,
    types: &[AgentType],
    games: u64,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    require_types(types)?;
    let kind = zoo.kind;
    let mut out = Vec::new();
    for (ti, &t) in types.iter().enumerate() {
        let mut winne = zoo.winne_agent()?;
        let mut opponents: Vec<(String, LegalCounter)> = instances(zoo, t)?
            .into_iter()
            .map(|(id, a)| (id, LegalCounter::new(a)))
            .collect();
        let env_seed = derive_seed(seed, &[ti as u64]);
        for g in 0..games {
            for p in winne.profiles.values_mut() {
                p.csp.reset_game_accuracy();
            }
            for (_, c) in opponents.iter_mut() {
                c.reset();
            }
            let seats = opponents
                .iter_mut()
                .map(|(id, a)| (id.as_str(), a as &mut dyn Agent))
                .collect();
            play_against(
                kind,
                &mut winne,
                "winne",
                0,
                seats,
                env_seed,
                derive_seed(seed, &[ti as u64, g]),
            )?;
            let (mut correct, mut observed, mut legal, mut decisions, mut inverse) =
                (0, 0, 0, 0, 0.0);
            for (id, c) in &opponents {
                if let Some(p) = winne.profiles.get(id) {
                    correct += p.csp.game.correct;
                    observed += p.csp.game.observed;
                }
                legal += c.legal;
                decisions += c.decisions;
                inverse += c.inverse_legal;
            }
            let acc = if observed == 0 {
                0.0
            } else {
                correct as f64 / observed as f64
            };
            let chance = if legal == 0 {
                0.0
            } else {
                decisions as f64 / legal as f64
            };
            out.push(record(g, t.to_string(), "csp_accuracy", acc));
            let expected = if decisions == 0 {
                0.0
            } else {
                inverse / decisions as f64
            };
            out.push(record(g, t.to_string(), "chance", chance));
            out.push(record(g, t.to_string(), "chance_expected", expected));
        }
    }
    Ok(out)
}

/// Win fraction of the composite entrant against each opponent type in
/// every tournament of `runs` repetitions of `tournaments` brackets.
/// `template` must contain exactly one `winne` entrant.
pub fn run_adaptation(
    template: &Roster,
    kind: EnvKind,
    tournaments: u64,
    runs: u64,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    let winne_ids: Vec<usize> = (0..template.len())
        .filter(|&i| template.entrants[i].agent_type == AgentType::Winne)
        .collect();
    let &[w] = winne_ids.as_slice() else {
        return Err(WinneError::Config(format!(
            "adaptation needs exactly one winne entrant, the roster has {}",
            winne_ids.len()
        )));
    };
    let mut out = Vec::new();
    for run in 0..runs {
        let mut roster = template.clone();
        for t in 0..tournaments {
            let outcome = run_tournament(&mut roster, kind, derive_seed(seed, &[run, t]))?;
            let mut tally: BTreeMap<String, (u64, u64)> = BTreeMap::new();
            for g in outcome.games.iter().filter(|g| g.seats.contains(&w)) {
                let won = g.winner() == w;
                for &s in g.seats.iter().filter(|&&s| s != w) {
                    let e = tally
                        .entry(roster.entrants[s].agent_type.to_string())
                        .or_default();
                    e.0 += won as u64;
                    e.1 += 1;
                }
            }
            for (ty, (won, played)) in tally {
                out.push(MetricRecord {
                    run,
                    tournament: t,
                    phase: 0,
                    game: 0,
                    agent: roster.entrants[w].id.clone(),
                    opponents: ty,
                    metric: "win_fraction".into(),
                    value: won as f64 / played as f64,
                });
            }
        }
    }
    Ok(out)
}

/// Opponent type index of every game of a retention schedule: each cycle
/// plays a block of `block` games against every type in order.
pub fn retention_schedule(types: usize, cycles: usize, block: u64) -> Vec<usize> {
    let mut s = Vec::new();
    for _ in 0..cycles {
        for t in 0..types {
            s.extend(std::iter::repeat_n(t, block as usize));
        }
    }
    s
}

/// SHA-256 over every file of a directory tree, in path order.
pub fn directory_digest(dir: &Path) -> Result<String> {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(
            f.strip_prefix(dir)
                .unwrap_or(&f)
                .to_string_lossy()
                .as_bytes(),
        );
        h.update([0]);
        h.update(fs::read(&f)?);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone)]
pub struct RetentionOutcome {
    /// One `mean_victories` row per cycle and type; `tournament` holds the
    /// cycle index.
    pub records: Vec<MetricRecord>,
    /// Whether each between-cycle save, load and re-save reproduced the
    /// bundle byte for byte.
    pub round_trips: Vec<bool>,
}

impl RetentionOutcome {
    /// Mean victories against `ty` in `cycle` (0-based).
    pub fn mean(&self, cycle: u64, ty: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.tournament == cycle && r.opponents == ty)
            .map(|r| r.value)
    }
}

/// Plays `cycles` cycles of `block` games against each opponent type. The
/// opponents are long-lived instances, so two encounters with one type are
/// `(types − 1) × block` games apart. Between cycles the composite agent
/// lives only in its bundle under `bundle_dir`.
pub fn run_retention(
    zoo: &mut Zoo,
    types: &[AgentType],
    cycles: usize,
    block: u64,
    bundle_dir: &Path,
    seed: u64,
) -> Result<RetentionOutcome> {
    require_types(types)?;
    let kind = zoo.kind;
    let players = kind.players() as u64;
    let mut opponents: Vec<Vec<(String, Box<dyn Agent>)>> = types
        .iter()
        .map(|&t| instances(zoo, t))
        .collect::<Result<_>>()?;
    zoo.winne_agent()?.persist(bundle_dir)?;
    let mut records = Vec::new();
    let mut round_trips = Vec::new();
    for cycle in 0..cycles {
        let mut winne = WinneAgent::load(bundle_dir)?;
        for (ti, &t) in types.iter().enumerate() {
            let mut wins = 0u64;
            for g in 0..block {
                let game_seed = derive_seed(seed, &[cycle as u64, ti as u64, g]);
                let seat = (g % players) as usize;
                let r = play_against(
                    kind,
                    &mut winne,
                    "winne",
                    seat,
                    borrow_all(&mut opponents[ti]),
                    derive_seed(game_seed, &[0]),
                    derive_seed(game_seed, &[1]),
                )?;
                wins += (r.winner() == seat) as u64;
            }
            records.push(MetricRecord {
                run: 0,
                tournament: cycle as u64,
                phase: 0,
                game: 0,
                agent: "winne".into(),
                opponents: t.to_string(),
                metric: "mean_victories".into(),
                value: wins as f64 / block.max(1) as f64,
            });
        }
        winne.persist(bundle_dir)?;
        let saved = directory_digest(bundle_dir)?;
        WinneAgent::load(bundle_dir)?.persist(bundle_dir)?;
        round_trips.push(directory_digest(bundle_dir)? == saved);
    }
    Ok(RetentionOutcome {
        records,
        round_trips,
    })
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub full: f64,
    pub global_only: f64,
    /// `victory` rows (1 or 0) per game for `winne` and
    /// `winne-global-only`.
    pub records: Vec<MetricRecord>,
}

/// Win rates of the full pipeline and of the global-policy-only ablation,
/// each starting from the same global policy against a fresh instance of
/// `opponent` over the same `games` deals.
pub fn run_ablation(
    zoo: &mut Zoo,
    opponent: AgentType,
    games: u64,
    seed: u64,
) -> Result<AblationOutcome> {
    let kind = zoo.kind;
    let players = kind.players() as u64;
    let mut rates = [0.0; 2];
    let mut records = Vec::new();
    for (mi, mode) in [WinneMode::Full, WinneMode::GlobalOnly]
        .into_iter()
        .enumerate()
    {
        let mut winne = zoo.winne_agent()?;
        winne.config.mode = mode;
        let label = winne.label();
        let mut opponents = instances(zoo, opponent)?;
        let mut wins = 0u64;
        for g in 0..games {
            let seat = (g % players) as usize;
            let game_seed = derive_seed(seed, &[g]);
            let r = play_against(
                kind,
                &mut winne,
                &label,
                seat,
                borrow_all(&mut opponents),
                derive_seed(game_seed, &[0]),
                derive_seed(game_seed, &[1]),
            )?;
            let won = r.winner() == seat;
            wins += won as u64;
            let mut rec = record(g, opponent.to_string(), "victory", won as u64 as f64);
            rec.agent = label.clone();
            records.push(rec);
        }
        rates[mi] = wins as f64 / games.max(1) as f64;
    }
    Ok(AblationOutcome {
        full: rates[0],
        global_only: rates[1],
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_gap_between_same_type_blocks() {
        let s = retention_schedule(18, 2, 10);
        let first_end = s.iter().position(|&t| t != 0).unwrap();
        let next_start = s.iter().skip(first_end).position(|&t| t == 0).unwrap() + first_end;
        assert_eq!(next_start - first_end, 170);
    }
}
