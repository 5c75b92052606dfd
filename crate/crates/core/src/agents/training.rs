//! Offline training: against the simple-strategy baseline, or by self-play
//! against a growing pool of frozen snapshots.
//!
//! Self-play splits each generation into segments. The learner is
//! snapshotted at the end of every segment and credited with the victories
//! it earned during that segment; the two snapshots with the most
//! victories join the pool once the generation ends. The pool therefore
//! holds `2g + 3` members after `g` generations (greedy, random and one
//! fresh agent are always present).

use std::path::Path;

use envs::EnvKind;
use neurocore::rng::derive_seed;
use neurocore::{stream, Checkpoint, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dql::DqlAgent;
use super::naive::{NaiveGreedy, NaiveRandom};
use super::ppo::PpoAgent;
use super::replay::ReplayBuffer;
use super::spec::{DqlSpec, HyperPreset, PpoSpec};
use super::{Agent, Decision, ObservedTurn, TurnContext};
use crate::error::{Result, WinneError};
use crate::persist::{read_checkpoint, read_json, write_checkpoint, write_json};
use crate::play::{play_game, PlayOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Dql,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Dql => "dql",
        })
    }
}

/// A trainable baseline of either algorithm.
#[derive(Debug, Clone)]
pub enum Learner {
    Ppo(PpoAgent),
    Dql(DqlAgent),
}

impl Learner {
    /// Freshly initialised agent with the table hyperparameters.
    pub fn fresh(alg: Algorithm, kind: EnvKind, seed: u64) -> Self {
        Self::fresh_with(alg, kind, HyperPreset::Table, seed)
    }

    pub fn fresh_with(alg: Algorithm, kind: EnvKind, preset: HyperPreset, seed: u64) -> Self {
        let mut rng = stream(seed, &[0x1e4]);
        match alg {
            Algorithm::Ppo => Learner::Ppo(PpoAgent::new(
                PpoSpec::for_preset(kind, preset),
                kind.full_len(),
                kind.action_count(),
                &mut rng,
            )),
            Algorithm::Dql => Learner::Dql(DqlAgent::new(
                DqlSpec::preset(kind),
                kind.full_len(),
                kind.action_count(),
                &mut rng,
            )),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Learner::Ppo(_) => Algorithm::Ppo,
            Learner::Dql(_) => Algorithm::Dql,
        }
    }

    fn inner(&self) -> &dyn Agent {
        match self {
            Learner::Ppo(a) => a,
            Learner::Dql(a) => a,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Agent {
        match self {
            Learner::Ppo(a) => a,
            Learner::Dql(a) => a,
        }
    }

    /// Copy with learning switched off. Frozen Q-learners drop their
    /// replay memory.
    pub fn frozen(&self) -> Self {
        let mut c = match self {
            Learner::Ppo(a) => Learner::Ppo(a.clone()),
            Learner::Dql(a) => {
                let mut d = a.clone();
                d.buffer =
                    ReplayBuffer::new(a.spec.buffer_capacity, a.spec.prioritized, a.spec.per_alpha);
                Learner::Dql(d)
            }
        };
        c.set_learning(false);
        c
    }

    /// Writes `manifest.json` and `network.json` into `dir`.
    pub fn save(&self, dir: &Path, mut manifest: AgentManifest) -> Result<()> {
        manifest.algorithm = self.algorithm();
        let ckpt = match self {
            Learner::Ppo(a) => {
                manifest.spec = serde_json::to_value(&a.spec)?;
                Checkpoint::capture("ppo", &a.net, Some(&a.adam))
            }
            Learner::Dql(a) => {
                manifest.spec = serde_json::to_value(&a.spec)?;
                Checkpoint::capture("dql", &a.online, Some(&a.adam))
            }
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        write_checkpoint(&dir.join("network.json"), &ckpt)
    }

    pub fn load(dir: &Path) -> Result<(Self, AgentManifest)> {
        let manifest: AgentManifest = read_json(&dir.join("manifest.json"))?;
        let ckpt = read_checkpoint(&dir.join("network.json"))?;
        let k = manifest.env_kind;
        let mut rng = stream(0, &[]);
        let learner = match manifest.algorithm {
            Algorithm::Ppo => {
                let spec: PpoSpec = serde_json::from_value(manifest.spec.clone())?;
                let mut a = PpoAgent::new(spec, k.full_len(), k.action_count(), &mut rng);
                if let Some(adam) = ckpt.restore("ppo", &mut a.net)? {
                    a.adam = adam;
                }
                Learner::Ppo(a)
            }
            Algorithm::Dql => {
                let spec: DqlSpec = serde_json::from_value(manifest.spec.clone())?;
                let mut a = DqlAgent::new(spec, k.full_len(), k.action_count(), &mut rng);
                if let Some(adam) = ckpt.restore("dql", &mut a.online)? {
                    a.adam = adam;
                }
                a.target = a.online.clone();
                Learner::Dql(a)
            }
        };
        Ok((learner, manifest))
    }
}

impl Agent for Learner {
    fn label(&self) -> String {
        self.inner().label()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        self.inner_mut().act(ctx, rng)
    }

    fn reward(&mut self, r: f64) {
        self.inner_mut().reward(r)
    }

    fn observe(&mut self, turn: &ObservedTurn, rng: &mut StreamRng) -> Result<()> {
        self.inner_mut().observe(turn, rng)
    }

    fn end_game(&mut self, rng: &mut StreamRng) -> Result<()> {
        self.inner_mut().end_game(rng)
    }

    fn is_learning(&self) -> bool {
        self.inner().is_learning()
    }

    fn set_learning(&mut self, on: bool) {
        self.inner_mut().set_learning(on)
    }

    fn param_digest(&self) -> String {
        self.inner().param_digest()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentManifest {
    pub algorithm: Algorithm,
    pub env_kind: EnvKind,
    pub mode: String,
    pub spec: serde_json::Value,
    pub training_games: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflineMode {
    VsNaive,
    SelfPlay { generations: usize, segments: usize },
}

impl OfflineMode {
    pub fn name(&self) -> &'static str {
        match self {
            OfflineMode::VsNaive => "vs_naive",
            OfflineMode::SelfPlay { .. } => "self_play",
        }
    }
}

/// Frozen opponents for self-play.
#[derive(Clone)]
pub struct OpponentPool {
    members: Vec<(String, Box<dyn Agent>)>,
}

impl OpponentPool {
    /// Greedy baseline, random baseline and a frozen fresh agent.
    pub fn new(fresh: Learner) -> Self {
        Self {
            members: vec![
                ("naive-greedy".into(), Box::new(NaiveGreedy)),
                ("naive-random".into(), Box::new(NaiveRandom)),
                ("fresh".into(), Box::new(fresh.frozen())),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn push(&mut self, name: String, snapshot: Learner) {
        self.members.push((name, Box::new(snapshot.frozen())));
    }

    pub fn names(&self) -> Vec<&str> {
        self.members.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn digests(&self) -> Vec<String> {
        self.members.iter().map(|(_, a)| a.param_digest()).collect()
    }

    /// Uniform draw; the caller gets its own copy so pool members are never
    /// modified.
    pub fn draw(&self, rng: &mut StreamRng) -> (String, Box<dyn Agent>) {
        let (n, a) = &self.members[rng.gen_range(0..self.members.len())];
        (n.clone(), a.boxed_clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// 1 for every training game the learner won, else 0.
    pub curve: Vec<f64>,
    pub games: u64,
    pub victories: u64,
    /// Pool size at the end of each generation.
    pub pool_sizes: Vec<usize>,
    /// Digests of every pool member at the end of each generation.
    pub pool_digests: Vec<Vec<String>>,
}

/// Plays one training game with the learner at `seat` and `opponents`
/// elsewhere. Returns whether the learner won.
fn training_game(
    kind: EnvKind,
    learner: &mut Learner,
    seat: usize,
    opponents: &mut [(String, Box<dyn Agent>)],
    seed: u64,
) -> Result<bool> {
    let players = kind.players();
    let mut ids = Vec::with_capacity(players);
    let mut refs: Vec<&mut dyn Agent> = Vec::with_capacity(players);
    let mut opp = opponents.iter_mut();
    let mut learner_slot = Some(learner);
    for p in 0..players {
        if p == seat {
            ids.push("learner".to_string());
            refs.push(learner_slot.take().expect("one learner seat"));
        } else {
            let (name, a) = opp.next().expect("enough opponents");
            ids.push(format!("{name}@{p}"));
            refs.push(a.as_mut());
        }
    }
    let r = play_game(
        kind,
        derive_seed(seed, &[0]),
        derive_seed(seed, &[1]),
        &mut refs,
        &ids,
        PlayOptions::new(kind),
    )?;
    Ok(r.winner() == seat)
}

/// Trains `agent` offline. `VsNaive` plays `games` against the greedy
/// baseline (every other seat is greedy in the card game). `SelfPlay`
/// runs `generations` of `games` each and returns the best snapshot of
/// the final generation; zero generations return the input unchanged.
pub fn train_offline(
    agent: Learner,
    kind: EnvKind,
    mode: OfflineMode,
    games: u64,
    seed: u64,
) -> Result<(Learner, TrainingReport)> {
    let mut learner = agent;
    learner.set_learning(true);
    let mut report = TrainingReport::default();
    let players = kind.players();
    match mode {
        OfflineMode::VsNaive => {
            for g in 0..games {
                let mut opponents: Vec<(String, Box<dyn Agent>)> = (1..players)
                    .map(|_| {
                        (
                            "naive-greedy".to_string(),
                            Box::new(NaiveGreedy) as Box<dyn Agent>,
                        )
                    })
                    .collect();
                let seat = (g as usize) % players;
                let won = training_game(
                    kind,
                    &mut learner,
                    seat,
                    &mut opponents,
                    derive_seed(seed, &[g]),
                )?;
                report.record(won);
            }
            Ok((learner, report))
        }
        OfflineMode::SelfPlay {
            generations,
            segments,
        } => {
            if generations == 0 {
                return Ok((learner, report));
            }
            if segments < 2 || games < segments as u64 {
                return Err(WinneError::Config(
                    "self-play needs at least 2 segments and one game per segment".into(),
                ));
            }
            let ends: Vec<u64> = (1..=segments as u64)
                .map(|k| k * games / segments as u64)
                .collect();
            let fresh = Learner::fresh(learner.algorithm(), kind, derive_seed(seed, &[u64::MAX]));
            let mut pool = OpponentPool::new(fresh);
            let mut draw_rng = stream(seed, &[0xD4A]);
            let mut best = learner.clone();
            for gen in 0..generations {
                let mut snapshots: Vec<(u64, usize, Learner)> = Vec::with_capacity(segments);
                let mut wins = 0u64;
                for g in 0..games {
                    let mut opponents: Vec<(String, Box<dyn Agent>)> =
                        (1..players).map(|_| pool.draw(&mut draw_rng)).collect();
                    let seat = (g as usize) % players;
                    let game_seed = derive_seed(seed, &[gen as u64, g]);
                    let won = training_game(kind, &mut learner, seat, &mut opponents, game_seed)?;
                    report.record(won);
                    wins += won as u64;
                    if ends.contains(&(g + 1)) {
                        snapshots.push((wins, snapshots.len(), learner.frozen()));
                        wins = 0;
                    }
                }
                // Most victories first; earlier snapshots win ties.
                snapshots.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                for (_, idx, snap) in snapshots.iter().take(2) {
                    pool.push(format!("gen{gen}-seg{idx}"), snap.clone());
                }
                if let Some((_, _, top)) = snapshots.first() {
                    best = top.clone();
                }
                report.pool_sizes.push(pool.len());
                report.pool_digests.push(pool.digests());
            }
            best.set_learning(true);
            Ok((best, report))
        }
    }
}

impl TrainingReport {
    fn record(&mut self, won: bool) {
        self.games += 1;
        self.victories += won as u64;
        self.curve.push(if won { 1.0 } else { 0.0 });
    }

    pub fn win_rate(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.victories as f64 / self.games as f64
        }
    }
}

/// Fraction of `games` evaluation games the frozen `agent` wins against
/// `opponent` (which fills every other seat).
pub fn evaluate(
    agent: &Learner,
    opponent: &dyn Agent,
    kind: EnvKind,
    games: u64,
    seed: u64,
) -> Result<f64> {
    let players = kind.players();
    let mut frozen = agent.frozen();
    let mut wins = 0u64;
    for g in 0..games {
        let mut opponents: Vec<(String, Box<dyn Agent>)> = (1..players)
            .map(|_| ("opponent".to_string(), opponent.boxed_clone()))
            .collect();
        let seat = (g as usize) % players;
        wins += training_game(
            kind,
            &mut frozen,
            seat,
            &mut opponents,
            derive_seed(seed, &[g]),
        )? as u64;
    }
    Ok(wins as f64 / games.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_generations_return_the_input() {
        let a = Learner::fresh(Algorithm::Ppo, EnvKind::Duel, 4);
        let before = a.param_digest();
        let (b, rep) = train_offline(
            a,
            EnvKind::Duel,
            OfflineMode::SelfPlay {
                generations: 0,
                segments: 4,
            },
            10,
            1,
        )
        .unwrap();
        assert_eq!(b.param_digest(), before);
        assert_eq!(rep.games, 0);
    }

    #[test]
    fn pool_grows_by_two_per_generation() {
        let a = Learner::fresh(Algorithm::Ppo, EnvKind::Duel, 4);
        let (_, rep) = train_offline(
            a,
            EnvKind::Duel,
            OfflineMode::SelfPlay {
                generations: 3,
                segments: 4,
            },
            8,
            1,
        )
        .unwrap();
        assert_eq!(rep.pool_sizes, vec![5, 7, 9]);
        // Members present in an earlier generation keep their digest.
        for w in rep.pool_digests.windows(2) {
            assert_eq!(&w[1][..w[0].len()], &w[0][..]);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for alg in [Algorithm::Ppo, Algorithm::Dql] {
            let a = Learner::fresh(alg, EnvKind::Card, 9);
            let sub = dir.path().join(alg.to_string());
            let m = AgentManifest {
                algorithm: alg,
                env_kind: EnvKind::Card,
                mode: "ofvn".into(),
                spec: serde_json::Value::Null,
                training_games: 0,
                seed: 9,
            };
            a.save(&sub, m).unwrap();
            let (b, m2) = Learner::load(&sub).unwrap();
            assert_eq!(b.param_digest(), a.param_digest());
            assert_eq!(m2.seed, 9);
        }
    }
}
