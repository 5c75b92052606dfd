//! Entrant types, the factory that trains them, and tournament rosters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use envs::EnvKind;
use neurocore::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::agents::training::{train_offline, Algorithm, Learner, OfflineMode};
use crate::agents::{Agent, HyperPreset, NaiveGreedy, NaiveRandom, PpoAgent};
use crate::error::{Result, WinneError};
use crate::winne::{WinneAgent, WinneConfig};

/// How a baseline learner is prepared before play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Trained against the simple-strategy baseline, then frozen.
    Ofvn,
    /// Trained by self-play, then frozen.
    Ofsp,
    /// Starts untrained and learns during play.
    Onsc,
    /// Starts from the self-play checkpoint and keeps learning.
    Onpt,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::Ofsp,
        TrainMode::Ofvn,
        TrainMode::Onsc,
        TrainMode::Onpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Ofvn => "ofvn",
            TrainMode::Ofsp => "ofsp",
            TrainMode::Onsc => "onsc",
            TrainMode::Onpt => "onpt",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, TrainMode::Onsc | TrainMode::Onpt)
    }
}

/// Every kind of entrant the harness can instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentType {
    NaiveRandom,
    NaiveGreedy,
    Baseline(Algorithm, TrainMode),
    Winne,
}

impl AgentType {
    /// The eight learning baselines: both algorithms in all four modes.
    pub fn learners() -> Vec<AgentType> {
        [Algorithm::Ppo, Algorithm::Dql]
            .into_iter()
            .flat_map(|a| {
                TrainMode::ALL
                    .into_iter()
                    .map(move |m| AgentType::Baseline(a, m))
            })
            .collect()
    }

    pub fn is_online(self) -> bool {
        match self {
            AgentType::Baseline(_, m) => m.is_online(),
            AgentType::Winne => true,
            _ => false,
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentType::NaiveRandom => f.write_str("naive-random"),
            AgentType::NaiveGreedy => f.write_str("naive-greedy"),
            AgentType::Baseline(a, m) => write!(f, "{a}-{}", m.name()),
            AgentType::Winne => f.write_str("winne"),
        }
    }
}

impl FromStr for AgentType {
    type Err = WinneError;

    fn from_str(s: &str) -> Result<Self> {
        let t = match s {
            "naive-random" => AgentType::NaiveRandom,
            "naive-greedy" => AgentType::NaiveGreedy,
            "winne" => AgentType::Winne,
            _ => {
                let (alg, mode) = s.split_once('-').ok_or_else(|| unknown_type(s))?;
                let alg = match alg {
                    "ppo" => Algorithm::Ppo,
                    "dql" => Algorithm::Dql,
                    _ => return Err(unknown_type(s)),
                };
                let mode = TrainMode::ALL
                    .into_iter()
                    .find(|m| m.name() == mode)
                    .ok_or_else(|| unknown_type(s))?;
                AgentType::Baseline(alg, mode)
            }
        };
        Ok(t)
    }
}

fn unknown_type(s: &str) -> WinneError {
    WinneError::Config(format!("unknown opponent type `{s}`"))
}

impl Serialize for AgentType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Offline training effort for the baselines and the composite agent's
/// global policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBudget {
    pub preset: HyperPreset,
    /// Games against the simple-strategy baseline for `ofvn`.
    pub vs_naive_games: u64,
    pub self_play_generations: usize,
    pub self_play_games: u64,
    /// Snapshots taken per self-play generation.
    pub self_play_segments: usize,
}

impl Default for TrainingBudget {
    fn default() -> Self {
        Self {
            preset: HyperPreset::Stable,
            vs_naive_games: 200,
            self_play_generations: 2,
            self_play_games: 100,
            self_play_segments: 4,
        }
    }
}

impl TrainingBudget {
    /// No training at all; useful for structural tests.
    pub fn none() -> Self {
        Self {
            vs_naive_games: 0,
            self_play_generations: 0,
            ..Self::default()
        }
    }
}

/// Builds entrants and caches the offline training they need, so `ofsp`
/// and `onpt` share one self-play run per algorithm.
pub struct Zoo {
    pub kind: EnvKind,
    pub budget: TrainingBudget,
    pub winne: WinneConfig,
    pub seed: u64,
    cache: BTreeMap<(Algorithm, TrainMode), Learner>,
}

impl Zoo {
    pub fn new(kind: EnvKind, budget: TrainingBudget, seed: u64) -> Self {
        Self {
            kind,
            budget,
            winne: WinneConfig::preset(kind),
            seed,
            cache: BTreeMap::new(),
        }
    }

    fn fresh(&self, alg: Algorithm) -> Learner {
        Learner::fresh_with(
            alg,
            self.kind,
            self.budget.preset,
            derive_seed(self.seed, &[alg as u64]),
        )
    }

    /// Trained learner for `ofvn` or `ofsp` (with learning switched on).
    pub fn trained(&mut self, alg: Algorithm, mode: TrainMode) -> Result<Learner> {
        let key = match mode {
            TrainMode::Ofvn => (alg, TrainMode::Ofvn),
            _ => (alg, TrainMode::Ofsp),
        };
        if let Some(l) = self.cache.get(&key) {
            return Ok(l.clone());
        }
        let seed = derive_seed(self.seed, &[alg as u64, key.1 as u64]);
        let (learner, _) = match key.1 {
            TrainMode::Ofvn => train_offline(
                self.fresh(alg),
                self.kind,
                OfflineMode::VsNaive,
                self.budget.vs_naive_games,
                seed,
            )?,
            _ => train_offline(
                self.fresh(alg),
                self.kind,
                OfflineMode::SelfPlay {
                    generations: self.budget.self_play_generations,
                    segments: self.budget.self_play_segments,
                },
                self.budget.self_play_games,
                seed,
            )?,
        };
        self.cache.insert(key, learner.clone());
        Ok(learner)
    }

    /// Self-play PPO policy used as the composite agent's global policy.
    pub fn global_policy(&mut self) -> Result<PpoAgent> {
        match self.trained(Algorithm::Ppo, TrainMode::Ofsp)? {
            Learner::Ppo(p) => Ok(p),
            Learner::Dql(_) => unreachable!("PPO was requested"),
        }
    }

    pub fn winne_agent(&mut self) -> Result<WinneAgent> {
        let global = self.global_policy()?;
        Ok(WinneAgent::new(
            self.kind,
            self.winne.clone(),
            global,
            derive_seed(self.seed, &[0x3177e]),
        ))
    }

    pub fn build(&mut self, t: AgentType) -> Result<Box<dyn Agent>> {
        Ok(match t {
            AgentType::NaiveRandom => Box::new(NaiveRandom),
            AgentType::NaiveGreedy => Box::new(NaiveGreedy),
            AgentType::Winne => Box::new(self.winne_agent()?),
            AgentType::Baseline(alg, mode) => {
                let mut l = match mode {
                    TrainMode::Onsc => self.fresh(alg),
                    _ => self.trained(alg, mode)?,
                };
                l.set_learning(mode.is_online());
                if !mode.is_online() {
                    l = l.frozen();
                }
                Box::new(l)
            }
        })
    }
}

#[derive(Clone)]
pub struct Entrant {
    /// Unique id of the form `type#k`.
    pub id: String,
    pub agent_type: AgentType,
    pub agent: Box<dyn Agent>,
}

/// The live entrants of a tournament, one instance each.
#[derive(Clone)]
pub struct Roster {
    pub entrants: Vec<Entrant>,
}

impl Roster {
    /// Instantiates `types` and fills with naive agents (greedy and random
    /// alternating) until `size` entrants exist.
    pub fn build(zoo: &mut Zoo, types: &[AgentType], size: usize) -> Result<Self> {
        if types.len() > size {
            return Err(WinneError::Config(format!(
                "{} entrants do not fit a roster of {size}",
                types.len()
            )));
        }
        let mut all = types.to_vec();
        let mut fill = [AgentType::NaiveGreedy, AgentType::NaiveRandom]
            .into_iter()
            .cycle();
        while all.len() < size {
            all.push(fill.next().expect("cycle"));
        }
        let mut counts: BTreeMap<AgentType, usize> = BTreeMap::new();
        let mut entrants = Vec::with_capacity(size);
        for t in all {
            let k = counts.entry(t).or_default();
            entrants.push(Entrant {
                id: format!("{t}#{k}"),
                agent_type: t,
                agent: zoo.build(t)?,
            });
            *k += 1;
        }
        Ok(Self { entrants })
    }

    pub fn len(&self) -> usize {
        self.entrants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entrants.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entrants.iter().map(|e| e.id.clone()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entrants.iter().position(|e| e.id == id)
    }

    /// Mutable agents for the given distinct roster positions, in order.
    ///
    /// # Panics
    /// If a position repeats: one live instance can only take one seat.
    pub fn seat_agents(&mut self, seats: &[usize]) -> Vec<&mut dyn Agent> {
        let mut slots: Vec<Option<&mut dyn Agent>> = self
            .entrants
            .iter_mut()
            .map(|e| Some(&mut *e.agent as &mut dyn Agent))
            .collect();
        seats
            .iter()
            .map(|&i| {
                slots[i]
                    .take()
                    .expect("an entrant occupies at most one seat per game")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_names_round_trip() {
        let mut all = vec![
            AgentType::NaiveRandom,
            AgentType::NaiveGreedy,
            AgentType::Winne,
        ];
        all.extend(AgentType::learners());
        for t in all {
            assert_eq!(t.to_string().parse::<AgentType>().unwrap(), t);
        }
        assert!("ppo-online".parse::<AgentType>().unwrap_err().is_config());
        assert_eq!(AgentType::learners().len(), 8);
    }

    #[test]
    fn roster_fills_and_numbers_instances() {
        let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::none(), 1);
        let r = Roster::build(
            &mut zoo,
            &[AgentType::Baseline(Algorithm::Ppo, TrainMode::Onsc)],
            8,
        )
        .unwrap();
        assert_eq!(r.len(), 8);
        assert_eq!(r.entrants[0].id, "ppo-onsc#0");
        assert_eq!(r.entrants[1].id, "naive-greedy#0");
        assert_eq!(r.entrants[2].id, "naive-random#0");
        assert_eq!(r.entrants[3].id, "naive-greedy#1");
        assert!(r.entrants[0].agent.is_learning());
    }

    #[test]
    #[should_panic(expected = "at most one seat")]
    fn an_entrant_cannot_take_two_seats() {
        let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::none(), 1);
        let mut r = Roster::build(&mut zoo, &[], 2).unwrap();
        let _ = r.seat_agents(&[1, 1]);
    }
}
