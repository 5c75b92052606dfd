//! Two-player elemental duel.
//!
//! Each side fields three creatures of one of four elements. Elements form a
//! cycle: a move of element `m` deals double damage to element `(m + 1) % 4`,
//! half damage to `(m + 3) % 4` and normal damage otherwise. Both players
//! choose simultaneously; switches resolve first, then moves in descending
//! speed order with ties settled by a coin drawn from the state's generator.
//!
//! Action ids: `0..4` use the active creature's moves, `4` and `5` switch to
//! the first and second benched creature (non-active creatures in index
//! order). When an active creature faints the next step is a forced switch
//! in which only its owner acts.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;

pub const TEAM_SIZE: usize = 3;
pub const MOVES: usize = 4;
pub const ELEMENTS: u8 = 4;
pub const ACTIONS: usize = 6;
pub const MAX_HP: u32 = 100;
pub const FULL_LEN: usize = 22;
pub const PUBLIC_LEN: usize = 10;
pub const MIN_POWER: u32 = 10;
pub const MAX_POWER: u32 = 100;

pub const WIN_REWARD: f64 = 1.0;
pub const FAINT_REWARD: f64 = 0.1;
pub const DAMAGE_REWARD: f64 = 0.001;

/// Type multiplier of a move of element `attack` against a defender of
/// element `defend`.
pub fn multiplier(attack: u8, defend: u8) -> f64 {
    if defend == (attack + 1) % ELEMENTS {
        2.0
    } else if defend == (attack + ELEMENTS - 1) % ELEMENTS {
        0.5
    } else {
        1.0
    }
}

/// `floor(power × multiplier)`
pub fn damage(power: u32, attack: u8, defend: u8) -> u32 {
    (power as f64 * multiplier(attack, defend)).floor() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub power: u32,
    pub element: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Creature {
    pub element: u8,
    pub hp: u32,
    pub speed: u32,
    pub moves: [Move; MOVES],
}

impl Creature {
    pub fn alive(&self) -> bool {
        self.hp > 0
    }

    fn random(rng: &mut Xoshiro256PlusPlus) -> Self {
        let element = rng.gen_range(0..ELEMENTS);
        let speed = rng.gen_range(10..=100);
        let moves = std::array::from_fn(|_| Move {
            power: rng.gen_range(MIN_POWER..=MAX_POWER),
            element: rng.gen_range(0..ELEMENTS),
        });
        Self {
            element,
            hp: MAX_HP,
            speed,
            moves,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Choose,
    ForcedSwitch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelState {
    pub teams: [[Creature; TEAM_SIZE]; 2],
    pub active: [usize; 2],
    pub turn: u32,
    pub phase: Phase,
    pub winner: Option<usize>,
    rng: Xoshiro256PlusPlus,
}

/// Per-step result before it is wrapped into the environment-level outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelStep {
    pub state: DuelState,
    pub rewards: [f64; 2],
    pub damage: [u32; 2],
}

impl DuelState {
    pub fn reset(seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let teams = std::array::from_fn(|_| std::array::from_fn(|_| Creature::random(&mut rng)));
        Self {
            teams,
            active: [0, 0],
            turn: 0,
            phase: Phase::Choose,
            winner: None,
            rng,
        }
    }

    /// Builds a state from explicit teams; used for fixtures.
    pub fn from_teams(teams: [[Creature; TEAM_SIZE]; 2], seed: u64) -> Self {
        Self {
            teams,
            active: [0, 0],
            turn: 0,
            phase: Phase::Choose,
            winner: None,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.winner.is_some()
    }

    pub fn to_act(&self) -> Vec<usize> {
        match (self.is_terminal(), self.phase) {
            (true, _) => vec![],
            (false, Phase::Choose) => vec![0, 1],
            (false, Phase::ForcedSwitch(p)) => vec![p],
        }
    }

    pub fn active_creature(&self, player: usize) -> &Creature {
        &self.teams[player][self.active[player]]
    }

    /// Indices of the two benched creatures, in index order.
    pub fn bench(&self, player: usize) -> [usize; 2] {
        let a = self.active[player];
        let mut out = [0; 2];
        let mut k = 0;
        for i in 0..TEAM_SIZE {
            if i != a {
                out[k] = i;
                k += 1;
            }
        }
        out
    }

    pub fn alive_count(&self, player: usize) -> usize {
        self.teams[player].iter().filter(|c| c.alive()).count()
    }

    /// Damage the active creature's moves would deal to the opposing active
    /// creature.
    pub fn effective_damage(&self, player: usize) -> [u32; MOVES] {
        let me = self.active_creature(player);
        let defender = self.active_creature(1 - player).element;
        std::array::from_fn(|k| damage(me.moves[k].power, me.moves[k].element, defender))
    }

    pub fn legal_actions(&self, player: usize) -> Result<Vec<bool>, EnvError> {
        if player > 1 {
            return Err(EnvError::PlayerOutOfRange(player));
        }
        if self.is_terminal() {
            return Err(EnvError::Terminal);
        }
        let mut mask = vec![false; ACTIONS];
        if !self.to_act().contains(&player) {
            return Ok(mask);
        }
        let forced = self.phase == Phase::ForcedSwitch(player);
        if !forced && self.active_creature(player).alive() {
            mask[..MOVES].fill(true);
        }
        for (slot, idx) in self.bench(player).iter().enumerate() {
            mask[MOVES + slot] = self.teams[player][*idx].alive();
        }
        Ok(mask)
    }

    fn check(&self, actions: &[(usize, usize)]) -> Result<(), EnvError> {
        if self.is_terminal() {
            return Err(EnvError::Terminal);
        }
        for &(p, a) in actions {
            if p > 1 {
                return Err(EnvError::PlayerOutOfRange(p));
            }
            if !self.to_act().contains(&p) {
                return Err(EnvError::NotToAct { player: p });
            }
            if a >= ACTIONS || !self.legal_actions(p)?[a] {
                return Err(EnvError::IllegalAction {
                    player: p,
                    action: a,
                });
            }
        }
        Ok(())
    }

    /// Resolves a full turn. `actions` must hold exactly one legal action for
    /// every player in [`Self::to_act`].
    pub fn step(&self, actions: &[(usize, usize)]) -> Result<DuelStep, EnvError> {
        self.check(actions)?;
        let mut got: Vec<usize> = actions.iter().map(|a| a.0).collect();
        got.sort_unstable();
        let expected = self.to_act();
        if got != expected {
            return Err(EnvError::ActionSet { expected, got });
        }
        Ok(self.resolve(actions))
    }

    /// Applies one player's action as if the opponent stayed idle. No coin is
    /// drawn, so the result is deterministic.
    pub fn project(&self, player: usize, action: usize) -> Result<DuelState, EnvError> {
        self.check(&[(player, action)])?;
        Ok(self.resolve(&[(player, action)]).state)
    }

    fn resolve(&self, actions: &[(usize, usize)]) -> DuelStep {
        let mut s = self.clone();
        let mut rewards = [0.0; 2];
        let mut dealt = [0u32; 2];
        for &(p, a) in actions {
            if a >= MOVES {
                s.active[p] = s.bench(p)[a - MOVES];
            }
        }
        let mut movers: Vec<(usize, usize)> = actions
            .iter()
            .copied()
            .filter(|&(_, a)| a < MOVES)
            .collect();
        if movers.len() == 2 {
            let s0 = s.active_creature(movers[0].0).speed;
            let s1 = s.active_creature(movers[1].0).speed;
            let swap = match s0.cmp(&s1) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => s.rng.gen_bool(0.5),
            };
            if swap {
                movers.swap(0, 1);
            }
        }
        for (p, a) in movers {
            if !s.active_creature(p).alive() {
                continue;
            }
            let mv = s.active_creature(p).moves[a];
            let o = 1 - p;
            let target = s.active[o];
            let def = &mut s.teams[o][target];
            let hit = damage(mv.power, mv.element, def.element).min(def.hp);
            def.hp -= hit;
            dealt[p] += hit;
            rewards[p] += DAMAGE_REWARD * hit as f64;
            if def.hp == 0 {
                rewards[p] += FAINT_REWARD;
            }
        }
        s.turn += 1;
        s.phase = Phase::Choose;
        for p in 0..2 {
            if s.alive_count(p) == 0 {
                let w = 1 - p;
                s.winner = Some(w);
                rewards[w] += WIN_REWARD;
                rewards[p] -= WIN_REWARD;
                break;
            }
        }
        if s.winner.is_none() {
            for p in 0..2 {
                if !s.active_creature(p).alive() {
                    s.phase = Phase::ForcedSwitch(p);
                }
            }
        }
        DuelStep {
            state: s,
            rewards,
            damage: dealt,
        }
    }

    /// 4 move powers /100, 4 type multipliers /2, own and opposing hp
    /// fractions, own and opposing alive flags, own and opposing remaining
    /// fractions.
    pub fn encode_full(&self, player: usize) -> Vec<f64> {
        let o = 1 - player;
        let me = self.active_creature(player);
        let def = self.active_creature(o).element;
        let mut v = Vec::with_capacity(FULL_LEN);
        v.extend(me.moves.iter().map(|m| m.power as f64 / 100.0));
        v.extend(me.moves.iter().map(|m| multiplier(m.element, def) / 2.0));
        for side in [player, o] {
            v.extend(self.teams[side].iter().map(|c| c.hp as f64 / MAX_HP as f64));
        }
        for side in [player, o] {
            v.extend(
                self.teams[side]
                    .iter()
                    .map(|c| if c.alive() { 1.0 } else { 0.0 }),
            );
        }
        for side in [player, o] {
            v.push(self.alive_count(side) as f64 / TEAM_SIZE as f64);
        }
        v
    }

    /// Modeled hp fractions, observer hp fractions, both alive counts /3 and
    /// both active indices /3.
    pub fn encode_public(&self, observer: usize, modeled: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(PUBLIC_LEN);
        for side in [modeled, observer] {
            v.extend(self.teams[side].iter().map(|c| c.hp as f64 / MAX_HP as f64));
        }
        for side in [modeled, observer] {
            v.push(self.alive_count(side) as f64 / TEAM_SIZE as f64);
        }
        for side in [modeled, observer] {
            v.push(self.active[side] as f64 / TEAM_SIZE as f64);
        }
        v
    }
}

/// Legal-action mask of the modeled player reconstructed from a public
/// encoding alone. Matches the true mask whenever the modeled player is to
/// act.
pub fn public_mask(public: &[f64]) -> Vec<bool> {
    let hp = &public[0..TEAM_SIZE];
    let active = (public[8] * TEAM_SIZE as f64).round() as usize;
    let alive = |i: usize| hp[i] > 0.0;
    let bench: Vec<usize> = (0..TEAM_SIZE).filter(|&i| i != active).collect();
    let mut mask = vec![false; ACTIONS];
    if alive(active) {
        let observer_active = (public[9] * TEAM_SIZE as f64).round() as usize;
        // A fainted observer creature means the observer is the one switching.
        if public[TEAM_SIZE + observer_active] > 0.0 {
            mask[..MOVES].fill(true);
        }
    }
    for (slot, &i) in bench.iter().enumerate() {
        mask[MOVES + slot] = alive(i);
    }
    if !mask.iter().any(|&m| m) {
        mask[..MOVES].fill(true);
    }
    mask
}
