//! Non-learning baselines.

use envs::card::{self, CardAction};
use envs::GameState;
use neurocore::StreamRng;
use rand::Rng;

use super::{Agent, Decision, TurnContext};
use crate::error::Result;

/// Uniform over the legal actions.
#[derive(Debug, Clone, Default)]
pub struct NaiveRandom;

impl Agent for NaiveRandom {
    fn label(&self) -> String {
        "naive-random".into()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let mask = ctx.mask()?;
        let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
        if legal.is_empty() {
            return Err(neurocore::NeuroError::EmptySupport.into());
        }
        Ok(Decision::plain(legal[rng.gen_range(0..legal.len())]))
    }

    fn param_digest(&self) -> String {
        "naive-random".into()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Highest effective damage in the duel (first legal switch when forced);
/// largest legal set in the card game.
#[derive(Debug, Clone, Default)]
pub struct NaiveGreedy;

/// Index of the greatest damage, lowest index on ties.
pub fn greedy_duel_move(damages: &[u32]) -> usize {
    let mut best = 0;
    for (k, &d) in damages.iter().enumerate() {
        if d > damages[best] {
            best = k;
        }
    }
    best
}

/// Largest `q + j` discard, ties to the lowest value and then to fewer
/// jokers; pass when nothing can be laid.
pub fn greedy_card_action(mask: &[bool]) -> usize {
    let mut best: Option<(u8, u8, u8, usize)> = None;
    for (id, _) in mask.iter().enumerate().take(card::PASS).filter(|(_, &m)| m) {
        if let Some(CardAction::Discard(d)) = card::decode_action(id) {
            let size = if d.value == card::JOKER { 1 } else { d.size() };
            let key = (size, u8::MAX - d.value, u8::MAX - d.jokers, id);
            if best.is_none_or(|b| (key.0, key.1, key.2) > (b.0, b.1, b.2)) {
                best = Some(key);
            }
        }
    }
    best.map_or(card::PASS, |b| b.3)
}

impl Agent for NaiveGreedy {
    fn label(&self) -> String {
        "naive-greedy".into()
    }

    fn act(&mut self, ctx: &TurnContext, _rng: &mut StreamRng) -> Result<Decision> {
        let mask = ctx.mask()?;
        let action = match ctx.state {
            GameState::Duel(d) => {
                if mask[0] {
                    greedy_duel_move(&d.effective_damage(ctx.player))
                } else {
                    (0..mask.len())
                        .find(|&a| mask[a])
                        .ok_or(neurocore::NeuroError::EmptySupport)?
                }
            }
            GameState::Card(_) => greedy_card_action(&mask),
        };
        Ok(Decision::plain(action))
    }

    fn param_digest(&self) -> String {
        "naive-greedy".into()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
