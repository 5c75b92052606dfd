//! Helpers shared by the integration tests.
#![allow(dead_code)]

use envs::EnvKind;
use neurocore::StreamRng;
use winne::agents::{Agent, Decision, ObservedTurn, TurnContext};
use winne::play::{play_game, GameResult, PlayOptions};
use winne::Result;

/// Forwards to `inner` and fails the test if it ever picks an illegal
/// action. Records the per-turn rewards it is handed.
#[derive(Clone)]
pub struct Checked<A: Agent + Clone + 'static> {
    pub inner: A,
    pub rewards: Vec<f64>,
    pub decisions: Vec<Decision>,
}

impl<A: Agent + Clone + 'static> Checked<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            rewards: Vec::new(),
            decisions: Vec::new(),
        }
    }
}

impl<A: Agent + Clone + 'static> Agent for Checked<A> {
    fn label(&self) -> String {
        self.inner.label()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let mask = ctx.mask()?;
        let d = self.inner.act(ctx, rng)?;
        assert!(
            mask[d.action],
            "{} chose illegal action {}",
            self.inner.label(),
            d.action
        );
        self.decisions.push(d.clone());
        Ok(d)
    }

    fn reward(&mut self, r: f64) {
        self.rewards.push(r);
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

pub fn ids(kind: EnvKind) -> Vec<String> {
    (0..kind.players()).map(|p| format!("seat{p}")).collect()
}

/// One game with the given agents in seat order.
pub fn play(kind: EnvKind, seed: u64, agents: &mut [&mut dyn Agent]) -> GameResult {
    play_game(
        kind,
        seed,
        seed ^ 0x5eed,
        agents,
        &ids(kind),
        PlayOptions::new(kind),
    )
    .expect("game runs")
}
