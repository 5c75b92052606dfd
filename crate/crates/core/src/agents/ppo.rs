//! Actor-critic agent trained with the clipped PPO surrogate.
//!
//! Advantages are plain Monte-Carlo: `Â_t = R_t − V(s_t)` with
//! `R_t = Σ_k γ^k r_{t+k}` over the finished episode. Each update runs
//! `epochs` full-batch Adam steps on the collected episodes.

use neurocore::loss::{masked_entropy, ppo_loss};
use neurocore::{
    clip_global_norm, AdamState, Graph, LayerSpec, Mlp, Parameterized, PpoCoefficients, StreamRng,
    Tensor,
};
use serde::{Deserialize, Serialize};

use super::spec::PpoSpec;
use super::{digest_values, select_action, Agent, Decision, SelectMode, TurnContext};
use crate::error::{Result, WinneError};

/// Separate actor and critic networks sharing one optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Parameterized for ActorCritic {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.actor.parameters();
        p.extend(self.critic.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.actor.parameters_mut();
        p.extend(self.critic.parameters_mut());
        p
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut s = self.actor.layer_specs();
        s.extend(self.critic.layer_specs());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoStep {
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub logp: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub spec: PpoSpec,
    pub net: ActorCritic,
    pub adam: AdamState,
    learning: bool,
    /// Selection rule while not learning.
    pub frozen_mode: SelectMode,
    episode: Vec<PpoStep>,
    finished: Vec<Vec<PpoStep>>,
    pub updates: u64,
}

/// Discounted returns of one episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

impl PpoAgent {
    pub fn new(spec: PpoSpec, inputs: usize, actions: usize, rng: &mut StreamRng) -> Self {
        let actor = Mlp::new(inputs, &spec.layers, actions, spec.activation, rng);
        let critic = Mlp::new(inputs, &spec.layers, 1, spec.activation, rng);
        let net = ActorCritic { actor, critic };
        let adam = AdamState::new(&net.parameters(), spec.lr);
        Self {
            spec,
            net,
            adam,
            learning: true,
            frozen_mode: SelectMode::Greedy,
            episode: Vec::new(),
            finished: Vec::new(),
            updates: 0,
        }
    }

    pub fn inputs(&self) -> usize {
        self.net.actor.inputs()
    }

    pub fn actions(&self) -> usize {
        self.net.actor.outputs()
    }

    pub fn logits(&self, obs: &[f64]) -> Vec<f64> {
        self.net.actor.infer(obs)
    }

    pub fn probs(&self, obs: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        Ok(neurocore::masked_softmax(&self.logits(obs), mask)?)
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.net.critic.infer(obs)[0]
    }

    /// Samples while learning and uses `frozen_mode` otherwise.
    pub fn choose(&self, obs: &[f64], mask: &[bool], rng: &mut StreamRng) -> Result<(usize, f64)> {
        let mode = if self.learning {
            SelectMode::Sample
        } else {
            self.frozen_mode
        };
        select_action(&self.logits(obs), mask, mode, rng)
    }

    /// Appends a decision to the open episode (ignored when frozen).
    pub fn record(&mut self, obs: Vec<f64>, mask: Vec<bool>, action: usize, logp: f64) {
        if self.learning {
            self.episode.push(PpoStep {
                obs,
                mask,
                action,
                logp,
                reward: 0.0,
            });
        }
    }

    /// Credits `r` to the latest recorded decision.
    pub fn add_reward(&mut self, r: f64) {
        if let Some(last) = self.episode.last_mut() {
            last.reward += r;
        }
    }

    pub fn episode(&self) -> &[PpoStep] {
        &self.episode
    }

    /// Finished episodes waiting for the next update.
    pub fn pending(&self) -> &[Vec<PpoStep>] {
        &self.finished
    }

    pub fn set_pending(&mut self, episodes: Vec<Vec<PpoStep>>) {
        self.finished = episodes;
    }

    /// Closes the open episode and, once `episodes_per_update` episodes
    /// are waiting, runs one update on them.
    pub fn finish_episode(&mut self) -> Result<Option<PpoStats>> {
        let ep = std::mem::take(&mut self.episode);
        if !self.learning || ep.is_empty() {
            return Ok(None);
        }
        self.finished.push(ep);
        if self.finished.len() < self.spec.episodes_per_update.max(1) {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.finished);
        self.update(&batch).map(Some)
    }

    /// Runs `epochs` Adam steps on the PPO loss over every step of the
    /// given complete episodes. Statistics are those of the first epoch.
    pub fn update(&mut self, episodes: &[Vec<PpoStep>]) -> Result<PpoStats> {
        let steps: Vec<&PpoStep> = episodes.iter().flatten().collect();
        if steps.is_empty() {
            return Err(WinneError::InvalidBatch(
                "PPO update needs at least one step".into(),
            ));
        }
        let mut returns = Vec::with_capacity(steps.len());
        for ep in episodes {
            let r: Vec<f64> = ep.iter().map(|s| s.reward).collect();
            returns.extend(discounted_returns(&r, self.spec.gamma));
        }
        let mut advantages: Vec<f64> = steps
            .iter()
            .zip(&returns)
            .map(|(s, r)| r - self.value(&s.obs))
            .collect();
        if self.spec.normalize_advantages && advantages.len() > 1 {
            let n = advantages.len() as f64;
            let mean = advantages.iter().sum::<f64>() / n;
            let sd = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            for a in &mut advantages {
                *a = (*a - mean) / (sd + 1e-8);
            }
        }
        let b = steps.len();
        let inputs = self.inputs();
        let x = Tensor::matrix(
            b,
            inputs,
            steps.iter().flat_map(|s| s.obs.iter().copied()).collect(),
        );
        let mask: Vec<bool> = steps.iter().flat_map(|s| s.mask.iter().copied()).collect();
        let actions: Vec<usize> = steps.iter().map(|s| s.action).collect();
        let old: Vec<f64> = steps.iter().map(|s| s.logp).collect();
        let coef = PpoCoefficients {
            clip_eps: self.spec.clip_eps,
            value_coef: self.spec.value_coef,
            entropy_coef: self.spec.entropy_coef,
        };
        let n_actor = self.net.actor.parameters().len();
        let mut first = None;
        for _ in 0..self.spec.epochs.max(1) {
            let mut g = Graph::new();
            let ids = self.net.bind(&mut g);
            let xn = g.leaf(x.clone());
            let logits = self.net.actor.forward(&mut g, &ids[..n_actor], xn);
            let lp = g.masked_log_softmax(logits, mask.clone());
            let probs = g.masked_softmax(logits, mask.clone());
            let ent = masked_entropy(&mut g, probs, lp);
            let new_lp = g.gather(lp, actions.clone());
            let v = self.net.critic.forward(&mut g, &ids[n_actor..], xn);
            let v = g.gather(v, vec![0; b]);
            let nodes = ppo_loss(&mut g, new_lp, &old, &advantages, v, &returns, ent, coef);
            if first.is_none() {
                first = Some(PpoStats {
                    policy: g.value(nodes.policy).item(),
                    value: g.value(nodes.value).item(),
                    entropy: g.value(nodes.entropy).item(),
                    total: g.value(nodes.total).item(),
                    samples: b,
                });
            }
            let mut grads = g.backward(nodes.total)?.collect(&ids);
            if let Some(max) = self.spec.max_grad_norm {
                clip_global_norm(&mut grads, max);
            }
            self.adam.step(self.net.parameters_mut(), &grads)?;
        }
        self.updates += 1;
        Ok(first.expect("at least one epoch"))
    }

    pub fn digest(&self) -> String {
        digest_values(&self.net.flat_parameters())
    }
}

impl Agent for PpoAgent {
    fn label(&self) -> String {
        "ppo".into()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let obs = ctx.observation();
        let mask = ctx.mask()?;
        let (a, logp) = self.choose(&obs, &mask, rng)?;
        self.record(obs, mask, a, logp);
        Ok(Decision::plain(a))
    }

    fn reward(&mut self, r: f64) {
        self.add_reward(r);
    }

    fn end_game(&mut self, _rng: &mut StreamRng) -> Result<()> {
        self.finish_episode().map(|_| ())
    }

    fn is_learning(&self) -> bool {
        self.learning
    }

    fn set_learning(&mut self, on: bool) {
        self.learning = on;
        if !on {
            self.episode.clear();
            self.finished.clear();
        }
    }

    fn param_digest(&self) -> String {
        self.digest()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
