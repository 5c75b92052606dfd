//! Deep Q-learning with a target network, double-Q targets and
//! prioritised replay.
//!
//! A transition spans two consecutive decisions of the agent: the reward is
//! everything credited in between, and the last transition of a game is
//! terminal. One minibatch update runs after every stored transition once
//! the buffer holds a full minibatch.

use neurocore::{
    clip_global_norm, masked_argmax, AdamState, Graph, Mlp, NeuroError, Parameterized, StreamRng,
    Tensor,
};
use rand::Rng;

use super::replay::{ReplayBuffer, Transition};
use super::spec::DqlSpec;
use super::{digest_values, Agent, Decision, TurnContext};
use crate::error::Result;

#[derive(Debug, Clone)]
struct Pending {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct DqlAgent {
    pub spec: DqlSpec,
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    learning: bool,
    pending: Option<Pending>,
    pub decisions: u64,
    pub updates: u64,
    pub last_loss: Option<f64>,
}

/// Target for one transition. With `double_q` the online network picks the
/// next legal action and the target network scores it; otherwise the target
/// network does both.
pub fn td_target(t: &Transition, gamma: f64, double_q: bool, online: &Mlp, target: &Mlp) -> f64 {
    if t.done || !t.next_mask.iter().any(|&m| m) {
        return t.reward;
    }
    let q_target = target.infer(&t.next_obs);
    let chooser = if double_q {
        online.infer(&t.next_obs)
    } else {
        q_target.clone()
    };
    let a = masked_argmax(&chooser, &t.next_mask).expect("non-empty mask");
    t.reward + gamma * q_target[a]
}

impl DqlAgent {
    pub fn new(spec: DqlSpec, inputs: usize, actions: usize, rng: &mut StreamRng) -> Self {
        let online = Mlp::new(inputs, &spec.layers, actions, spec.activation, rng);
        let target = online.clone();
        let adam = AdamState::new(&online.parameters(), spec.lr);
        let buffer = ReplayBuffer::new(spec.buffer_capacity, spec.prioritized, spec.per_alpha);
        Self {
            spec,
            online,
            target,
            adam,
            buffer,
            learning: true,
            pending: None,
            decisions: 0,
            updates: 0,
            last_loss: None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        let s = &self.spec;
        let frac = (self.decisions as f64 / s.epsilon_steps.max(1) as f64).min(1.0);
        s.epsilon_start + frac * (s.epsilon_end - s.epsilon_start)
    }

    pub fn beta(&self) -> f64 {
        let s = &self.spec;
        let frac = (self.updates as f64 / s.per_beta_steps.max(1) as f64).min(1.0);
        s.per_beta_start + frac * (1.0 - s.per_beta_start)
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.online.infer(obs)
    }

    fn choose(&self, obs: &[f64], mask: &[bool], rng: &mut StreamRng) -> Result<usize> {
        if self.learning && rng.gen::<f64>() < self.epsilon() {
            let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            if legal.is_empty() {
                return Err(NeuroError::EmptySupport.into());
            }
            return Ok(legal[rng.gen_range(0..legal.len())]);
        }
        Ok(masked_argmax(&self.q_values(obs), mask).ok_or(NeuroError::EmptySupport)?)
    }

    fn store(
        &mut self,
        next_obs: Vec<f64>,
        next_mask: Vec<bool>,
        done: bool,
        rng: &mut StreamRng,
    ) -> Result<()> {
        if let Some(p) = self.pending.take() {
            self.buffer.push(Transition {
                obs: p.obs,
                action: p.action,
                reward: p.reward,
                next_obs,
                next_mask,
                done,
            });
            if self.buffer.len() >= self.spec.batch_size {
                self.train_step(rng)?;
            }
        }
        Ok(())
    }

    /// One importance-weighted minibatch step on the squared TD error.
    pub fn train_step(&mut self, rng: &mut StreamRng) -> Result<f64> {
        let sample = self.buffer.sample(self.spec.batch_size, self.beta(), rng);
        let b = sample.indices.len();
        let rows: Vec<&Transition> = sample.indices.iter().map(|&i| self.buffer.get(i)).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|t| {
                td_target(
                    t,
                    self.spec.gamma,
                    self.spec.double_q,
                    &self.online,
                    &self.target,
                )
            })
            .collect();
        let inputs = self.online.inputs();
        let x = Tensor::matrix(
            b,
            inputs,
            rows.iter().flat_map(|t| t.obs.iter().copied()).collect(),
        );
        let actions: Vec<usize> = rows.iter().map(|t| t.action).collect();

        let mut g = Graph::new();
        let ids = self.online.bind(&mut g);
        let xn = g.leaf(x);
        let q = self.online.forward(&mut g, &ids, xn);
        let q_sa = g.gather(q, actions);
        let yn = g.leaf(Tensor::vector(y));
        let err = g.sub(yn, q_sa);
        let td: Vec<f64> = g.value(err).data().to_vec();
        let sq = g.mul(err, err);
        let w = g.leaf(Tensor::vector(sample.weights.clone()));
        let wsq = g.mul(sq, w);
        let loss = g.mean(wsq);
        let loss_value = g.value(loss).item();
        let mut grads = g.backward(loss)?.collect(&ids);
        if let Some(max) = self.spec.max_grad_norm {
            clip_global_norm(&mut grads, max);
        }
        self.adam.step(self.online.parameters_mut(), &grads)?;
        if self.spec.prioritized {
            for (&i, d) in sample.indices.iter().zip(&td) {
                self.buffer.update_priority(i, *d);
            }
        }
        self.updates += 1;
        if self.updates.is_multiple_of(self.spec.target_update.max(1)) {
            self.target = self.online.clone();
        }
        self.last_loss = Some(loss_value);
        Ok(loss_value)
    }

    pub fn digest(&self) -> String {
        digest_values(&self.online.flat_parameters())
    }
}

impl Agent for DqlAgent {
    fn label(&self) -> String {
        "dql".into()
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let obs = ctx.observation();
        let mask = ctx.mask()?;
        let action = self.choose(&obs, &mask, rng)?;
        if self.learning {
            self.store(obs.clone(), mask, false, rng)?;
            self.pending = Some(Pending {
                obs,
                action,
                reward: 0.0,
            });
            self.decisions += 1;
        }
        Ok(Decision::plain(action))
    }

    fn reward(&mut self, r: f64) {
        if let Some(p) = self.pending.as_mut() {
            p.reward += r;
        }
    }

    fn end_game(&mut self, rng: &mut StreamRng) -> Result<()> {
        let width = self.online.inputs();
        let actions = self.online.outputs();
        self.store(vec![0.0; width], vec![false; actions], true, rng)
    }

    fn is_learning(&self) -> bool {
        self.learning
    }

    fn set_learning(&mut self, on: bool) {
        self.learning = on;
        if !on {
            self.pending = None;
        }
    }

    fn param_digest(&self) -> String {
        self.digest()
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use envs::EnvKind;
    use neurocore::stream;

    fn tiny() -> DqlSpec {
        DqlSpec {
            layers: vec![8],
            batch_size: 4,
            buffer_capacity: 64,
            epsilon_steps: 10,
            ..DqlSpec::preset(EnvKind::Duel)
        }
    }

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let mut rng = stream(2, &[]);
        let mut a = DqlAgent::new(tiny(), 2, 2, &mut rng);
        assert_eq!(a.epsilon(), 1.0);
        a.decisions = 5;
        assert!((a.epsilon() - 0.525).abs() < 1e-12);
        a.decisions = 1000;
        assert!((a.epsilon() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn terminal_target_is_the_reward() {
        let mut rng = stream(2, &[]);
        let a = DqlAgent::new(tiny(), 2, 2, &mut rng);
        let t = Transition {
            obs: vec![0.0; 2],
            action: 0,
            reward: 0.7,
            next_obs: vec![1.0; 2],
            next_mask: vec![true, true],
            done: true,
        };
        assert_eq!(td_target(&t, 0.9, true, &a.online, &a.target), 0.7);
    }

    #[test]
    fn learns_a_one_step_bandit() {
        let mut rng = stream(5, &[]);
        let mut a = DqlAgent::new(tiny(), 1, 2, &mut rng);
        for k in 0..200 {
            let action = k % 2;
            a.buffer.push(Transition {
                obs: vec![1.0],
                action,
                reward: if action == 1 { 1.0 } else { 0.0 },
                next_obs: vec![0.0],
                next_mask: vec![false, false],
                done: true,
            });
        }
        for _ in 0..300 {
            a.train_step(&mut rng).unwrap();
        }
        let q = a.q_values(&[1.0]);
        assert!((q[1] - 1.0).abs() < 0.1 && q[0].abs() < 0.1, "{q:?}");
    }
}
