//! Contrastive strategy prediction: one recurrent model per opponent.
//!
//! Every opponent turn contributes a pair (public observation, action) to
//! that opponent's [`SequenceBuffer`]. A window is the `L` most recent
//! pairs of one segment (a duel, or one match of the card game), left
//! padded with all-zero steps. Step `k` of a window feeds the network the
//! public observation `s_k` concatenated with a one-hot of the action the
//! opponent took at `s_{k-1}` (zero for the first step of a segment); the
//! target of the window is the action taken at its final state.
//!
//! The network runs two stacked GRU layers over the window, maps the last
//! hidden state through a tanh dense layer to the 16-value entangled
//! representation `z`, and predicts the action with a masked softmax over
//! the actions legal in the final public observation.
//!
//! Training minimises a supervised contrastive loss on the row-normalised
//! representations of genuine windows (this opponent) and scrambled ones
//! (other windows with their time order permuted) plus the cross-entropy of
//! the action head on the genuine windows.

use std::collections::VecDeque;

use envs::EnvKind;
use neurocore::{
    contrastive_loss, loss::action_cross_entropy, masked_argmax, masked_softmax, Activation,
    AdamState, Dense, Graph, GruCell, LayerSpec, NodeId, Parameterized, StreamRng, Tensor,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WinneError};

pub const EMBEDDING: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CspConfig {
    pub window: usize,
    pub capacity: usize,
    pub hidden: usize,
    pub batch: usize,
    pub temperature: f64,
    pub lr: f64,
    /// Weight of the action cross-entropy relative to the contrastive term.
    pub action_weight: f64,
    /// Windows required before training starts.
    pub min_windows: usize,
    /// Training steps, each on a freshly drawn batch, per observed turn.
    pub steps_per_observation: usize,
}

impl CspConfig {
    pub fn preset(kind: EnvKind) -> Self {
        Self {
            window: 5,
            capacity: 2048,
            hidden: match kind {
                EnvKind::Duel => 16,
                EnvKind::Card => 32,
            },
            batch: 16,
            temperature: 0.1,
            lr: 0.01,
            action_weight: 1.0,
            min_windows: 16,
            steps_per_observation: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspNetwork {
    pub gru1: GruCell,
    pub gru2: GruCell,
    pub head: Dense,
    pub action: Dense,
}

impl Parameterized for CspNetwork {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.gru1.parameters();
        p.extend(self.gru2.parameters());
        p.extend(self.head.parameters());
        p.extend(self.action.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.gru1.parameters_mut();
        p.extend(self.gru2.parameters_mut());
        p.extend(self.head.parameters_mut());
        p.extend(self.action.parameters_mut());
        p
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut s = self.gru1.layer_specs();
        s.extend(self.gru2.layer_specs());
        s.extend(self.head.layer_specs());
        s.extend(self.action.layer_specs());
        s
    }
}

/// Graph nodes of a batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct CspNodes {
    pub embedding: NodeId,
    pub logits: NodeId,
}

impl CspNetwork {
    /// Random recurrent and embedding weights; the action head starts at
    /// zero so the first predictions are uniform over legal actions.
    pub fn new(step_len: usize, hidden: usize, actions: usize, rng: &mut impl Rng) -> Self {
        Self {
            gru1: GruCell::new(step_len, hidden, rng),
            gru2: GruCell::new(hidden, hidden, rng),
            head: Dense::new(hidden, EMBEDDING, Activation::Tanh, rng),
            action: Dense::zeros(EMBEDDING, actions, Activation::Identity),
        }
    }

    pub fn step_len(&self) -> usize {
        self.gru1.inputs()
    }

    pub fn actions(&self) -> usize {
        self.action.outputs()
    }

    /// `steps[k]` is the `[B, step_len]` input of time step `k`.
    pub fn forward(&self, g: &mut Graph, params: &[NodeId], steps: &[Tensor]) -> CspNodes {
        let b = steps[0].rows_cols().0;
        let h = self.gru1.hidden_size();
        let mut h1 = g.leaf(Tensor::matrix(b, h, vec![0.0; b * h]));
        let mut h2 = g.leaf(Tensor::matrix(b, h, vec![0.0; b * h]));
        for x in steps {
            let xn = g.leaf(x.clone());
            h1 = self.gru1.step(g, &params[0..9], xn, h1);
            h2 = self.gru2.step(g, &params[9..18], h1, h2);
        }
        let embedding = self.head.forward(g, &params[18..20], h2);
        let logits = self.action.forward(g, &params[20..22], embedding);
        CspNodes { embedding, logits }
    }

    /// Entangled representation and action logits of one window.
    pub fn infer(&self, window: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let h = self.gru1.hidden_size();
        let mut h1 = vec![0.0; h];
        let mut h2 = vec![0.0; h];
        for x in window {
            h1 = self.gru1.infer_step(x, &h1);
            h2 = self.gru2.infer_step(&h1, &h2);
        }
        let z = self.head.infer(&h2);
        let logits = self.action.infer(&z);
        (z, logits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub obs: Vec<f64>,
    pub action: usize,
    pub segment: u64,
}

/// Ring of observed pairs for one opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceBuffer {
    pub opponent_id: String,
    pub capacity: usize,
    pub window: usize,
    pub actions: usize,
    pairs: VecDeque<Pair>,
}

/// A window ready for the network: `L` step inputs, the public observation
/// at its final step and the action taken there.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub steps: Vec<Vec<f64>>,
    pub final_obs: Vec<f64>,
    pub target: usize,
}

impl SequenceBuffer {
    pub fn new(opponent_id: &str, capacity: usize, window: usize, actions: usize) -> Self {
        Self {
            opponent_id: opponent_id.to_string(),
            capacity,
            window,
            actions,
            pairs: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter()
    }

    /// Appends a pair, evicting the oldest once full.
    pub fn push(&mut self, obs: Vec<f64>, action: usize, segment: u64) {
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            obs,
            action,
            segment,
        });
    }

    fn step_input(&self, obs: &[f64], prev_action: Option<usize>) -> Vec<f64> {
        let mut v = Vec::with_capacity(obs.len() + self.actions);
        v.extend_from_slice(obs);
        let start = v.len();
        v.resize(start + self.actions, 0.0);
        if let Some(a) = prev_action {
            v[start + a] = 1.0;
        }
        v
    }

    /// Step inputs of the window ending at a hypothetical next observation
    /// `obs` in `segment`, built from the stored history of that segment.
    pub fn window_for(&self, obs: &[f64], segment: u64) -> Vec<Vec<f64>> {
        let history: Vec<&Pair> = self
            .pairs
            .iter()
            .rev()
            .take_while(|p| p.segment == segment)
            .take(self.window)
            .collect();
        // history[0] is the latest stored pair.
        let mut steps: Vec<Vec<f64>> = Vec::with_capacity(self.window);
        let real = history.len().min(self.window - 1);
        for k in (0..real).rev() {
            let prev = history.get(k + 1).map(|p| p.action);
            steps.push(self.step_input(&history[k].obs, prev));
        }
        steps.push(self.step_input(obs, history.first().map(|p| p.action)));
        self.pad(steps, obs.len())
    }

    fn pad(&self, steps: Vec<Vec<f64>>, obs_len: usize) -> Vec<Vec<f64>> {
        let width = obs_len + self.actions;
        let mut out = vec![vec![0.0; width]; self.window - steps.len()];
        out.extend(steps);
        out
    }

    /// Window whose target is the pair at position `i`.
    pub fn window_at(&self, i: usize) -> Window {
        let target = &self.pairs[i];
        let mut steps = Vec::with_capacity(self.window);
        let first = i.saturating_sub(self.window - 1);
        for j in first..=i {
            let p = &self.pairs[j];
            if p.segment != target.segment {
                continue;
            }
            let prev =
                (j > 0 && self.pairs[j - 1].segment == p.segment).then(|| self.pairs[j - 1].action);
            steps.push(self.step_input(&p.obs, prev));
        }
        Window {
            steps: self.pad(steps, target.obs.len()),
            final_obs: target.obs.clone(),
            target: target.action,
        }
    }

    /// Segment of every pair contributing a non-padding step to the window
    /// ending at `i`.
    pub fn window_segments(&self, i: usize) -> Vec<u64> {
        let first = i.saturating_sub(self.window - 1);
        (first..=i)
            .map(|j| self.pairs[j].segment)
            .filter(|&s| s == self.pairs[i].segment)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub windows: Vec<Window>,
    /// `true` for genuine windows of the modeled opponent.
    pub genuine: Vec<bool>,
}

fn scramble(steps: &[Vec<f64>], rng: &mut StreamRng) -> Vec<Vec<f64>> {
    // A window whose steps are all equal (e.g. fully padded) has no other
    // order; every other window is guaranteed to come back changed.
    if steps.windows(2).all(|w| w[0] == w[1]) {
        return steps.to_vec();
    }
    let mut perm: Vec<usize> = (0..steps.len()).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().any(|(i, &p)| steps[i] != steps[p]) {
            return perm.iter().map(|&p| steps[p].clone()).collect();
        }
    }
}

/// Half genuine windows (the latest plus uniform draws from `own`), half
/// scrambled windows from `others`, or from `own` when there is no other
/// opponent.
pub fn build_batch(
    own: &SequenceBuffer,
    others: &[&SequenceBuffer],
    n: usize,
    rng: &mut StreamRng,
) -> Result<ContrastiveBatch> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(WinneError::InvalidBatch(format!(
            "batch size {n} must be even and at least 2"
        )));
    }
    if own.len() < 2 {
        return Err(WinneError::InvalidBatch("need at least two windows".into()));
    }
    let half = n / 2;
    let mut windows = Vec::with_capacity(n);
    windows.push(own.window_at(own.len() - 1));
    for _ in 1..half {
        windows.push(own.window_at(rng.gen_range(0..own.len())));
    }
    let sources: Vec<&SequenceBuffer> = {
        let o: Vec<&SequenceBuffer> = others.iter().copied().filter(|b| !b.is_empty()).collect();
        if o.is_empty() {
            vec![own]
        } else {
            o
        }
    };
    for _ in 0..half {
        let src = sources[rng.gen_range(0..sources.len())];
        let mut w = src.window_at(rng.gen_range(0..src.len()));
        w.steps = scramble(&w.steps, rng);
        windows.push(w);
    }
    let genuine = (0..n).map(|i| i < half).collect();
    Ok(ContrastiveBatch { windows, genuine })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CspLoss {
    pub contrastive: f64,
    pub action_xent: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub embedding: Vec<f64>,
    pub top: usize,
    pub top_prob: f64,
}

/// Running tally of online prediction accuracy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub observed: u64,
}

impl Accuracy {
    pub fn record(&mut self, hit: bool) {
        self.observed += 1;
        self.correct += hit as u64;
    }

    pub fn value(&self) -> Option<f64> {
        (self.observed > 0).then(|| self.correct as f64 / self.observed as f64)
    }
}

/// Network, optimiser and history for one opponent.
#[derive(Debug, Clone)]
pub struct Csp {
    pub kind: EnvKind,
    pub config: CspConfig,
    pub net: CspNetwork,
    pub adam: AdamState,
    pub buffer: SequenceBuffer,
    /// Accuracy over the whole life of the model.
    pub lifetime: Accuracy,
    /// Accuracy since the last [`Csp::reset_game_accuracy`].
    pub game: Accuracy,
    pub train_steps: u64,
    pub last_loss: Option<CspLoss>,
}

impl Csp {
    pub fn new(kind: EnvKind, opponent_id: &str, config: CspConfig, rng: &mut StreamRng) -> Self {
        let actions = kind.action_count();
        let net = CspNetwork::new(kind.public_len() + actions, config.hidden, actions, rng);
        let adam = AdamState::new(&net.parameters(), config.lr);
        let buffer = SequenceBuffer::new(opponent_id, config.capacity, config.window, actions);
        Self {
            kind,
            config,
            net,
            adam,
            buffer,
            lifetime: Accuracy::default(),
            game: Accuracy::default(),
            train_steps: 0,
            last_loss: None,
        }
    }

    /// Prediction for a window whose final public observation is `final_obs`.
    pub fn predict_window(&self, window: &[Vec<f64>], final_obs: &[f64]) -> Result<Prediction> {
        let (embedding, logits) = self.net.infer(window);
        let mask = self.kind.public_mask(final_obs);
        let probs = masked_softmax(&logits, &mask)?;
        let top = masked_argmax(&probs, &mask).ok_or(neurocore::NeuroError::EmptySupport)?;
        Ok(Prediction {
            top_prob: probs[top],
            probs,
            embedding,
            top,
        })
    }

    /// Prediction of the next action at public observation `obs`.
    pub fn predict(&self, obs: &[f64], segment: u64) -> Result<Prediction> {
        let w = self.buffer.window_for(obs, segment);
        self.predict_window(&w, obs)
    }

    /// Scores the current prediction against `action`, stores the pair and
    /// trains once enough windows exist. `others` supplies
    /// negatives.
    pub fn record_observation(
        &mut self,
        obs: Vec<f64>,
        action: usize,
        segment: u64,
        others: &[&SequenceBuffer],
        rng: &mut StreamRng,
    ) -> Result<bool> {
        let hit = self.predict(&obs, segment)?.top == action;
        self.lifetime.record(hit);
        self.game.record(hit);
        self.buffer.push(obs, action, segment);
        if self.buffer.len() >= self.config.min_windows.max(2) {
            for _ in 0..self.config.steps_per_observation {
                let batch = build_batch(&self.buffer, others, self.config.batch, rng)?;
                self.train_step(&batch)?;
            }
        }
        Ok(hit)
    }

    pub fn reset_game_accuracy(&mut self) {
        self.game = Accuracy::default();
    }

    /// Loss nodes of a batch on a fresh graph.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        params: &[NodeId],
        batch: &ContrastiveBatch,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let n = batch.windows.len();
        let width = self.net.step_len();
        let steps: Vec<Tensor> = (0..self.config.window)
            .map(|k| {
                Tensor::matrix(
                    n,
                    width,
                    batch
                        .windows
                        .iter()
                        .flat_map(|w| w.steps[k].iter().copied())
                        .collect(),
                )
            })
            .collect();
        let nodes = self.net.forward(g, params, &steps);
        let normed = g.row_normalize(nodes.embedding);
        let labels: Vec<u8> = batch.genuine.iter().map(|&b| u8::from(!b)).collect();
        let con = contrastive_loss(g, normed, &labels, self.config.temperature)?;
        let genuine: Vec<usize> = (0..n).filter(|&i| batch.genuine[i]).collect();
        let start = genuine[0];
        if genuine.iter().enumerate().any(|(k, &i)| i != start + k) {
            return Err(WinneError::InvalidBatch(
                "genuine windows must be contiguous".into(),
            ));
        }
        let logits = g.slice_rows(nodes.logits, start, genuine.len());
        let mut mask = Vec::with_capacity(genuine.len() * self.net.actions());
        let mut targets = Vec::with_capacity(genuine.len());
        for &i in &genuine {
            mask.extend(self.kind.public_mask(&batch.windows[i].final_obs));
            targets.push(batch.windows[i].target);
        }
        let xent = action_cross_entropy(g, logits, mask, &targets);
        let weighted = g.scale(xent, self.config.action_weight);
        let total = g.add(con, weighted);
        Ok((total, con, xent))
    }

    /// One Adam step on the composite loss.
    pub fn train_step(&mut self, batch: &ContrastiveBatch) -> Result<CspLoss> {
        let mut g = Graph::new();
        let ids = self.net.bind(&mut g);
        let (total, con, xent) = self.loss_graph(&mut g, &ids, batch)?;
        let loss = CspLoss {
            contrastive: g.value(con).item(),
            action_xent: g.value(xent).item(),
            total: g.value(total).item(),
        };
        let grads = g.backward(total)?.collect(&ids);
        self.adam.step(self.net.parameters_mut(), &grads)?;
        self.train_steps += 1;
        self.last_loss = Some(loss);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use neurocore::stream;

    fn buffer_with(n: usize, segment_len: usize) -> SequenceBuffer {
        let mut b = SequenceBuffer::new("x", 64, 5, 6);
        for i in 0..n {
            b.push(vec![i as f64; 10], i % 6, (i / segment_len) as u64);
        }
        b
    }

    #[test]
    fn windows_are_left_padded_within_a_segment() {
        let b = buffer_with(7, 4);
        // Pair 5 is the second of segment 1.
        let w = b.window_at(5);
        assert_eq!(w.steps.len(), 5);
        assert!(w.steps[..3].iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert_eq!(w.steps[3][0], 4.0);
        assert_eq!(&w.steps[3][10..], &[0.0; 6]);
        assert_eq!(w.steps[4][0], 5.0);
        assert_eq!(w.steps[4][10 + 4], 1.0);
        assert_eq!(w.target, 5);
    }

    #[test]
    fn hypothetical_window_matches_stored_one() {
        let mut b = buffer_with(6, 100);
        let obs = vec![6.0; 10];
        let hypo = b.window_for(&obs, 0);
        b.push(obs, 0, 0);
        assert_eq!(hypo, b.window_at(6).steps);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = SequenceBuffer::new("x", 3, 5, 6);
        for i in 0..5 {
            b.push(vec![i as f64], 0, 0);
        }
        let firsts: Vec<f64> = b.pairs().map(|p| p.obs[0]).collect();
        assert_eq!(firsts, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_action_head_predicts_uniformly() {
        let mut rng = stream(1, &[]);
        let csp = Csp::new(
            EnvKind::Duel,
            "x",
            CspConfig::preset(EnvKind::Duel),
            &mut rng,
        );
        let s = envs::GameState::reset(EnvKind::Duel, 3);
        let p = csp.predict(&s.encode_public(0, 1), 0).unwrap();
        let legal = p.probs.iter().filter(|&&v| v > 0.0).count();
        for &v in p.probs.iter().filter(|&&v| v > 0.0) {
            assert!((v - 1.0 / legal as f64).abs() < 1e-12);
        }
        assert_eq!(p.embedding.len(), EMBEDDING);
    }
}
