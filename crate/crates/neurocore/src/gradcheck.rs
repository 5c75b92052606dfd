//! Central finite-difference checks of the analytic gradients.
//!
//! [`relative_error`] compares two gradients elementwise as
//! `|a - n| / max(|a|, |n|, FLOOR)`; the floor keeps round-off in gradients
//! that are numerically zero from dominating the ratio.

use rand::Rng;
use serde::Serialize;

use crate::graph::{Graph, NodeId};
use crate::layers::{Activation, Dense, GruCell, Mlp, Parameterized};
use crate::loss::{
    action_cross_entropy, contrastive_loss, masked_entropy, ppo_loss, PpoCoefficients,
};
use crate::rng::{stream, StreamRng};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error between the tape gradient of `loss_fn` and its
/// central difference, over every element of every tensor in `params`.
pub fn max_relative_error(
    params: &[Tensor],
    loss_fn: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId,
) -> f64 {
    let eval = |ps: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|t| g.leaf(t.clone())).collect();
        let l = loss_fn(&mut g, &ids);
        g.value(l).item()
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.leaf(t.clone())).collect();
    let l = loss_fn(&mut g, &ids);
    let grads = g.backward(l).expect("finite loss");
    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let ga = grads.get(*id);
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            work[k].data_mut()[i] = orig + STEP;
            let up = eval(&work);
            work[k].data_mut()[i] = orig - STEP;
            let down = eval(&work);
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(ga[i], numeric));
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.cases
            .iter()
            .map(|c| c.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst() < tolerance
    }
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut StreamRng) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    )
}

fn random_mask(rows: usize, cols: usize, rng: &mut StreamRng) -> Vec<bool> {
    let mut m: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(0.7)).collect();
    for r in 0..rows {
        let c = rng.gen_range(0..cols);
        m[r * cols + c] = true;
    }
    m
}

fn legal_targets(mask: &[bool], rows: usize, cols: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..rows)
        .map(|r| {
            let legal: Vec<usize> = (0..cols).filter(|&c| mask[r * cols + c]).collect();
            legal[rng.gen_range(0..legal.len())]
        })
        .collect()
}

fn mlp_case(act: Activation, rng: &mut StreamRng) -> f64 {
    let net = Mlp::new(4, &[6], 3, act, rng);
    let x = random_matrix(3, 4, 1.0, rng);
    let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
    max_relative_error(&params, &|g, p| {
        let xn = g.leaf(x.clone());
        let y = net.forward(g, p, xn);
        let sq = g.mul(y, y);
        g.mean(sq)
    })
}

fn gru_case(rng: &mut StreamRng) -> f64 {
    let cell = GruCell::new(3, 4, rng);
    let xs: Vec<Tensor> = (0..3).map(|_| random_matrix(2, 3, 1.0, rng)).collect();
    let h0 = random_matrix(2, 4, 0.5, rng);
    let params: Vec<Tensor> = cell.parameters().into_iter().cloned().collect();
    max_relative_error(&params, &|g, p| {
        let mut h = g.leaf(h0.clone());
        for x in &xs {
            let xn = g.leaf(x.clone());
            h = cell.step(g, p, xn, h);
        }
        g.sum(h)
    })
}

fn stacked_gru_head_case(rng: &mut StreamRng) -> f64 {
    let l1 = GruCell::new(3, 4, rng);
    let l2 = GruCell::new(4, 4, rng);
    let head = Dense::new(4, 5, Activation::Identity, rng);
    let xs: Vec<Tensor> = (0..3).map(|_| random_matrix(2, 3, 1.0, rng)).collect();
    let mask = random_mask(2, 5, rng);
    let targets = legal_targets(&mask, 2, 5, rng);
    let mut params: Vec<Tensor> = l1.parameters().into_iter().cloned().collect();
    params.extend(l2.parameters().into_iter().cloned());
    params.extend(head.parameters().into_iter().cloned());
    max_relative_error(&params, &|g, p| {
        let mut h1 = g.leaf(Tensor::zeros(vec![2, 4]));
        let mut h2 = g.leaf(Tensor::zeros(vec![2, 4]));
        for x in &xs {
            let xn = g.leaf(x.clone());
            h1 = l1.step(g, &p[0..9], xn, h1);
            h2 = l2.step(g, &p[9..18], h1, h2);
        }
        let logits = head.forward(g, &p[18..20], h2);
        action_cross_entropy(g, logits, mask.clone(), &targets)
    })
}

fn xent_case(rng: &mut StreamRng) -> f64 {
    let layer = Dense::new(4, 6, Activation::Identity, rng);
    let x = random_matrix(3, 4, 1.0, rng);
    let mask = random_mask(3, 6, rng);
    let targets = legal_targets(&mask, 3, 6, rng);
    let params: Vec<Tensor> = layer.parameters().into_iter().cloned().collect();
    max_relative_error(&params, &|g, p| {
        let xn = g.leaf(x.clone());
        let logits = layer.forward(g, p, xn);
        action_cross_entropy(g, logits, mask.clone(), &targets)
    })
}

fn contrastive_case(rng: &mut StreamRng) -> f64 {
    let layer = Dense::new(5, 4, Activation::Tanh, rng);
    let x = random_matrix(6, 5, 1.0, rng);
    let labels = [0, 0, 0, 1, 1, 1];
    let params: Vec<Tensor> = layer.parameters().into_iter().cloned().collect();
    let t = rng.gen_range(0.1..1.0);
    max_relative_error(&params, &|g, p| {
        let xn = g.leaf(x.clone());
        let z = layer.forward(g, p, xn);
        let zn = g.row_normalize(z);
        contrastive_loss(g, zn, &labels, t).expect("valid batch")
    })
}

fn ppo_case(rng: &mut StreamRng) -> f64 {
    let actor = Mlp::new(3, &[5], 4, Activation::Tanh, rng);
    let critic = Mlp::new(3, &[5], 1, Activation::Tanh, rng);
    let b = 4;
    let x = random_matrix(b, 3, 1.0, rng);
    let mask = random_mask(b, 4, rng);
    let actions = legal_targets(&mask, b, 4, rng);
    let old: Vec<f64> = (0..b).map(|_| rng.gen_range(-2.0..-0.3)).collect();
    let adv: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ret: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let coef = PpoCoefficients {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let mut params: Vec<Tensor> = actor.parameters().into_iter().cloned().collect();
    params.extend(critic.parameters().into_iter().cloned());
    max_relative_error(&params, &|g, p| {
        let xn = g.leaf(x.clone());
        let logits = actor.forward(g, &p[0..4], xn);
        let lp = g.masked_log_softmax(logits, mask.clone());
        let probs = g.masked_softmax(logits, mask.clone());
        let ent = masked_entropy(g, probs, lp);
        let new_lp = g.gather(lp, actions.clone());
        let v = critic.forward(g, &p[4..8], xn);
        let v = g.gather(v, vec![0; b]);
        ppo_loss(g, new_lp, &old, &adv, v, &ret, ent, coef).total
    })
}

fn td_case(rng: &mut StreamRng) -> f64 {
    let q = Mlp::new(3, &[5], 4, Activation::Relu, rng);
    let b = 5;
    let x = random_matrix(b, 3, 1.0, rng);
    let actions: Vec<usize> = (0..b).map(|_| rng.gen_range(0..4)).collect();
    let targets: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..b).map(|_| rng.gen_range(0.1..1.0)).collect();
    let params: Vec<Tensor> = q.parameters().into_iter().cloned().collect();
    max_relative_error(&params, &|g, p| {
        let xn = g.leaf(x.clone());
        let qs = q.forward(g, p, xn);
        let picked = g.gather(qs, actions.clone());
        let tn = g.leaf(Tensor::vector(targets.clone()));
        let wn = g.leaf(Tensor::vector(weights.clone()));
        let d = g.sub(picked, tn);
        let sq = g.mul(d, d);
        let w = g.mul(sq, wn);
        g.mean(w)
    })
}

fn local_policy_case(rng: &mut StreamRng) -> f64 {
    let net = Mlp::new(7, &[5], 3, Activation::Tanh, rng);
    let z = random_matrix(2, 4, 1.0, rng);
    let s = random_matrix(2, 3, 1.0, rng);
    let mask = random_mask(2, 3, rng);
    let targets = legal_targets(&mask, 2, 3, rng);
    let mut params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
    params.push(z.clone());
    max_relative_error(&params, &|g, p| {
        let sn = g.leaf(s.clone());
        let input = g.concat_cols(p[4], sn);
        let logits = net.forward(g, &p[0..4], input);
        action_cross_entropy(g, logits, mask.clone(), &targets)
    })
}

/// Runs `cases_per_kind` random parameterisations of every layer and loss
/// combination used by the agents.
pub fn run_suite(cases_per_kind: usize, seed: u64) -> GradcheckReport {
    type Case = fn(&mut StreamRng) -> f64;
    let kinds: [(&'static str, Case); 11] = [
        ("dense_tanh", |r| mlp_case(Activation::Tanh, r)),
        ("dense_relu", |r| mlp_case(Activation::Relu, r)),
        ("dense_sigmoid", |r| mlp_case(Activation::Sigmoid, r)),
        ("dense_identity", |r| mlp_case(Activation::Identity, r)),
        ("gru_sequence", gru_case),
        ("stacked_gru_action_head", stacked_gru_head_case),
        ("masked_cross_entropy", xent_case),
        ("contrastive", contrastive_case),
        ("ppo_actor_critic", ppo_case),
        ("double_q_td", td_case),
        ("concat_local_policy", local_policy_case),
    ];
    let cases = kinds
        .iter()
        .enumerate()
        .map(|(k, (name, f))| {
            let mut rng = stream(seed, &[k as u64]);
            let worst = (0..cases_per_kind).map(|_| f(&mut rng)).fold(0.0, f64::max);
            CaseReport {
                name,
                cases: cases_per_kind,
                max_relative_error: worst,
            }
        })
        .collect();
    GradcheckReport { cases }
}
