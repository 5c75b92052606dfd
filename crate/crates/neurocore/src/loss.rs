//! Losses used by the agents: masked softmax, supervised contrastive loss,
//! the clipped PPO surrogate, double-Q targets and action cross-entropy.

use crate::error::NeuroError;
use crate::graph::{masked_logsumexp, Graph, NodeId};
use crate::tensor::Tensor;

/// Probabilities over the `true` entries of `mask`; masked entries are
/// exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NeuroError> {
    assert_eq!(
        logits.len(),
        mask.len(),
        "masked_softmax: mask length mismatch"
    );
    if !mask.iter().any(|&m| m) {
        return Err(NeuroError::EmptySupport);
    }
    let lse = masked_logsumexp(logits, mask);
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - lse).exp() } else { 0.0 })
        .collect())
}

/// Log-probabilities over legal entries; illegal entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NeuroError> {
    assert_eq!(
        logits.len(),
        mask.len(),
        "masked_log_softmax: mask length mismatch"
    );
    if !mask.iter().any(|&m| m) {
        return Err(NeuroError::EmptySupport);
    }
    let lse = masked_logsumexp(logits, mask);
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub batch_size: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            batch_size: 16,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<(), NeuroError> {
        if !(self.temperature > 0.0) {
            return Err(NeuroError::Contract(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size < 2 {
            return Err(NeuroError::Contract(
                "contrastive batch needs at least 2 elements".into(),
            ));
        }
        Ok(())
    }
}

/// `exp(z_i · z_j / t)`
pub fn contrastive_pair(z_i: &[f64], z_j: &[f64], t: f64) -> f64 {
    assert_eq!(
        z_i.len(),
        z_j.len(),
        "contrastive_pair: embedding widths differ"
    );
    let dot: f64 = z_i.iter().zip(z_j).map(|(a, b)| a * b).sum();
    (dot / t).exp()
}

/// Positive sets `P(i)` (same label, excluding `i`); fails on the first
/// anchor that has none.
fn positive_weights<L: PartialEq>(labels: &[L]) -> Result<Vec<f64>, NeuroError> {
    let n = labels.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let pos: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if pos.is_empty() {
            return Err(NeuroError::InvalidBatch { anchor: i });
        }
        let share = 1.0 / pos.len() as f64;
        for j in pos {
            w[i * n + j] = share;
        }
    }
    Ok(w)
}

/// Supervised contrastive loss over the rows of `embeddings [N,d]`:
///
/// ```text
/// L_i = -(1/|P(i)|) Σ_{j∈P(i)} log( c_ij / Σ_{a≠i} c_ia ),   c_ij = exp(z_i·z_j / t)
/// L   = Σ_i L_i
/// ```
pub fn contrastive_loss<L: PartialEq>(
    g: &mut Graph,
    embeddings: NodeId,
    labels: &[L],
    t: f64,
) -> Result<NodeId, NeuroError> {
    let (n, _) = g.value(embeddings).rows_cols();
    if n < 2 || labels.len() != n {
        return Err(NeuroError::Contract(format!(
            "contrastive loss needs >= 2 embeddings with one label each (got {n} rows, {} labels)",
            labels.len()
        )));
    }
    if !(t > 0.0) {
        return Err(NeuroError::Contract(format!(
            "temperature must be positive, got {t}"
        )));
    }
    let weights = positive_weights(labels)?;
    let sim = g.matmul_t(embeddings, embeddings);
    let logits = g.scale(sim, 1.0 / t);
    let off_diag: Vec<bool> = (0..n * n).map(|k| k / n != k % n).collect();
    let log_prob = g.masked_log_softmax(logits, off_diag);
    let w = g.leaf(Tensor::matrix(n, n, weights));
    let weighted = g.mul(log_prob, w);
    let total = g.sum(weighted);
    Ok(g.scale(total, -1.0))
}

/// Per-anchor terms `L_i` for every anchor that has at least one positive;
/// anchors without positives yield `None`.
pub fn contrastive_anchor_terms<L: PartialEq>(
    embeddings: &[Vec<f64>],
    labels: &[L],
    t: f64,
) -> Vec<Option<f64>> {
    let n = embeddings.len();
    (0..n)
        .map(|i| {
            let pos: Vec<usize> = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect();
            if pos.is_empty() {
                return None;
            }
            let logits: Vec<f64> = (0..n)
                .map(|a| {
                    embeddings[i]
                        .iter()
                        .zip(&embeddings[a])
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
                        / t
                })
                .collect();
            let mask: Vec<bool> = (0..n).map(|a| a != i).collect();
            let lse = masked_logsumexp(&logits, &mask);
            let s: f64 = pos.iter().map(|&j| logits[j] - lse).sum();
            Some(-s / pos.len() as f64)
        })
        .collect()
}

/// Convenience wrapper evaluating [`contrastive_loss`] on plain vectors.
pub fn contrastive_loss_value<L: PartialEq>(
    embeddings: &[Vec<f64>],
    labels: &[L],
    t: f64,
) -> Result<f64, NeuroError> {
    if embeddings.is_empty() {
        return Err(NeuroError::Contract("empty contrastive batch".into()));
    }
    let mut g = Graph::new();
    let e = g.leaf(Tensor::from_rows(embeddings));
    let l = contrastive_loss(&mut g, e, labels, t)?;
    Ok(g.value(l).item())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoCoefficients {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Batch PPO loss nodes; `total` is what gets differentiated.
#[derive(Debug, Clone, Copy)]
pub struct PpoLossNodes {
    pub total: NodeId,
    pub policy: NodeId,
    pub value: NodeId,
    pub entropy: NodeId,
}

/// Mean over the batch of
/// `-min(ρÂ, clip(ρ, 1-ε, 1+ε)Â) + c_v (R - V)² - c_e H`, `ρ = exp(new - old)`.
///
/// `new_logprob`, `value` and `entropy` are graph nodes (vectors of length
/// B); the remaining inputs are constants.
pub fn ppo_loss(
    g: &mut Graph,
    new_logprob: NodeId,
    old_logprob: &[f64],
    advantage: &[f64],
    value: NodeId,
    returns: &[f64],
    entropy: NodeId,
    coef: PpoCoefficients,
) -> PpoLossNodes {
    let b = old_logprob.len();
    assert!(b > 0, "ppo_loss: empty batch");
    assert!(
        advantage.len() == b && returns.len() == b,
        "ppo_loss: batch lengths differ"
    );
    let old = g.leaf(Tensor::vector(old_logprob.to_vec()));
    let adv = g.leaf(Tensor::vector(advantage.to_vec()));
    let ret = g.leaf(Tensor::vector(returns.to_vec()));
    let diff = g.sub(new_logprob, old);
    let ratio = g.exp(diff);
    let unclipped = g.mul(ratio, adv);
    let clipped_ratio = g.clamp(ratio, 1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
    let clipped = g.mul(clipped_ratio, adv);
    let surrogate = g.minimum(unclipped, clipped);
    let surrogate_mean = g.mean(surrogate);
    let policy = g.scale(surrogate_mean, -1.0);
    let err = g.sub(ret, value);
    let sq = g.mul(err, err);
    let value_loss = g.mean(sq);
    let entropy_mean = g.mean(entropy);
    let v_term = g.scale(value_loss, coef.value_coef);
    let e_term = g.scale(entropy_mean, -coef.entropy_coef);
    let pv = g.add(policy, v_term);
    let total = g.add(pv, e_term);
    PpoLossNodes {
        total,
        policy,
        value: value_loss,
        entropy: entropy_mean,
    }
}

/// Scalar form of the PPO loss for a single sample.
pub fn ppo_loss_value(
    old_logprob: f64,
    new_logprob: f64,
    advantage: f64,
    value: f64,
    return_target: f64,
    entropy: f64,
    coef: PpoCoefficients,
) -> f64 {
    let ratio = (new_logprob - old_logprob).exp();
    let clipped = ratio.clamp(1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
    let policy = -(ratio * advantage).min(clipped * advantage);
    policy + coef.value_coef * (return_target - value).powi(2) - coef.entropy_coef * entropy
}

/// Entropy of each row of a probability matrix, `-Σ p log p` over the
/// legal entries (illegal entries carry zero log-probability).
pub fn masked_entropy(g: &mut Graph, probs: NodeId, log_probs: NodeId) -> NodeId {
    let (rows, cols) = g.value(probs).rows_cols();
    let plogp = g.mul(probs, log_probs);
    let neg_ones = g.leaf(Tensor::matrix(1, cols, vec![-1.0; cols]));
    // [rows, 1] -> [rows]
    let ent = g.matmul_t(plogp, neg_ones);
    g.gather(ent, vec![0; rows])
}

/// Double-Q target: the online network picks the next action, the target
/// network evaluates it.
pub fn double_q_target(
    reward: f64,
    done: bool,
    gamma: f64,
    q_online_next: &[f64],
    q_target_next: &[f64],
) -> f64 {
    assert_eq!(
        q_online_next.len(),
        q_target_next.len(),
        "double_q_target: vector lengths differ"
    );
    if done {
        return reward;
    }
    reward + gamma * q_target_next[argmax(q_online_next)]
}

/// First index of the maximum value (ties resolve to the lowest index).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Masked argmax; `None` when no entry is legal.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Mean negative log-likelihood of `targets` under a row-wise masked
/// softmax of `logits [B,A]`.
pub fn action_cross_entropy(
    g: &mut Graph,
    logits: NodeId,
    mask: Vec<bool>,
    targets: &[usize],
) -> NodeId {
    for (r, &t) in targets.iter().enumerate() {
        let (_, cols) = g.value(logits).rows_cols();
        assert!(
            mask[r * cols + t],
            "action_cross_entropy: target {t} is masked out in row {r}"
        );
    }
    let lp = g.masked_log_softmax(logits, mask);
    let picked = g.gather(lp, targets.to_vec());
    let m = g.mean(picked);
    g.scale(m, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COEF: PpoCoefficients = PpoCoefficients {
        clip_eps: 0.2,
        value_coef: 0.0,
        entropy_coef: 0.0,
    };

    #[test]
    fn softmax_fixtures() {
        let p = masked_softmax(&[0.0, 0.0, 0.0], &[true; 3]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = masked_softmax(&[5.0, 5.0, 5.0], &[true, true, false]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
        let p = masked_softmax(&[1.0, 0.0], &[true, true]).unwrap();
        assert!((p[0] - 0.73106).abs() < 1e-5 && (p[1] - 0.26894).abs() < 1e-5);
        assert_eq!(
            masked_softmax(&[1.0, 2.0], &[false, false]),
            Err(NeuroError::EmptySupport)
        );
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = masked_softmax(&[1000.0, 999.0, -1000.0], &[true, true, true]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_fixtures() {
        assert_eq!(contrastive_pair(&[1.0, 0.0], &[0.0, 1.0], 0.3), 1.0);
        assert!((contrastive_pair(&[1.0], &[1.0], 1.0) - 2.71828).abs() < 1e-5);
        assert!((contrastive_pair(&[1.0], &[1.0], 0.5) - 7.38906).abs() < 1e-5);
    }

    #[test]
    fn anchor_terms_fixtures() {
        let same = vec![vec![0.3, 0.4]; 3];
        let terms = contrastive_anchor_terms(&same, &['A', 'A', 'B'], 1.0);
        assert!((terms[0].unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(terms[2], None);
        let z = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let terms = contrastive_anchor_terms(&z, &['A', 'A', 'B'], 1.0);
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((terms[0].unwrap() - expected).abs() < 1e-12);
        assert!((terms[0].unwrap() - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn loss_rejects_anchor_without_positive() {
        let z = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            contrastive_loss_value(&z, &['A', 'A', 'B'], 1.0),
            Err(NeuroError::InvalidBatch { anchor: 2 })
        );
    }

    #[test]
    fn ppo_policy_term_fixtures() {
        // rho = 1
        assert!((ppo_loss_value(0.0, 0.0, 2.0, 0.0, 0.0, 0.0, COEF) + 2.0).abs() < 1e-12);
        // rho = 2 clipped to 1.2
        assert!((ppo_loss_value(0.0, 2f64.ln(), 1.0, 0.0, 0.0, 0.0, COEF) + 1.2).abs() < 1e-12);
        // rho = 0.5, A = -1: min(-0.5, -0.8) = -0.8
        assert!((ppo_loss_value(0.0, 0.5f64.ln(), -1.0, 0.0, 0.0, 0.0, COEF) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ppo_graph_matches_scalar_form() {
        let coef = PpoCoefficients {
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        };
        let old = [0.1f64.ln(), 0.5f64.ln(), 0.4f64.ln()];
        let new = [0.3f64.ln(), 0.45f64.ln(), 0.2f64.ln()];
        let adv = [1.5, -0.3, 0.7];
        let val = [0.2, 0.1, -0.4];
        let ret = [1.0, 0.0, 0.5];
        let ent = [1.1, 0.9, 1.0];
        let mut g = Graph::new();
        let n = g.leaf(Tensor::vector(new.to_vec()));
        let v = g.leaf(Tensor::vector(val.to_vec()));
        let e = g.leaf(Tensor::vector(ent.to_vec()));
        let nodes = ppo_loss(&mut g, n, &old, &adv, v, &ret, e, coef);
        let expected: f64 = (0..3)
            .map(|i| ppo_loss_value(old[i], new[i], adv[i], val[i], ret[i], ent[i], coef))
            .sum::<f64>()
            / 3.0;
        assert!((g.value(nodes.total).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn double_q_fixtures() {
        assert_eq!(
            double_q_target(1.0, true, 0.98, &[0.0, 1.0], &[5.0, 5.0]),
            1.0
        );
        let t = double_q_target(0.0, false, 0.98, &[0.1, 0.2, 0.9], &[3.0, 3.0, 0.5]);
        assert!((t - 0.49).abs() < 1e-12);
        assert_eq!(
            double_q_target(0.7, false, 0.0, &[0.1, 0.2], &[4.0, 9.0]),
            0.7
        );
    }

    #[test]
    fn double_q_with_identical_networks_is_q_learning() {
        let q = [0.3, -1.2, 2.5, 2.4];
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(double_q_target(0.5, false, 0.9, &q, &q), 0.5 + 0.9 * max);
    }

    #[test]
    fn cross_entropy_of_uniform_is_log_count() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::matrix(2, 4, vec![0.0; 8]));
        let mask = vec![true, true, true, false, true, true, false, false];
        let l = action_cross_entropy(&mut g, logits, mask, &[1, 0]);
        let expected = (3f64.ln() + 2f64.ln()) / 2.0;
        assert!((g.value(l).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn masked_entropy_of_uniform_rows() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::matrix(2, 3, vec![0.0; 6]));
        let mask = vec![true, true, true, true, true, false];
        let p = g.masked_softmax(logits, mask.clone());
        let lp = g.masked_log_softmax(logits, mask);
        let h = masked_entropy(&mut g, p, lp);
        let v = g.value(h).data();
        assert!((v[0] - 3f64.ln()).abs() < 1e-12);
        assert!((v[1] - 2f64.ln()).abs() < 1e-12);
    }
}
