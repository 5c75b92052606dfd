mod common;

use common::{play, Checked};
use envs::{EnvKind, GameState};
use neurocore::stream;
use proptest::prelude::*;
use winne::agents::replay::Transition;
use winne::agents::training::{train_offline, Algorithm, Learner, OfflineMode};
use winne::agents::{
    select_action, Agent, DqlAgent, DqlSpec, NaiveGreedy, NaiveRandom, PpoAgent, PpoSpec,
    SelectMode, TurnContext,
};

#[test]
fn naive_random_is_uniform_over_legal_actions() {
    let state = GameState::reset(EnvKind::Duel, 3);
    let seats = common::ids(EnvKind::Duel);
    let ctx = TurnContext {
        state: &state,
        player: 0,
        seats: &seats,
    };
    let mask = ctx.mask().unwrap();
    let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
    assert_eq!(legal.len(), 6);
    let mut counts = [0u32; 6];
    let mut rng = stream(11, &[]);
    let n = 10_000;
    for _ in 0..n {
        counts[NaiveRandom.act(&ctx, &mut rng).unwrap().action] += 1;
    }
    let p = 1.0 / 6.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

proptest! {
    #[test]
    fn selected_actions_are_legal(
        logits in prop::collection::vec(-20.0f64..20.0, 1..40),
        bits in prop::collection::vec(any::<bool>(), 40),
        pick in any::<prop::sample::Index>(),
        seed in any::<u64>(),
    ) {
        let n = logits.len();
        let mut mask: Vec<bool> = bits[..n].to_vec();
        mask[pick.index(n)] = true;
        let mut rng = stream(seed, &[]);
        for mode in [SelectMode::Greedy, SelectMode::Sample] {
            let (a, logp) = select_action(&logits, &mask, mode, &mut rng).unwrap();
            prop_assert!(mask[a]);
            prop_assert!(logp <= 0.0 && logp.is_finite());
        }
        let empty = vec![false; n];
        prop_assert!(select_action(&logits, &empty, SelectMode::Sample, &mut rng).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn learners_only_take_legal_actions(seed in any::<u64>(), card in any::<bool>()) {
        let kind = if card { EnvKind::Card } else { EnvKind::Duel };
        let mut ppo = Checked::new(Learner::fresh(Algorithm::Ppo, kind, seed));
        let mut dql = Checked::new(Learner::fresh(Algorithm::Dql, kind, seed ^ 1));
        let mut greedy = Checked::new(NaiveGreedy);
        let mut random = Checked::new(NaiveRandom);
        let mut seats: Vec<&mut dyn Agent> = vec![&mut ppo, &mut dql, &mut greedy, &mut random];
        seats.truncate(kind.players());
        let r = play(kind, seed, &mut seats);
        prop_assert!(!r.truncated);
    }
}

/// Two-state chain: in `s0` action 0 moves to `s1` and action 1 ends the
/// episode with nothing; in `s1` action 0 ends it with reward 1 and action 1
/// with nothing.
fn chain_transitions() -> Vec<Transition> {
    let s0 = vec![1.0, 0.0];
    let s1 = vec![0.0, 1.0];
    let t = |obs: &Vec<f64>, action, reward, next: &Vec<f64>, done| Transition {
        obs: obs.clone(),
        action,
        reward,
        next_obs: next.clone(),
        next_mask: vec![true, true],
        done,
    };
    vec![
        t(&s0, 0, 0.0, &s1, false),
        t(&s0, 1, 0.0, &s0, true),
        t(&s1, 0, 1.0, &s0, true),
        t(&s1, 1, 0.0, &s0, true),
    ]
}

/// Value iteration on the chain above.
fn chain_oracle(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..100 {
        let v1 = q[1][0].max(q[1][1]);
        q = [[gamma * v1, 0.0], [1.0, 0.0]];
    }
    q
}

fn chain_agent(seed: u64) -> DqlAgent {
    let spec = DqlSpec {
        lr: 0.001,
        ..DqlSpec::preset(EnvKind::Duel)
    };
    let mut a = DqlAgent::new(spec, 2, 2, &mut stream(seed, &[]));
    for _ in 0..8 {
        for t in chain_transitions() {
            a.buffer.push(t);
        }
    }
    a
}

#[test]
fn double_q_learns_the_chain_value() {
    let oracle = chain_oracle(0.95);
    assert!((oracle[0][0] - 0.95).abs() < 1e-12);
    let mut a = chain_agent(5);
    let mut rng = stream(6, &[]);
    for _ in 0..5000 {
        a.train_step(&mut rng).unwrap();
    }
    let q0 = a.q_values(&[1.0, 0.0]);
    let q1 = a.q_values(&[0.0, 1.0]);
    assert!((q0[0] - oracle[0][0]).abs() < 0.05, "Q(s0) {q0:?}");
    assert!((q1[0] - oracle[1][0]).abs() < 0.05, "Q(s1) {q1:?}");
    assert!(q0[0] > q0[1] && q1[0] > q1[1]);
}

#[test]
fn chain_greedy_return_trends_upward() {
    let mut a = chain_agent(9);
    let mut rng = stream(10, &[]);
    // Greedy return of the chain policy, sampled after every 10 updates.
    let mut returns = Vec::new();
    for _ in 0..300 {
        for _ in 0..10 {
            a.train_step(&mut rng).unwrap();
        }
        let go = a.q_values(&[1.0, 0.0]);
        let finish = a.q_values(&[0.0, 1.0]);
        returns.push(f64::from(go[0] > go[1] && finish[0] > finish[1]));
    }
    let means: Vec<f64> = returns
        .chunks(100)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] >= w[0], "{means:?}");
    }
}

#[test]
fn target_network_moves_only_every_500_updates() {
    let mut a = chain_agent(1);
    let mut rng = stream(2, &[]);
    let mut last = a.target.clone();
    for k in 1..=1200u64 {
        a.train_step(&mut rng).unwrap();
        let changed = a.target != last;
        assert_eq!(changed, k % 500 == 0, "update {k}");
        last = a.target.clone();
    }
}

fn bandit_agent(spec: PpoSpec, seed: u64) -> PpoAgent {
    PpoAgent::new(spec, 1, 2, &mut stream(seed, &[]))
}

#[test]
fn value_head_matches_a_constant_return() {
    let spec = PpoSpec {
        lr: 0.01,
        ..PpoSpec::preset(EnvKind::Duel)
    };
    let mut a = bandit_agent(spec, 3);
    let mut rng = stream(4, &[]);
    for _ in 0..300 {
        // Two-step episodes paying 0.5 each: the return from the first
        // step is 0.5 + γ·0.5.
        for _ in 0..2 {
            let (act, logp) = a.choose(&[1.0], &[true, true], &mut rng).unwrap();
            a.record(vec![1.0], vec![true, true], act, logp);
            a.add_reward(0.5);
        }
        a.finish_episode().unwrap();
    }
    // Both steps share one observation, so the value fits their mean.
    let truth = (0.5 + a.spec.gamma * 0.5 + 0.5) / 2.0;
    assert!(
        (a.value(&[1.0]) - truth).abs() < 0.05,
        "{} vs {truth}",
        a.value(&[1.0])
    );
}

#[test]
fn bandit_reward_trends_upward() {
    let spec = PpoSpec {
        lr: 0.01,
        ..PpoSpec::preset(EnvKind::Duel)
    };
    let mut a = bandit_agent(spec, 7);
    let mut rng = stream(8, &[]);
    let mut rewards = Vec::new();
    for _ in 0..600 {
        let (act, logp) = a.choose(&[1.0], &[true, true], &mut rng).unwrap();
        a.record(vec![1.0], vec![true, true], act, logp);
        let r = if act == 0 { 1.0 } else { 0.0 };
        a.add_reward(r);
        a.finish_episode().unwrap();
        rewards.push(r);
    }
    let means: Vec<f64> = rewards
        .chunks(100)
        .map(|c| c.iter().sum::<f64>() / 100.0)
        .collect();
    assert!(means.last().unwrap() > &0.95, "{means:?}");
    // Trend, not strict monotonicity: sampling noise is allowed one
    // percentage point per window.
    for w in means.windows(2) {
        assert!(w[1] >= w[0] - 0.01, "{means:?}");
    }
}

#[test]
fn self_play_pool_snapshots_never_change() {
    let (_, report) = train_offline(
        Learner::fresh(Algorithm::Ppo, EnvKind::Duel, 2),
        EnvKind::Duel,
        OfflineMode::SelfPlay {
            generations: 3,
            segments: 4,
        },
        20,
        3,
    )
    .unwrap();
    assert_eq!(report.pool_sizes, vec![5, 7, 9]);
    for w in report.pool_digests.windows(2) {
        assert_eq!(&w[1][..w[0].len()], &w[0][..]);
    }
}

#[test]
fn frozen_learners_do_not_change_in_play() {
    for alg in [Algorithm::Ppo, Algorithm::Dql] {
        let mut frozen = Learner::fresh(alg, EnvKind::Duel, 4).frozen();
        let mut live = Learner::fresh(alg, EnvKind::Duel, 5);
        let (before_frozen, before_live) = (frozen.param_digest(), live.param_digest());
        for g in 0..40 {
            let mut seats: Vec<&mut dyn Agent> = vec![&mut frozen, &mut live];
            play(EnvKind::Duel, g, &mut seats);
        }
        assert_eq!(frozen.param_digest(), before_frozen, "{alg}");
        assert_ne!(live.param_digest(), before_live, "{alg}");
    }
}
