mod common;

use std::fs;

use envs::{EnvKind, GameState};
use neurocore::{stream, StreamRng};
use proptest::prelude::*;
use winne::agents::{
    Agent, Decision, NaiveGreedy, NaiveRandom, ObservedTurn, PpoAgent, PpoSpec, TurnContext,
};
use winne::harness::directory_digest;
use winne::winne::{n_best_vector, WinneAgent, WinneConfig};
use winne::Result;

fn agent(kind: EnvKind, config: WinneConfig, seed: u64) -> WinneAgent {
    let spec = PpoSpec {
        episodes_per_update: 1000,
        ..PpoSpec::preset(kind)
    };
    let global = PpoAgent::new(
        spec,
        kind.full_len(),
        kind.action_count(),
        &mut stream(seed, &[]),
    );
    WinneAgent::new(kind, config, global, seed)
}

/// Keeps every learned update pending so the reward streams stay visible.
fn hoarding(kind: EnvKind, aux_weight: f64) -> WinneConfig {
    let mut c = WinneConfig::preset(kind);
    c.aux_weight = aux_weight;
    c.local.episodes_per_update = 1000;
    c
}

/// Records the state each decision was made in.
#[derive(Clone)]
struct Witness {
    inner: WinneAgent,
    seen: Vec<(GameState, usize, Decision)>,
}

impl Agent for Witness {
    fn label(&self) -> String {
        self.inner.label()
    }
    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let d = self.inner.act(ctx, rng)?;
        self.seen.push((ctx.state.clone(), ctx.player, d.clone()));
        Ok(d)
    }
    fn reward(&mut self, r: f64) {
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

fn duel_games(w: &mut WinneAgent, games: u64, seed: u64) {
    for g in 0..games {
        let mut opp = NaiveGreedy;
        let mut seats: Vec<&mut dyn Agent> = vec![w, &mut opp];
        common::play(EnvKind::Duel, seed + g, &mut seats);
    }
}

#[test]
fn profiles_are_created_once_per_opponent() {
    let mut w = agent(EnvKind::Duel, WinneConfig::preset(EnvKind::Duel), 1);
    let d = w.ensure_profile("a").digest();
    assert_eq!(w.ensure_profile("a").digest(), d);
    assert_eq!(w.profiles.len(), 1);
    for k in 0..7 {
        w.ensure_profile(&format!("opp{k}"));
    }
    assert_eq!(w.profiles.len(), 8);
}

#[test]
fn fresh_local_policy_is_uniform_over_legal_actions() {
    let mut w = agent(EnvKind::Card, WinneConfig::preset(EnvKind::Card), 2);
    let state = GameState::reset(EnvKind::Card, 3);
    let mask = state.legal_actions(0).unwrap();
    let legal = mask.iter().filter(|&&b| b).count();
    let p = w.ensure_profile("x");
    let input: Vec<f64> = (0..p.local.inputs())
        .map(|i| (i as f64 * 0.37).sin())
        .collect();
    for (a, q) in p
        .local
        .probs(&input, &mask)
        .unwrap()
        .into_iter()
        .enumerate()
    {
        let expect = if mask[a] { 1.0 / legal as f64 } else { 0.0 };
        assert!((q - expect).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn n_best_keeps_the_top_mass(
        raw in prop::collection::vec(0.01f64..1.0, 2..12),
        bits in prop::collection::vec(any::<bool>(), 12),
        n in 1usize..14,
    ) {
        let k = raw.len();
        let mut mask = bits[..k].to_vec();
        mask[0] = true;
        let legal = mask.iter().filter(|&&b| b).count();
        let z: f64 = (0..k).filter(|&a| mask[a]).map(|a| raw[a]).sum();
        let probs: Vec<f64> = (0..k).map(|a| if mask[a] { raw[a] / z } else { 0.0 }).collect();
        let v = n_best_vector(&probs, &mask, n);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(v.iter().filter(|&&x| x > 0.0).count(), n.min(legal));
        prop_assert!((0..k).all(|a| mask[a] || v[a] == 0.0));
        if n >= legal {
            for a in 0..k {
                prop_assert!((v[a] - probs[a]).abs() < 1e-12);
            }
        }
        if n == 1 {
            prop_assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
        }
    }
}

#[test]
fn aux_reward_only_ever_adds_to_the_local_stream() {
    for (lambda, seed) in [(0.0, 4), (1.0, 5)] {
        let mut w = agent(EnvKind::Duel, hoarding(EnvKind::Duel, lambda), seed);
        duel_games(&mut w, 3, seed);
        let global: Vec<f64> = w
            .global
            .pending()
            .iter()
            .flatten()
            .map(|s| s.reward)
            .collect();
        let local: Vec<f64> = w.profiles["seat1"]
            .local
            .pending()
            .iter()
            .flatten()
            .map(|s| s.reward)
            .collect();
        assert_eq!(global.len(), local.len());
        assert!(!global.is_empty());
        if lambda == 0.0 {
            assert_eq!(global, local);
        } else {
            for (g, l) in global.iter().zip(&local) {
                assert!(l >= g && l - g <= lambda + 1e-12);
            }
            assert!(local.iter().sum::<f64>() > global.iter().sum::<f64>());
        }
    }
}

#[test]
fn card_decisions_consult_the_next_opponent() {
    let kind = EnvKind::Card;
    let mut w = Witness {
        inner: agent(kind, WinneConfig::preset(kind), 6),
        seen: Vec::new(),
    };
    let (mut b, mut c, mut d) = (NaiveRandom, NaiveGreedy, NaiveRandom);
    let mut seats: Vec<&mut dyn Agent> = vec![&mut w, &mut b, &mut c, &mut d];
    common::play(kind, 7, &mut seats);
    assert!(w.seen.len() > 10);
    let ids = common::ids(kind);
    for (state, me, d) in &w.seen {
        let diag = d
            .diagnostics
            .as_ref()
            .expect("full mode reports diagnostics");
        assert!((0.0..=1.0).contains(&diag.p_hat));
        let after = state.project(*me, diag.initial_action).unwrap();
        let next = if after.is_terminal() {
            None
        } else {
            after.to_act().first().copied()
        };
        match next {
            Some(p) if p != *me => assert_eq!(diag.opponent_id, ids[p]),
            _ => assert_eq!(diag.opponent_id, ids[(me + 1) % 4]),
        }
        assert_ne!(diag.opponent_id, ids[*me]);
    }
    assert_eq!(w.inner.profiles.len(), 3);
}

#[test]
fn profiles_learn_only_from_their_own_opponent() {
    let mut w = agent(EnvKind::Duel, WinneConfig::preset(EnvKind::Duel), 8);
    let idle = w.ensure_profile("idle").digest();
    duel_games(&mut w, 4, 20);
    assert_eq!(w.profiles["idle"].digest(), idle);
    assert!(w.profiles["idle"].csp.buffer.is_empty());
    assert!(w.profiles["seat1"].csp.buffer.len() > 20);
    assert!(w.profiles["seat1"].csp.train_steps > 0);
}

#[test]
fn bundles_round_trip_exactly() {
    let mut w = agent(EnvKind::Duel, WinneConfig::preset(EnvKind::Duel), 9);
    duel_games(&mut w, 3, 30);
    w.ensure_profile("never-met");
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    w.persist(first.path()).unwrap();
    let mut back = WinneAgent::load(first.path()).unwrap();
    back.persist(second.path()).unwrap();
    assert_eq!(
        directory_digest(first.path()).unwrap(),
        directory_digest(second.path()).unwrap()
    );
    assert_eq!(
        w.profiles.keys().collect::<Vec<_>>(),
        back.profiles.keys().collect::<Vec<_>>()
    );
    assert_eq!(w.param_digest(), back.param_digest());

    let state = GameState::reset(EnvKind::Duel, 99);
    let ids = common::ids(EnvKind::Duel);
    let ctx = TurnContext {
        state: &state,
        player: 0,
        seats: &ids,
    };
    let a = w.act(&ctx, &mut stream(1, &[])).unwrap();
    let b = back.act(&ctx, &mut stream(1, &[])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bundles_from_another_format_are_refused() {
    let w = agent(EnvKind::Duel, WinneConfig::preset(EnvKind::Duel), 10);
    let dir = tempfile::tempdir().unwrap();
    w.persist(dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 2");
    assert!(text.contains("\"format_version\": 2"));
    fs::write(&path, text).unwrap();
    let err = WinneAgent::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("format_version 2"), "{err}");
}
