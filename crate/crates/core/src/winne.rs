//! The composite agent: a shared global policy plus, for every opponent, a
//! contrastive strategy predictor and a local policy.
//!
//! Acting runs five stages:
//!
//! 1. the global actor picks its masked argmax as the initial action;
//! 2. the initial action is projected through the environment's forward
//!    model;
//! 3. the predictor of the next opponent to act reads the projected public
//!    observation and yields its likely response and entangled
//!    representation `z`;
//! 4. the local policy of that opponent sees `z` concatenated with the
//!    global policy's n-best vector;
//! 5. the final action is sampled from the local policy over legal actions.
//!
//! The local policy is additionally paid `λ(1 − p̂)`, where `p̂` is the
//! predicted probability of the opponent's most likely response after the
//! executed action. The global policy only sees environment reward.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use envs::{EnvKind, GameState};
use neurocore::rng::label_key;
use neurocore::{masked_argmax, stream, Checkpoint, NeuroError, Parameterized, StreamRng};
use serde::{Deserialize, Serialize};

use crate::agents::ppo::PpoAgent;
use crate::agents::spec::PpoSpec;
use crate::agents::{digest_values, Agent, Decision, Diagnostics, ObservedTurn, TurnContext};
use crate::csp::{Accuracy, Csp, CspConfig, Pair, SequenceBuffer, EMBEDDING};
use crate::error::{Result, WinneError};
use crate::persist::{read_checkpoint, read_json, write_atomic, write_checkpoint, write_json};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinneMode {
    /// The full pipeline.
    Full,
    /// Ablation: the global policy alone chooses actions while the
    /// predictors keep learning.
    GlobalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinneConfig {
    pub n_best: usize,
    pub aux_weight: f64,
    pub mode: WinneMode,
    pub csp: CspConfig,
    pub local: PpoSpec,
}

impl WinneConfig {
    pub fn preset(kind: EnvKind) -> Self {
        Self {
            n_best: match kind {
                EnvKind::Duel => 3,
                EnvKind::Card => 10,
            },
            aux_weight: 1.0,
            mode: WinneMode::Full,
            csp: CspConfig::preset(kind),
            local: PpoSpec::preset(kind),
        }
    }
}

/// Renormalised probabilities of the `n` most likely legal actions (ties to
/// the lower index); every other entry is zero. `n` is clamped to the
/// number of legal actions.
pub fn n_best_vector(probs: &[f64], mask: &[bool], n: usize) -> Vec<f64> {
    let mut legal: Vec<usize> = (0..probs.len()).filter(|&a| mask[a]).collect();
    legal.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let keep = &legal[..n.max(1).min(legal.len())];
    let total: f64 = keep.iter().map(|&a| probs[a]).sum();
    let mut out = vec![0.0; probs.len()];
    for &a in keep {
        out[a] = if total > 0.0 {
            probs[a] / total
        } else {
            1.0 / keep.len() as f64
        };
    }
    out
}

/// `λ(1 − p̂)`.
pub fn compute_aux_reward(p_hat: f64, lambda: f64) -> f64 {
    lambda * (1.0 - p_hat)
}

#[derive(Debug, Clone)]
pub struct OpponentProfile {
    pub opponent_id: String,
    pub csp: Csp,
    pub local: PpoAgent,
}

impl OpponentProfile {
    pub fn new(kind: EnvKind, opponent_id: &str, config: &WinneConfig, seed: u64) -> Self {
        let mut rng = stream(seed, &[label_key(opponent_id)]);
        let csp = Csp::new(kind, opponent_id, config.csp.clone(), &mut rng);
        let mut local = PpoAgent::new(
            config.local.clone(),
            EMBEDDING + kind.action_count(),
            kind.action_count(),
            &mut rng,
        );
        local.net.actor.zero_output_layer();
        Self {
            opponent_id: opponent_id.to_string(),
            csp,
            local,
        }
    }

    pub fn digest(&self) -> String {
        let mut v = self.csp.net.flat_parameters();
        v.extend(self.local.net.flat_parameters());
        digest_values(&v)
    }
}

/// Per-decision record kept for analysis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WinneStats {
    pub decisions: u64,
    pub overrides: u64,
    pub p_hat_sum: f64,
    pub aux_sum: f64,
}

#[derive(Debug, Clone)]
pub struct WinneAgent {
    pub kind: EnvKind,
    pub config: WinneConfig,
    pub global: PpoAgent,
    pub profiles: BTreeMap<String, OpponentProfile>,
    pub games_played: u64,
    pub seed: u64,
    pub stats: WinneStats,
    learning: bool,
    last_profile: Option<String>,
    /// Ids of profiles with an open episode in the current game.
    touched: Vec<String>,
}

fn segment_of(state: &GameState, game: u64) -> u64 {
    (game << 32) | state.match_index() as u64
}

impl WinneAgent {
    pub fn new(kind: EnvKind, config: WinneConfig, global: PpoAgent, seed: u64) -> Self {
        assert_eq!(
            global.inputs(),
            kind.full_len(),
            "global policy reads the full observation"
        );
        Self {
            kind,
            config,
            global,
            profiles: BTreeMap::new(),
            games_played: 0,
            seed,
            stats: WinneStats::default(),
            learning: true,
            last_profile: None,
            touched: Vec::new(),
        }
    }

    /// Existing profile for `opponent_id`, or a freshly initialised one.
    pub fn ensure_profile(&mut self, opponent_id: &str) -> &mut OpponentProfile {
        let (kind, seed) = (self.kind, self.seed);
        let config = &self.config;
        self.profiles
            .entry(opponent_id.to_string())
            .or_insert_with(|| OpponentProfile::new(kind, opponent_id, config, seed))
    }

    fn segment(&self, state: &GameState) -> u64 {
        segment_of(state, self.games_played)
    }

    /// Seat of the opponent whose response the projection is scored
    /// against: the next player to act after the projection, or the next
    /// seat when the projection ends the match or hands the turn back.
    pub fn next_opponent(state_after: &GameState, me: usize) -> usize {
        let players = state_after.players();
        if !state_after.is_terminal() {
            if let Some(&p) = state_after.to_act().iter().find(|&&p| p != me) {
                return p;
            }
        }
        (me + 1) % players
    }

    fn predict_after(
        &mut self,
        state: &GameState,
        me: usize,
        action: usize,
        seats: &[String],
    ) -> Result<(usize, crate::csp::Prediction)> {
        let after = state.project(me, action)?;
        let opp = Self::next_opponent(&after, me);
        let obs = after.encode_public(me, opp);
        let segment = self.segment(&after);
        let profile = self.ensure_profile(&seats[opp]);
        Ok((opp, profile.csp.predict(&obs, segment)?))
    }

    pub fn digest_profiles(&self) -> BTreeMap<String, String> {
        self.profiles
            .iter()
            .map(|(k, p)| (k.clone(), p.digest()))
            .collect()
    }

    fn act_full(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let me = ctx.player;
        let obs = ctx.observation();
        let mask = ctx.mask()?;
        let global_probs = self.global.probs(&obs, &mask)?;
        let initial = masked_argmax(&global_probs, &mask).ok_or(NeuroError::EmptySupport)?;
        let (opp, pred) = self.predict_after(ctx.state, me, initial, ctx.seats)?;
        let opponent_id = ctx.seats[opp].clone();
        let mut local_in = pred.embedding.clone();
        local_in.extend(n_best_vector(&global_probs, &mask, self.config.n_best));
        let profile = self
            .profiles
            .get_mut(&opponent_id)
            .expect("profile ensured");
        let (action, local_logp) = profile.local.choose(&local_in, &mask, rng)?;
        profile
            .local
            .record(local_in, mask.clone(), action, local_logp);

        let (predicted_action, p_hat) = if action == initial {
            (pred.top, pred.top_prob)
        } else {
            let (_, p2) = self.predict_after(ctx.state, me, action, ctx.seats)?;
            (p2.top, p2.top_prob)
        };
        let aux = compute_aux_reward(p_hat, self.config.aux_weight);
        let profile = self
            .profiles
            .get_mut(&opponent_id)
            .expect("profile ensured");
        profile.local.add_reward(aux);
        self.global
            .record(obs, mask, action, global_probs[action].ln().max(-1e3));

        if self.learning && !self.touched.contains(&opponent_id) {
            self.touched.push(opponent_id.clone());
        }
        self.last_profile = Some(opponent_id.clone());
        self.stats.decisions += 1;
        self.stats.overrides += (action != initial) as u64;
        self.stats.p_hat_sum += p_hat;
        self.stats.aux_sum += aux;
        Ok(Decision {
            action,
            diagnostics: Some(Diagnostics {
                initial_action: initial,
                opponent_id,
                predicted_action,
                p_hat,
            }),
        })
    }

    fn act_global(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        let obs = ctx.observation();
        let mask = ctx.mask()?;
        let (action, logp) = self.global.choose(&obs, &mask, rng)?;
        self.global.record(obs, mask, action, logp);
        self.last_profile = None;
        self.stats.decisions += 1;
        Ok(Decision::plain(action))
    }

    /// Writes the bundle directory: `manifest.json`, `global.json`,
    /// `global_pending.json` and one directory per profile holding
    /// `csp.json`, `local.json`, `buffer.jsonl`, `stats.json` and
    /// `pending.json`. Pending files hold finished episodes that have not
    /// been trained on yet. Open episodes are not saved, so persist between
    /// games.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (i, (id, p)) in self.profiles.iter().enumerate() {
            let sub = format!("profiles/{i:04}");
            let pdir = dir.join(&sub);
            write_checkpoint(
                &pdir.join("csp.json"),
                &Checkpoint::capture("csp", &p.csp.net, Some(&p.csp.adam)),
            )?;
            write_checkpoint(
                &pdir.join("local.json"),
                &Checkpoint::capture("ppo", &p.local.net, Some(&p.local.adam)),
            )?;
            let mut jsonl = String::new();
            for pair in p.csp.buffer.pairs() {
                jsonl.push_str(&serde_json::to_string(pair)?);
                jsonl.push('\n');
            }
            write_atomic(&pdir.join("buffer.jsonl"), jsonl.as_bytes())?;
            let stats = ProfileStats {
                lifetime: p.csp.lifetime.clone(),
                game: p.csp.game.clone(),
                train_steps: p.csp.train_steps,
                local_updates: p.local.updates,
            };
            write_json(&pdir.join("stats.json"), &stats)?;
            write_json(&pdir.join("pending.json"), &p.local.pending())?;
            entries.push(ProfileEntry {
                opponent_id: id.clone(),
                dir: sub,
            });
        }
        write_checkpoint(
            &dir.join("global.json"),
            &Checkpoint::capture("ppo", &self.global.net, Some(&self.global.adam)),
        )?;
        write_json(&dir.join("global_pending.json"), &self.global.pending())?;
        let manifest = BundleManifest {
            format_version: BUNDLE_VERSION,
            env_kind: self.kind,
            config: self.config.clone(),
            global_spec: self.global.spec.clone(),
            global_updates: self.global.updates,
            games_played: self.games_played,
            seed: self.seed,
            learning: self.learning,
            stats: self.stats.clone(),
            profiles: entries,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != BUNDLE_VERSION {
            return Err(WinneError::Persist(format!(
                "bundle format_version {} is not supported (expected {BUNDLE_VERSION})",
                manifest.format_version
            )));
        }
        let kind = manifest.env_kind;
        let mut rng = stream(0, &[]);
        let mut global = PpoAgent::new(
            manifest.global_spec.clone(),
            kind.full_len(),
            kind.action_count(),
            &mut rng,
        );
        restore_ppo(&read_checkpoint(&dir.join("global.json"))?, &mut global)?;
        global.updates = manifest.global_updates;
        global.set_pending(read_json(&dir.join("global_pending.json"))?);
        let mut agent = WinneAgent::new(kind, manifest.config, global, manifest.seed);
        agent.games_played = manifest.games_played;
        agent.stats = manifest.stats;
        agent.set_learning(manifest.learning);
        for entry in &manifest.profiles {
            let pdir: PathBuf = dir.join(&entry.dir);
            let mut p = OpponentProfile::new(kind, &entry.opponent_id, &agent.config, agent.seed);
            if let Some(adam) =
                read_checkpoint(&pdir.join("csp.json"))?.restore("csp", &mut p.csp.net)?
            {
                p.csp.adam = adam;
            }
            restore_ppo(&read_checkpoint(&pdir.join("local.json"))?, &mut p.local)?;
            let text = fs::read_to_string(pdir.join("buffer.jsonl"))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let pair: Pair = serde_json::from_str(line)?;
                p.csp.buffer.push(pair.obs, pair.action, pair.segment);
            }
            let stats: ProfileStats = read_json(&pdir.join("stats.json"))?;
            p.csp.lifetime = stats.lifetime;
            p.csp.game = stats.game;
            p.csp.train_steps = stats.train_steps;
            p.local.updates = stats.local_updates;
            p.local.set_pending(read_json(&pdir.join("pending.json"))?);
            p.local.set_learning(agent.learning);
            agent.profiles.insert(entry.opponent_id.clone(), p);
        }
        Ok(agent)
    }
}

fn restore_ppo(ckpt: &Checkpoint, agent: &mut PpoAgent) -> Result<()> {
    if let Some(adam) = ckpt.restore("ppo", &mut agent.net)? {
        agent.adam = adam;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileEntry {
    opponent_id: String,
    dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileStats {
    lifetime: Accuracy,
    game: Accuracy,
    train_steps: u64,
    local_updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    format_version: u32,
    env_kind: EnvKind,
    config: WinneConfig,
    global_spec: PpoSpec,
    global_updates: u64,
    games_played: u64,
    seed: u64,
    learning: bool,
    stats: WinneStats,
    profiles: Vec<ProfileEntry>,
}

impl Agent for WinneAgent {
    fn label(&self) -> String {
        match self.config.mode {
            WinneMode::Full => "winne".into(),
            WinneMode::GlobalOnly => "winne-global-only".into(),
        }
    }

    fn act(&mut self, ctx: &TurnContext, rng: &mut StreamRng) -> Result<Decision> {
        match self.config.mode {
            WinneMode::Full => self.act_full(ctx, rng),
            WinneMode::GlobalOnly => self.act_global(ctx, rng),
        }
    }

    fn reward(&mut self, r: f64) {
        self.global.add_reward(r);
        if let Some(id) = &self.last_profile {
            if let Some(p) = self.profiles.get_mut(id) {
                p.local.add_reward(r);
            }
        }
    }

    fn observe(&mut self, turn: &ObservedTurn, rng: &mut StreamRng) -> Result<()> {
        if !self.learning {
            return Ok(());
        }
        let obs = turn.state.encode_public(turn.observer, turn.player);
        let segment = self.segment(turn.state);
        self.ensure_profile(turn.opponent_id);
        let mut profile = self
            .profiles
            .remove(turn.opponent_id)
            .expect("profile ensured");
        let others: Vec<&SequenceBuffer> = self.profiles.values().map(|p| &p.csp.buffer).collect();
        let outcome = profile
            .csp
            .record_observation(obs, turn.action, segment, &others, rng);
        self.profiles.insert(turn.opponent_id.to_string(), profile);
        outcome.map(|_| ())
    }

    fn end_game(&mut self, _rng: &mut StreamRng) -> Result<()> {
        self.global.finish_episode()?;
        for id in std::mem::take(&mut self.touched) {
            if let Some(p) = self.profiles.get_mut(&id) {
                p.local.finish_episode()?;
            }
        }
        self.last_profile = None;
        self.games_played += 1;
        Ok(())
    }

    fn is_learning(&self) -> bool {
        self.learning
    }

    fn set_learning(&mut self, on: bool) {
        self.learning = on;
        self.global.set_learning(on);
        for p in self.profiles.values_mut() {
            p.local.set_learning(on);
        }
        if !on {
            self.touched.clear();
        }
    }

    fn param_digest(&self) -> String {
        let mut v = self.global.net.flat_parameters();
        for p in self.profiles.values() {
            v.extend(p.csp.net.flat_parameters());
            v.extend(p.local.net.flat_parameters());
        }
        digest_values(&v)
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_best_renormalises_the_top_entries() {
        let v = n_best_vector(&[0.5, 0.3, 0.2], &[true; 3], 2);
        assert!((v[0] - 0.625).abs() < 1e-12 && (v[1] - 0.375).abs() < 1e-12 && v[2] == 0.0);
        assert_eq!(
            n_best_vector(&[0.5, 0.3, 0.2], &[true; 3], 1),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            n_best_vector(&[0.5, 0.3, 0.2], &[true; 3], 3),
            vec![0.5, 0.3, 0.2]
        );
    }

    #[test]
    fn aux_reward_fixtures() {
        assert_eq!(compute_aux_reward(1.0, 1.0), 0.0);
        assert_eq!(compute_aux_reward(0.0, 1.0), 1.0);
        assert!((compute_aux_reward(0.3, 1.0) - 0.7).abs() < 1e-15);
    }
}
