//! Four-player shedding card game.
//!
//! The deck holds `v` copies of each value `v = 1..=11` plus two jokers,
//! 68 cards dealt 17 per player. On their turn a player either discards a
//! set of equal cards onto the board or passes. A discard must show a value
//! strictly lower than the board and at least as many cards; jokers join a
//! set and take its value. A passed player sits out until every other
//! active player has passed as well, at which point the board clears and the
//! last discarder leads (or the next active player, if that discarder has
//! already emptied their hand). Finishing order scores 3/2/1/0 points per
//! match; the game ends once a player holds 15 points.
//!
//! # Action table
//!
//! | id | meaning |
//! |----|---------|
//! | `0..198` | discard `(v, q, j)`: `q` copies of `v` plus `j` jokers, `1 ≤ q ≤ v ≤ 11`, `j ∈ {0,1,2}`; id = `3·(v(v−1)/2 + q − 1) + j` |
//! | `198` | a single joker on its own, treated as value 12 and quantity 1 |
//! | `199` | pass |

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;

pub const PLAYERS: usize = 4;
pub const ACTIONS: usize = 200;
pub const JOKER_ONLY: usize = 198;
pub const PASS: usize = 199;
pub const MAX_VALUE: u8 = 11;
pub const JOKER: u8 = 12;
pub const JOKERS: u8 = 2;
pub const DECK_SIZE: usize = 68;
pub const HAND_SIZE: usize = 17;
pub const BOARD_SLOTS: usize = 11;
pub const FULL_LEN: usize = HAND_SIZE + BOARD_SLOTS;
pub const PUBLIC_LEN: usize = BOARD_SLOTS;
pub const TARGET_SCORE: u32 = 15;
pub const MATCH_POINTS: [u32; PLAYERS] = [3, 2, 1, 0];
pub const FINISH_REWARD: f64 = 1.0;

/// Card counts indexed by value; slot 0 is unused and slot 12 holds jokers.
pub type Counts = [u8; 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Discard {
    pub value: u8,
    pub quantity: u8,
    pub jokers: u8,
}

impl Discard {
    /// Cards on the table counted as one set.
    pub fn size(&self) -> u8 {
        self.quantity + self.jokers
    }

    /// Cards removed from the hand, keyed by value.
    fn cost(&self) -> Counts {
        let mut c = [0u8; 13];
        if self.value == JOKER {
            c[JOKER as usize] = 1;
        } else {
            c[self.value as usize] = self.quantity;
            c[JOKER as usize] = self.jokers;
        }
        c
    }
}

/// Decoded action id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardAction {
    Discard(Discard),
    Pass,
}

pub fn decode_action(id: usize) -> Option<CardAction> {
    match id {
        PASS => Some(CardAction::Pass),
        JOKER_ONLY => Some(CardAction::Discard(Discard {
            value: JOKER,
            quantity: 0,
            jokers: 1,
        })),
        id if id < JOKER_ONLY => {
            let j = (id % 3) as u8;
            let mut k = id / 3;
            let mut v = 1usize;
            while k >= v {
                k -= v;
                v += 1;
            }
            Some(CardAction::Discard(Discard {
                value: v as u8,
                quantity: k as u8 + 1,
                jokers: j,
            }))
        }
        _ => None,
    }
}

pub fn encode_action(action: CardAction) -> usize {
    match action {
        CardAction::Pass => PASS,
        CardAction::Discard(d) if d.value == JOKER => JOKER_ONLY,
        CardAction::Discard(d) => {
            let v = d.value as usize;
            3 * (v * (v - 1) / 2 + d.quantity as usize - 1) + d.jokers as usize
        }
    }
}

/// Whether `d` may be laid on `board` by a hand holding `hand`.
fn playable(d: &Discard, board: Option<&Discard>, hand: &Counts) -> bool {
    let cost = d.cost();
    if (1..13).any(|v| cost[v] > hand[v]) {
        return false;
    }
    match board {
        None => true,
        Some(b) => d.value < b.value && d.size() >= b.size(),
    }
}

/// Board rendered as eleven slots: `q` entries of `v/12`, then one `1.0`
/// per joker, truncated to eleven.
pub fn board_slots(board: Option<&Discard>) -> [f64; BOARD_SLOTS] {
    let mut out = [0.0; BOARD_SLOTS];
    if let Some(b) = board {
        let vals = std::iter::repeat_n(b.value as f64 / 12.0, b.quantity as usize)
            .chain(std::iter::repeat_n(1.0, b.jokers as usize));
        for (slot, v) in out.iter_mut().zip(vals) {
            *slot = v;
        }
    }
    out
}

/// Reconstructs the board from its slot rendering. Exact for every board
/// whose size is below twelve; the truncated ones are rounded down.
pub fn board_from_slots(slots: &[f64]) -> Option<Discard> {
    let filled: Vec<f64> = slots.iter().copied().filter(|&x| x > 0.0).collect();
    let first = *filled.first()?;
    let jokers = filled.iter().filter(|&&x| (x - 1.0).abs() < 1e-9).count() as u8;
    if (first - 1.0).abs() < 1e-9 {
        return Some(Discard {
            value: JOKER,
            quantity: 0,
            jokers,
        });
    }
    Some(Discard {
        value: (first * 12.0).round() as u8,
        quantity: filled.len() as u8 - jokers,
        jokers,
    })
}

/// Mask of the actions that are legal on `board` for some hand; this is
/// all a non-holder can know.
pub fn public_mask(public: &[f64]) -> Vec<bool> {
    let board = board_from_slots(public);
    let full = [u8::MAX; 13];
    let mut mask: Vec<bool> = (0..PASS)
        .map(|id| match decode_action(id) {
            Some(CardAction::Discard(d)) => playable(&d, board.as_ref(), &full),
            _ => false,
        })
        .collect();
    mask.push(board.is_some());
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardState {
    pub hands: [Counts; PLAYERS],
    pub board: Option<Discard>,
    pub pile: Counts,
    pub passed: [bool; PLAYERS],
    pub finish_order: Vec<usize>,
    pub last_discarder: Option<usize>,
    pub current: usize,
    pub match_points: [u32; PLAYERS],
    pub game_scores: [u32; PLAYERS],
    pub first_places: [u32; PLAYERS],
    pub match_index: u32,
    pub turn: u32,
    pub terminal: bool,
    rng: Xoshiro256PlusPlus,
}

/// Per-step result before it is wrapped into the environment-level outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CardStep {
    pub state: CardState,
    pub rewards: [f64; PLAYERS],
    pub discarded: u8,
    pub finish_position: Option<u8>,
}

pub fn full_deck() -> Counts {
    let mut c = [0u8; 13];
    for v in 1..=MAX_VALUE {
        c[v as usize] = v;
    }
    c[JOKER as usize] = JOKERS;
    c
}

impl CardState {
    pub fn reset(seed: u64) -> Self {
        let mut s = Self {
            hands: [[0; 13]; PLAYERS],
            board: None,
            pile: [0; 13],
            passed: [false; PLAYERS],
            finish_order: Vec::new(),
            last_discarder: None,
            current: 0,
            match_points: [0; PLAYERS],
            game_scores: [0; PLAYERS],
            first_places: [0; PLAYERS],
            match_index: 0,
            turn: 0,
            terminal: false,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        };
        s.deal();
        s
    }

    fn deal(&mut self) {
        let deck = full_deck();
        let mut cards: Vec<u8> = (1..13u8)
            .flat_map(|v| std::iter::repeat_n(v, deck[v as usize] as usize))
            .collect();
        cards.shuffle(&mut self.rng);
        self.hands = [[0; 13]; PLAYERS];
        for (i, c) in cards.into_iter().enumerate() {
            self.hands[i % PLAYERS][c as usize] += 1;
        }
        self.board = None;
        self.pile = [0; 13];
        self.passed = [false; PLAYERS];
        self.finish_order.clear();
        self.last_discarder = None;
        self.match_points = [0; PLAYERS];
        self.current = self.match_index as usize % PLAYERS;
    }

    pub fn hand_size(&self, player: usize) -> usize {
        self.hands[player].iter().map(|&c| c as usize).sum()
    }

    /// Every card currently in a hand, on the board or in the pile.
    pub fn card_census(&self) -> Counts {
        let mut c = self.pile;
        for h in &self.hands {
            for v in 1..13 {
                c[v] += h[v];
            }
        }
        if let Some(b) = &self.board {
            let cost = b.cost();
            for v in 1..13 {
                c[v] += cost[v];
            }
        }
        c
    }

    pub fn to_act(&self) -> Vec<usize> {
        if self.terminal {
            vec![]
        } else {
            vec![self.current]
        }
    }

    fn finished(&self, p: usize) -> bool {
        self.finish_order.contains(&p)
    }

    pub fn legal_actions(&self, player: usize) -> Result<Vec<bool>, EnvError> {
        if player >= PLAYERS {
            return Err(EnvError::PlayerOutOfRange(player));
        }
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        if player != self.current {
            return Ok(vec![false; ACTIONS]);
        }
        let hand = &self.hands[player];
        let mut mask: Vec<bool> = (0..PASS)
            .map(|id| match decode_action(id) {
                Some(CardAction::Discard(d)) => playable(&d, self.board.as_ref(), hand),
                _ => false,
            })
            .collect();
        mask.push(self.board.is_some());
        Ok(mask)
    }

    pub fn step(&self, player: usize, action: usize) -> Result<CardStep, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        if player >= PLAYERS {
            return Err(EnvError::PlayerOutOfRange(player));
        }
        if player != self.current {
            return Err(EnvError::NotToAct { player });
        }
        if action >= ACTIONS || !self.legal_actions(player)?[action] {
            return Err(EnvError::IllegalAction { player, action });
        }
        let mut s = self.clone();
        let mut rewards = [0.0; PLAYERS];
        let mut discarded = 0;
        let mut finish_position = None;
        s.turn += 1;
        match decode_action(action).expect("checked above") {
            CardAction::Pass => s.passed[player] = true,
            CardAction::Discard(d) => {
                if let Some(old) = s.board.take() {
                    let cost = old.cost();
                    for v in 1..13 {
                        s.pile[v] += cost[v];
                    }
                }
                let cost = d.cost();
                for v in 1..13 {
                    s.hands[player][v] -= cost[v];
                }
                discarded = d.size().max(1);
                s.board = Some(d);
                s.last_discarder = Some(player);
                if s.hand_size(player) == 0 {
                    s.finish_order.push(player);
                    finish_position = Some(s.finish_order.len() as u8);
                    if s.finish_order.len() == 1 {
                        rewards[player] = FINISH_REWARD;
                    }
                }
            }
        }
        if s.finish_order.len() == PLAYERS - 1 {
            s.close_match();
        } else {
            s.advance();
        }
        Ok(CardStep {
            state: s,
            rewards,
            discarded,
            finish_position,
        })
    }

    /// Moves the turn to the next player, clearing the board when everyone
    /// but the last discarder has passed.
    fn advance(&mut self) {
        let lead = self.last_discarder.expect("a discard precedes any pass");
        let all_passed = (0..PLAYERS).all(|p| p == lead || self.finished(p) || self.passed[p]);
        if all_passed {
            if let Some(b) = self.board.take() {
                let cost = b.cost();
                for v in 1..13 {
                    self.pile[v] += cost[v];
                }
            }
            self.passed = [false; PLAYERS];
            self.current = if self.finished(lead) {
                self.next_active(lead)
            } else {
                lead
            };
        } else {
            self.current = self.next_active(self.current);
            while self.passed[self.current] {
                self.current = self.next_active(self.current);
            }
        }
    }

    fn next_active(&self, from: usize) -> usize {
        let mut p = (from + 1) % PLAYERS;
        while self.finished(p) {
            p = (p + 1) % PLAYERS;
        }
        p
    }

    fn close_match(&mut self) {
        let last = (0..PLAYERS)
            .find(|p| !self.finished(*p))
            .expect("one player remains");
        self.finish_order.push(last);
        for (place, &p) in self.finish_order.iter().enumerate() {
            self.match_points[p] = MATCH_POINTS[place];
            self.game_scores[p] += MATCH_POINTS[place];
        }
        self.first_places[self.finish_order[0]] += 1;
        if self.game_scores.iter().any(|&s| s >= TARGET_SCORE) {
            // Leave the final match visible; the remaining hand stays put.
            self.terminal = true;
            return;
        }
        self.match_index += 1;
        self.deal();
    }

    /// 17 hand slots sorted descending (value /12, jokers 1.0) followed by
    /// the 11 board slots.
    pub fn encode_full(&self, player: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(FULL_LEN);
        for value in (1..13).rev() {
            for _ in 0..self.hands[player][value] {
                v.push(value as f64 / 12.0);
            }
        }
        v.truncate(HAND_SIZE);
        v.resize(HAND_SIZE, 0.0);
        v.extend(board_slots(self.board.as_ref()));
        v
    }

    pub fn encode_public(&self) -> Vec<f64> {
        board_slots(self.board.as_ref()).to_vec()
    }

    /// Players ordered by game score, then by first places, then by seat.
    pub fn standings(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..PLAYERS).collect();
        order.sort_by(|&a, &b| {
            self.game_scores[b]
                .cmp(&self.game_scores[a])
                .then(self.first_places[b].cmp(&self.first_places[a]))
                .then(a.cmp(&b))
        });
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_table_round_trips() {
        let mut seen = std::collections::BTreeSet::new();
        for id in 0..ACTIONS {
            let a = decode_action(id).unwrap();
            assert_eq!(encode_action(a), id);
            if let CardAction::Discard(d) = a {
                if d.value != JOKER {
                    assert!(1 <= d.quantity && d.quantity <= d.value && d.value <= MAX_VALUE);
                    assert!(seen.insert((d.value, d.quantity, d.jokers)));
                }
            }
        }
        assert_eq!(seen.len(), 198);
        assert_eq!(decode_action(200), None);
    }

    #[test]
    fn deck_has_68_cards() {
        let s = CardState::reset(3);
        assert_eq!(
            full_deck().iter().map(|&c| c as usize).sum::<usize>(),
            DECK_SIZE
        );
        for p in 0..PLAYERS {
            assert_eq!(s.hand_size(p), HAND_SIZE);
        }
        assert_eq!(s.card_census(), full_deck());
    }

    #[test]
    fn board_of_ones_allows_only_pass() {
        let mut s = CardState::reset(1);
        s.board = Some(Discard {
            value: 1,
            quantity: 1,
            jokers: 0,
        });
        s.last_discarder = Some(3);
        let mask = s.legal_actions(s.current).unwrap();
        let legal: Vec<usize> = (0..ACTIONS).filter(|&a| mask[a]).collect();
        assert_eq!(legal, vec![PASS]);
    }

    #[test]
    fn clean_board_must_be_led() {
        let s = CardState::reset(2);
        assert!(!s.legal_actions(s.current).unwrap()[PASS]);
    }

    #[test]
    fn board_slots_round_trip() {
        for id in 0..PASS {
            if let Some(CardAction::Discard(d)) = decode_action(id) {
                if d.size() <= BOARD_SLOTS as u8 {
                    assert_eq!(board_from_slots(&board_slots(Some(&d))), Some(d), "{d:?}");
                }
            }
        }
        assert_eq!(board_from_slots(&[0.0; BOARD_SLOTS]), None);
    }

    #[test]
    fn finishing_first_earns_the_reward() {
        let mut s = CardState::reset(4);
        let p = s.current;
        s.hands[p] = [0; 13];
        s.hands[p][5] = 2;
        let out = s
            .step(
                p,
                encode_action(CardAction::Discard(Discard {
                    value: 5,
                    quantity: 2,
                    jokers: 0,
                })),
            )
            .unwrap();
        assert_eq!(out.rewards[p], 1.0);
        assert_eq!(out.finish_position, Some(1));
        assert_eq!(out.state.hand_size(p), 0);
        assert_ne!(out.state.current, p);
    }

    #[test]
    fn pizza_returns_the_lead_to_the_last_discarder() {
        let mut s = CardState::reset(5);
        let p = s.current;
        let mask = s.legal_actions(p).unwrap();
        let first = (0..PASS).find(|&a| mask[a]).unwrap();
        s = s.step(p, first).unwrap().state;
        for _ in 0..3 {
            let q = s.current;
            assert_ne!(q, p);
            s = s.step(q, PASS).unwrap().state;
        }
        assert_eq!(s.current, p);
        assert_eq!(s.board, None);
        assert_eq!(s.passed, [false; PLAYERS]);
        assert_eq!(s.card_census(), full_deck());
    }
}
