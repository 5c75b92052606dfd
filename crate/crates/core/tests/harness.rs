use std::collections::{BTreeMap, BTreeSet};

use envs::EnvKind;
use neurocore::stream;
use rand::Rng;
use winne::agents::training::Algorithm;
use winne::harness::{
    aggregate, bracket_shape, records_to_csv, run_benchmark, run_tournament, AgentType, GroupKey,
    KeyPart, MetricRecord, Roster, TrainMode, TrainingBudget, Zoo,
};

fn zoo(kind: EnvKind) -> Zoo {
    Zoo::new(kind, TrainingBudget::none(), 3)
}

fn naive_roster(kind: EnvKind, size: usize) -> Roster {
    Roster::build(&mut zoo(kind), &vec![AgentType::NaiveRandom; size], size).unwrap()
}

/// Wins of one entrant in a 32-entrant duel bracket of equal players: it
/// survives k rounds with probability 2^-(k+1) and wins all five with 1/32.
fn equal_bracket_moments(phases: u32) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for k in 0..=phases {
        let p = if k < phases {
            0.5f64.powi(k as i32 + 1)
        } else {
            0.5f64.powi(phases as i32)
        };
        mean += p * k as f64;
        second += p * (k * k) as f64;
    }
    (mean, second - mean * mean)
}

#[test]
fn equal_entrants_win_equally_often() {
    let tournaments = 300;
    let mut roster = naive_roster(EnvKind::Duel, 32);
    let mut wins = vec![0u64; 32];
    for t in 0..tournaments {
        let out = run_tournament(&mut roster, EnvKind::Duel, t).unwrap();
        for (w, v) in wins.iter_mut().zip(out.victories(32)) {
            *w += v;
        }
    }
    let (m, var) = equal_bracket_moments(5);
    assert!((m - 31.0 / 32.0).abs() < 1e-12);
    let expect = m * tournaments as f64;
    let sd = (var * tournaments as f64).sqrt();
    for (i, &w) in wins.iter().enumerate() {
        assert!(
            (w as f64 - expect).abs() < 3.0 * sd,
            "entrant {i}: {w} wins, expected {expect:.1} ± {sd:.1}"
        );
    }
}

#[test]
fn bracket_arithmetic() {
    let mut duel = naive_roster(EnvKind::Duel, 32);
    let out = run_tournament(&mut duel, EnvKind::Duel, 1).unwrap();
    assert_eq!((out.games.len(), out.phases), (31, 5));
    let mut card = naive_roster(EnvKind::Card, 32);
    let out = run_tournament(&mut card, EnvKind::Card, 1).unwrap();
    assert_eq!((out.games.len(), out.phases), (15, 4));
    for bad in [0, 6, 12, 30, 33] {
        assert!(bracket_shape(EnvKind::Duel, bad).unwrap_err().is_config());
    }
    let mut odd = naive_roster(EnvKind::Duel, 12);
    assert!(run_tournament(&mut odd, EnvKind::Duel, 1)
        .unwrap_err()
        .is_config());
}

#[test]
fn brackets_seat_every_survivor_exactly_once() {
    for (kind, advance) in [(EnvKind::Duel, 1), (EnvKind::Card, 2)] {
        let mut roster = naive_roster(kind, 16);
        let out = run_tournament(&mut roster, kind, 5).unwrap();
        let mut alive: BTreeSet<usize> = (0..16).collect();
        for phase in 0..out.phases {
            let games: Vec<_> = out.games.iter().filter(|g| g.phase == phase).collect();
            let seated: Vec<usize> = games.iter().flat_map(|g| g.seats.iter().copied()).collect();
            let unique: BTreeSet<usize> = seated.iter().copied().collect();
            assert_eq!(
                unique.len(),
                seated.len(),
                "{kind} phase {phase}: an entrant sat twice"
            );
            assert_eq!(unique, alive, "{kind} phase {phase}");
            let next: BTreeSet<usize> = games
                .iter()
                .flat_map(|g| g.order[..advance].iter().copied())
                .collect();
            if phase + 1 < out.phases {
                assert_eq!(next.len() * 2, alive.len());
            }
            alive = next;
        }
        assert_eq!(alive.len(), advance);
        assert!(alive.contains(&out.winner));
    }
}

#[test]
fn victories_add_up_to_games_played() {
    for kind in [EnvKind::Duel, EnvKind::Card] {
        let mut roster = naive_roster(kind, 16);
        for t in 0..3 {
            let out = run_tournament(&mut roster, kind, t).unwrap();
            assert_eq!(
                out.victories(16).iter().sum::<u64>(),
                out.games.len() as u64
            );
        }
    }
}

#[test]
fn benchmark_record_count() {
    let template = naive_roster(EnvKind::Duel, 8);
    let (runs, tournaments) = (2, 3);
    let out = run_benchmark(&template, EnvKind::Duel, tournaments, runs, 4).unwrap();
    let victory = out.records.iter().filter(|r| r.metric == "victory").count();
    let counts = out
        .records
        .iter()
        .filter(|r| r.metric == "victories")
        .count();
    assert_eq!(victory as u64, runs * tournaments * 7);
    assert_eq!(counts as u64, runs * tournaments * 8);
    assert_eq!(out.mean_victories(0, "naive-random"), Some(7.0 / 8.0));
}

#[test]
fn same_seed_same_outcome() {
    let mut zoo = zoo(EnvKind::Duel);
    let types = [
        AgentType::Baseline(Algorithm::Ppo, TrainMode::Onsc),
        AgentType::Baseline(Algorithm::Dql, TrainMode::Onsc),
    ];
    let template = Roster::build(&mut zoo, &types, 8).unwrap();
    let a = run_benchmark(&template, EnvKind::Duel, 2, 2, 9).unwrap();
    let b = run_benchmark(&template, EnvKind::Duel, 2, 2, 9).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(
        records_to_csv(&a.records).unwrap(),
        records_to_csv(&b.records).unwrap()
    );
    let c = run_benchmark(&template, EnvKind::Duel, 2, 2, 10).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn only_online_entrants_change_during_a_tournament() {
    let mut zoo = zoo(EnvKind::Duel);
    let types: Vec<AgentType> = AgentType::learners();
    let mut roster = Roster::build(&mut zoo, &types, 16).unwrap();
    let before: Vec<String> = roster
        .entrants
        .iter()
        .map(|e| e.agent.param_digest())
        .collect();
    // Every entrant plays at least once per tournament, so forty brackets
    // give the PPO learners enough episodes for an update.
    for t in 0..40 {
        run_tournament(&mut roster, EnvKind::Duel, t).unwrap();
    }
    for (e, h) in roster.entrants.iter().zip(&before) {
        let changed = e.agent.param_digest() != *h;
        if e.agent_type.is_online() {
            assert!(changed, "{} did not learn", e.id);
        } else {
            assert!(!changed, "{} changed while frozen", e.id);
        }
    }
}

fn random_records(n: usize, seed: u64) -> Vec<MetricRecord> {
    let mut rng = stream(seed, &[]);
    (0..n)
        .map(|_| MetricRecord {
            run: rng.gen_range(0..3),
            tournament: rng.gen_range(0..4),
            phase: rng.gen_range(0..2),
            game: rng.gen_range(0..5),
            agent: format!(
                "{}#{}",
                ["a", "b", "c"][rng.gen_range(0..3)],
                rng.gen_range(0..2)
            ),
            opponents: String::new(),
            metric: ["victory", "accuracy"][rng.gen_range(0..2)].into(),
            value: rng.gen_range(-5.0..5.0),
        })
        .collect()
}

#[test]
fn aggregation_matches_a_direct_fold() {
    let records = random_records(1000, 11);
    let keys = [GroupKey::Tournament, GroupKey::AgentType, GroupKey::Metric];
    let rows = aggregate(&records, &keys).unwrap();
    // Oracle: sums and sums of squares per group.
    let mut folds: BTreeMap<(u64, String, String), (usize, f64, f64)> = BTreeMap::new();
    for r in &records {
        let ty = r.agent.split('#').next().unwrap().to_string();
        let e = folds
            .entry((r.tournament, ty, r.metric.clone()))
            .or_default();
        e.0 += 1;
        e.1 += r.value;
        e.2 += r.value * r.value;
    }
    assert_eq!(rows.len(), folds.len());
    for (row, ((t, ty, m), (n, s, ss))) in rows.iter().zip(folds) {
        assert_eq!(
            row.key,
            vec![KeyPart::Num(t), KeyPart::Text(ty), KeyPart::Text(m)]
        );
        let mean = s / n as f64;
        let sd = (ss / n as f64 - mean * mean).max(0.0).sqrt();
        assert_eq!(row.count, n);
        assert!((row.mean - mean).abs() < 1e-9);
        assert!((row.sd - sd).abs() < 1e-9);
    }
    let global = aggregate(&records, &[]).unwrap();
    assert_eq!(global.len(), 1);
    assert_eq!(global[0].count, 1000);
}

#[test]
fn pretrained_online_entrants_keep_improving() {
    let mut zoo = Zoo::new(EnvKind::Duel, TrainingBudget::default(), 21);
    let types = [
        AgentType::Baseline(Algorithm::Ppo, TrainMode::Onpt),
        AgentType::Baseline(Algorithm::Dql, TrainMode::Onpt),
    ];
    let template = Roster::build(&mut zoo, &types, 32).unwrap();
    let out = run_benchmark(&template, EnvKind::Duel, 10, 40, 22).unwrap();
    for ty in ["ppo-onpt", "dql-onpt"] {
        let first = out.mean_victories(0, ty).unwrap();
        let last = out.mean_victories(9, ty).unwrap();
        println!("{ty}: tournament 1 {first:.2}, tournament 10 {last:.2}");
        assert!(last >= first, "{ty}: {first} -> {last}");
    }
}
