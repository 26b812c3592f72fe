//! Event-sourced store: replay, truncation and fitness aggregation.

use std::collections::BTreeMap;

use evolab::genome::GpKind;
use evolab::oracle::seeds::build_seed_trees;
use evolab::store::{
    decode_log, encode_log, DesignId, EvoStore, Lineage, ProposalMeta, Status, StoreConfig, StoreError, TaskScores,
};
use evolab::unit_tree::compose;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scales() -> Vec<String> {
    ["14M", "31M", "70M"].iter().map(|s| s.to_string()).collect()
}

fn scores(pairs: &[(&str, f64)]) -> TaskScores {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn seed_store() -> EvoStore {
    let mut s = EvoStore::new(StoreConfig::new(scales()));
    let tree = build_seed_trees().remove(0);
    let program = compose(&tree).unwrap().to_string();
    s.add_design("a".into(), tree, program, Lineage::seed(), ProposalMeta::default())
        .unwrap();
    s
}

/// Drives the store through `n` random but valid operations.
fn random_store(n: usize, seed: u64) -> EvoStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = build_seed_trees();
    let mut s = EvoStore::new(StoreConfig {
        scales: scales(),
        error_threshold: 2,
    });
    let mut ids: Vec<DesignId> = Vec::new();
    let mut clock = 0.0;
    while s.events().len() < n {
        clock += rng.random_range(0.0..5.0);
        let choice = rng.random_range(0..10);
        if ids.is_empty() || choice < 3 {
            let id = DesignId(format!("d{}", ids.len()));
            let tree = trees.choose(&mut rng).unwrap().clone();
            let program = compose(&tree).unwrap().to_string();
            let op = if ids.len() < 2 {
                None
            } else {
                *[None, Some(GpKind::Mutation), Some(GpKind::Crossover), Some(GpKind::Scratch)]
                    .choose(&mut rng)
                    .unwrap()
            };
            let k = op.map_or(0, GpKind::parent_count);
            let parents: Vec<DesignId> = ids.choose_multiple(&mut rng, k).cloned().collect();
            let meta = ProposalMeta {
                quality: rng.random_range(0.0..5.0),
                round: ids.len() as u64,
                created_at: clock,
                selection: Some("exploit".into()),
                generator_calls: rng.random_range(1..20),
                token_cost: rng.random_range(0.0..1.0),
            };
            s.add_design(id.clone(), tree, program, Lineage { parents, operation: op }, meta)
                .unwrap();
            ids.push(id);
            continue;
        }
        let id = ids.choose(&mut rng).unwrap().clone();
        let rec = s.get(&id).unwrap().clone();
        if rec.status == Status::Proposed {
            s.mark_implemented(&id).unwrap();
            continue;
        }
        let open: Vec<String> = scales().into_iter().filter(|sc| !rec.is_verified_at(sc)).collect();
        let Some(scale) = open.choose(&mut rng).cloned() else { continue };
        if choice == 9 {
            s.record_verification_error(&id, &scale, clock).unwrap();
        } else {
            let sc: TaskScores = (0..3).map(|t| (format!("t{t}"), rng.random_range(0.0..=1.0))).collect();
            s.record_verification(&id, &scale, sc, clock).unwrap();
        }
    }
    s
}

#[test]
fn thousand_random_events_replay_exactly() {
    let s = random_store(1000, 11);
    let text = encode_log(&s);
    assert_eq!(decode_log(&text).unwrap(), s);
    assert_eq!(EvoStore::from_events(s.config().clone(), s.events().iter().cloned()).unwrap(), s);
    // Every event boundary is a valid log.
    let lines: Vec<&str> = text.lines().collect();
    for k in 1..=lines.len() {
        let prefix: String = lines[..k].iter().map(|l| format!("{l}\n")).collect();
        let expected = EvoStore::from_events(s.config().clone(), s.events()[..k - 1].iter().cloned()).unwrap();
        assert_eq!(decode_log(&prefix).unwrap(), expected, "prefix {k}");
    }
}

#[test]
fn torn_tail_is_dropped_but_corruption_is_not() {
    let s = random_store(60, 12);
    let text = encode_log(&s);
    let torn = &text[..text.len() - 10];
    let back = decode_log(torn).unwrap();
    assert_eq!(back.events(), &s.events()[..s.events().len() - 1]);
    let lines: Vec<&str> = text.lines().collect();
    let mut bad: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    // Same JSON shape, different content: only the checksum can tell.
    bad[5] = bad[5].replacen("\"id\":\"d", "\"id\":\"x", 1);
    let bad = bad.join("\n") + "\n";
    assert!(matches!(decode_log(&bad), Err(StoreError::CorruptLog { line: 6, .. })));
}

#[test]
fn three_scale_fitness_is_the_flat_mean() {
    let mut s = seed_store();
    let id = DesignId::from("a");
    s.mark_implemented(&id).unwrap();
    s.record_verification(&id, "14M", scores(&[("x", 0.5), ("y", 0.7)]), 1.0).unwrap();
    assert_eq!(s.get(&id).unwrap().status, Status::Verified(1));
    s.record_verification(&id, "31M", scores(&[("x", 0.6), ("y", 0.8)]), 2.0).unwrap();
    s.record_verification(&id, "70M", scores(&[("x", 0.4), ("y", 0.6)]), 3.0).unwrap();
    assert!((s.fitness(&id).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(s.confidence(&id).unwrap(), 3);
    assert_eq!(s.get(&id).unwrap().status, Status::Verified(3));
    assert!(matches!(
        s.record_verification(&id, "14M", scores(&[("x", 0.1)]), 4.0),
        Err(StoreError::ScaleAlreadyVerified { .. })
    ));
    // Rejected operations leave no event behind.
    assert_eq!(s.events().len(), 5);
}

#[test]
fn preconditions_are_enforced() {
    let mut s = seed_store();
    let tree = build_seed_trees().remove(1);
    let prog = compose(&tree).unwrap().to_string();
    assert!(matches!(
        s.add_design("a".into(), tree.clone(), prog.clone(), Lineage::seed(), ProposalMeta::default()),
        Err(StoreError::DuplicateId(_))
    ));
    let orphan = Lineage {
        parents: vec!["ghost".into()],
        operation: Some(GpKind::Mutation),
    };
    assert!(matches!(
        s.add_design("b".into(), tree.clone(), prog.clone(), orphan, ProposalMeta::default()),
        Err(StoreError::BrokenLineage { .. })
    ));
    let short = Lineage {
        parents: vec!["a".into()],
        operation: Some(GpKind::Crossover),
    };
    assert!(matches!(
        s.add_design("b".into(), tree, prog, short, ProposalMeta::default()),
        Err(StoreError::BrokenLineage { .. })
    ));
    let a = DesignId::from("a");
    assert!(matches!(
        s.record_verification(&a, "1B", scores(&[("x", 0.5)]), 0.0),
        Err(StoreError::UnknownScale(_))
    ));
    assert!(matches!(
        s.record_verification(&a, "14M", scores(&[("x", 1.5)]), 0.0),
        Err(StoreError::InvalidScore { .. })
    ));
    assert!(matches!(s.fitness(&a), Err(StoreError::Unverified(_))));
    assert_eq!(s.events().len(), 1);
}

#[test]
fn error_threshold_marks_design_erroneous() {
    let mut s = seed_store();
    let a = DesignId::from("a");
    s.mark_implemented(&a).unwrap();
    s.record_verification_error(&a, "14M", 1.0).unwrap();
    assert_eq!(s.get(&a).unwrap().status, Status::Erroneous);
    assert_eq!(s.get(&a).unwrap().errors, 1);
    // The failed scale may still be retried and scored.
    s.record_verification(&a, "14M", scores(&[("x", 0.5)]), 2.0).unwrap();
    assert_eq!(s.get(&a).unwrap().status, Status::Erroneous);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fitness_ignores_verification_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_scale: BTreeMap<String, TaskScores> = scales()
            .into_iter()
            .map(|sc| {
                let t = (0..4).map(|k| (format!("t{k}"), rng.random_range(0.0..=1.0))).collect();
                (sc, t)
            })
            .collect();
        let mut order: Vec<&String> = per_scale.keys().collect();
        let run = |order: &[&String]| {
            let mut s = seed_store();
            let a = DesignId::from("a");
            s.mark_implemented(&a).unwrap();
            for sc in order {
                s.record_verification(&a, sc, per_scale[*sc].clone(), 0.0).unwrap();
            }
            (s.fitness(&a).unwrap(), s.confidence(&a).unwrap(), s.get(&a).unwrap().results.clone())
        };
        let first = run(&order);
        order.shuffle(&mut rng);
        let second = run(&order);
        prop_assert!((first.0 - second.0).abs() < 1e-12);
        prop_assert_eq!(first.1, second.1);
        prop_assert_eq!(first.2, second.2);
    }

    #[test]
    fn random_logs_round_trip(seed in any::<u64>()) {
        let s = random_store(80, seed);
        prop_assert_eq!(decode_log(&encode_log(&s)).unwrap(), s);
    }
}
