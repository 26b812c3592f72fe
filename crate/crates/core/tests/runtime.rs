//! End-to-end runs: reproducibility, replay, budget conservation and the uniform ablation.

use std::collections::BTreeMap;

use evolab::runtime::{
    run_evolution, run_evolution_logged, selection_branch, Ablation, CheckerProfile, RunConfig, ScaleBudget,
};
use evolab::store::{decode_log, replay, EventKind, LogWriter};

fn small(seed: u64, ablation: Ablation) -> RunConfig {
    RunConfig {
        seed,
        ablation,
        design_budget: 30,
        checker: CheckerProfile::Static,
        budgets: [("14M", 20), ("31M", 8), ("70M", 4), ("125M", 2)]
            .into_iter()
            .map(|(s, t)| ScaleBudget {
                scale: s.into(),
                total: t,
            })
            .collect(),
        ..RunConfig::default()
    }
}

#[test]
fn equal_seeds_give_identical_logs() {
    for workers in [(1, 1), (2, 3)] {
        let cfg = RunConfig {
            designers: workers.0,
            verifiers: workers.1,
            ..small(5, Ablation::Full)
        };
        let a = run_evolution(&cfg).unwrap().log_text();
        let b = run_evolution(&cfg).unwrap().log_text();
        assert_eq!(a, b, "{workers:?}");
        let other = run_evolution(&RunConfig { seed: 6, ..cfg }).unwrap().log_text();
        assert_ne!(a, other);
    }
}

#[test]
fn streamed_log_replays_to_the_final_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let cfg = small(7, Ablation::Full);
    let mut writer = LogWriter::create(&path, &evolab::store::StoreConfig::new(cfg.scale_labels())).unwrap();
    let out = run_evolution_logged(&cfg, &mut writer).unwrap();
    drop(writer);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), out.log_text());
    assert_eq!(replay(&path).unwrap(), out.store);
    // Every event boundary is a valid log of the matching prefix.
    let text = out.log_text();
    let lines: Vec<&str> = text.lines().collect();
    for k in 1..=lines.len() {
        let prefix: String = lines[..k].iter().map(|l| format!("{l}\n")).collect();
        assert_eq!(decode_log(&prefix).unwrap().events(), &out.store.events()[..k - 1]);
    }
}

#[test]
fn budgets_are_conserved() {
    for seed in 0..4 {
        for ablation in Ablation::ALL {
            let cfg = small(seed, ablation);
            let out = run_evolution(&cfg).unwrap();
            let mut per_scale: BTreeMap<String, u64> = BTreeMap::new();
            for e in out.store.events() {
                if let EventKind::VerificationRecorded { scale, .. } = &e.event {
                    *per_scale.entry(scale.clone()).or_default() += 1;
                }
            }
            for b in &cfg.budgets {
                let used = out.summary.budget_used[&b.scale];
                assert!(used <= b.total, "{ablation:?} {}", b.scale);
                // Each reservation ends in exactly one recorded outcome.
                assert_eq!(per_scale.get(&b.scale).copied().unwrap_or(0), used);
            }
            assert_eq!(out.summary.designs + 5, out.store.len());
        }
    }
}

#[test]
fn uniform_ablation_never_consults_fitness() {
    let out = run_evolution(&small(9, Ablation::NoFitnessSelection)).unwrap();
    let mut proposals = 0;
    for r in out.store.designs() {
        let branch = selection_branch(&out.store, &r.id);
        assert!(matches!(branch.as_deref(), None | Some("uniform")), "{branch:?}");
        proposals += usize::from(branch.is_some());
    }
    assert!(proposals > 0);
    let full = run_evolution(&small(9, Ablation::Full)).unwrap();
    assert!(full
        .store
        .designs()
        .any(|r| matches!(selection_branch(&full.store, &r.id).as_deref(), Some("exploit"))));
}

#[test]
fn seed_only_ablations_breed_from_seeds() {
    for ablation in [Ablation::SeedsOnly, Ablation::SeedsWithMemory] {
        let out = run_evolution(&small(10, ablation)).unwrap();
        let seeds: Vec<_> = out
            .store
            .designs()
            .filter(|r| r.lineage.operation.is_none())
            .map(|r| r.id.clone())
            .collect();
        for r in out.store.designs() {
            assert!(r.lineage.parents.iter().all(|p| seeds.contains(p)), "{ablation:?}");
        }
    }
}
