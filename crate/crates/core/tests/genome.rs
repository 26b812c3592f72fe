//! Mutation, crossover and scratch on the seed designs.

use std::collections::BTreeSet;

use evolab::dsl::{BlockProgram, Section};
use evolab::genome::{
    choose_operation, crossover, mutate, scratch, CrossoverPlan, GenomeError, GpKind, Graft, OperationConfig,
    RootSource, Side,
};
use evolab::oracle::seeds::{build_seed_trees, gpt2, mamba2};
use evolab::unit_tree::{compose, unit_bag, UnitDecl, UnitNode, UnitTree};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaf(name: &str, body: &str) -> UnitNode {
    UnitNode::from_source(UnitDecl::new(name), body).unwrap()
}

fn sections(p: &BlockProgram) -> Vec<(String, String)> {
    p.sections
        .iter()
        .map(|s: &Section| (s.name().unwrap_or_default().to_string(), s.to_string()))
        .collect()
}

#[test]
fn mutation_size_arithmetic_on_every_unit() {
    let replacement = leaf("Fresh", "t = tanh(X)\nY = t");
    for tree in build_seed_trees() {
        for name in tree.unit_names() {
            if name == tree.root.name() {
                continue;
            }
            let removed = tree.find(name).unwrap().size();
            let out = mutate(&tree, name, replacement.clone()).unwrap();
            assert_eq!(out.size(), tree.size() - removed + 1, "{} {name}", tree.design_name);
            compose(&out).unwrap();
        }
    }
}

#[test]
fn mutation_changes_only_the_target_sections() {
    let tree = gpt2();
    let out = mutate(&tree, "MHA", leaf("MHA", "c = cumsum(X)\nY = c")).unwrap();
    let before = sections(&compose(&tree).unwrap());
    let after = sections(&compose(&out).unwrap());
    let touched: BTreeSet<&str> = ["MHA", "RotaryPositionalEmbeddings"].into();
    let keep = |v: &[(String, String)]| -> Vec<(String, String)> {
        v.iter().filter(|(n, _)| !touched.contains(n.as_str())).cloned().collect()
    };
    assert_eq!(keep(&before), keep(&after));
    assert!(after.iter().any(|(n, s)| n == "MHA" && s.contains("cumsum(X)")));
    assert!(!after.iter().any(|(n, _)| n == "RotaryPositionalEmbeddings"));
}

#[test]
fn renamed_replacement_rewires_the_parent() {
    let out = mutate(&gpt2(), "GatedMLP", leaf("PlainMLP", "t = relu(X)\nY = t")).unwrap();
    let text = compose(&out).unwrap().to_string();
    assert!(text.contains("child PlainMLP(X) -> (Y)"));
    assert!(text.contains("call PlainMLP(n2)"));
    assert!(!text.contains("GatedMLP"));
}

#[test]
fn protected_units_refuse_mutation() {
    let mut tree = gpt2();
    tree.root.set_protected_all(true);
    assert!(matches!(
        mutate(&tree, "MHA", leaf("MHA", "Y = X")),
        Err(GenomeError::ProtectedUnit(_))
    ));
}

#[test]
fn crossover_units_come_from_the_parents() {
    let (a, b) = (gpt2(), mamba2());
    let plan = CrossoverPlan {
        design_name: "Hybrid".into(),
        root: RootSource::Parent {
            side: Side::A,
            unit: "GPT2".into(),
        },
        grafts: vec![Graft {
            slot: "MHA".into(),
            side: Side::B,
            unit: "SSDMinimalDiscrete".into(),
        }],
    };
    let child = crossover(&a, &b, &plan).unwrap();
    let parents: BTreeSet<String> = unit_bag(&a).into_keys().chain(unit_bag(&b).into_keys()).collect();
    for name in unit_bag(&child).into_keys() {
        assert!(parents.contains(&name), "{name}");
    }
    assert!(child.find("SSDMinimalDiscrete").is_some());
    assert!(child.find("MHA").is_none());
    assert!(child.root.nodes().iter().all(|n| !n.protected));
    // The offspring is a well-formed program in the composed format.
    let text = compose(&child).unwrap().to_string();
    assert!(text.starts_with("unit GPT2(X) -> (Y)"));
    assert_eq!(text.matches("\nend\n").count() + usize::from(text.starts_with("end\n")), child.size());
}

#[test]
fn scratch_then_mutate() {
    let tree: UnitTree = scratch(UnitDecl::new("Fresh")).unwrap();
    assert_eq!(tree.size(), 1);
    assert_eq!(compose(&tree).unwrap().sections.len(), 1);
    let grown = mutate(&tree, "Fresh", leaf("Fresh", "s = shift(X, 1)\nY = s")).unwrap();
    assert_eq!(grown.size(), 1);
    assert!(!grown.root.is_placeholder());
}

#[test]
fn operation_frequencies_over_a_million_draws() {
    let cfg = OperationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 1_000_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let k = choose_operation(40, &mut rng, &cfg).unwrap();
        counts[GpKind::ALL.iter().position(|x| *x == k).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip([0.75, 0.2, 0.05]) {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{counts:?}");
    }
}

#[test]
fn warmups_mask_operations() {
    let cfg = OperationConfig::default();
    assert_eq!(cfg.masked(0).unwrap(), [1.0, 0.0, 0.0]);
    let m = cfg.masked(20).unwrap();
    assert!((m[0] - 0.75 / 0.95).abs() < 1e-15 && (m[1] - 0.2 / 0.95).abs() < 1e-15 && m[2] == 0.0);
    assert_eq!(cfg.masked(30).unwrap(), [0.75, 0.2, 0.05]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        assert_eq!(choose_operation(5, &mut rng, &cfg).unwrap(), GpKind::Mutation);
    }
}
