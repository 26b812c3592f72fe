//! Composition, decomposition and structural identity of unit trees.

mod common;

use std::collections::BTreeMap;

use common::Straight;
use evolab::dsl::{evaluate, init_params, parse, ParamStore};
use evolab::oracle::seeds::{build_seed_trees, gpt2};
use evolab::tensor::{NamedTensorMap, Tensor};
use evolab::unit_tree::{canonical_hash, compose, decompose, unit_bag, UnitDecl, UnitNode, UnitTree};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GPT2_HASH: &str = include_str!("fixtures/gpt2.sha256");

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/seeds/{name}.dsl", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn seeds_compose_to_frozen_programs() {
    for tree in build_seed_trees() {
        let text = fixture(&tree.design_name);
        assert_eq!(compose(&tree).unwrap().to_string(), text, "{}", tree.design_name);
        // Byte-identical print of the parsed fixture.
        assert_eq!(parse(&text).unwrap().to_string(), text);
        let back = decompose(&parse(&text).unwrap(), &tree.design_name).unwrap();
        assert!(back.same_structure(&tree));
    }
}

#[test]
fn gpt2_hash_is_frozen() {
    assert_eq!(canonical_hash(&gpt2()), GPT2_HASH.trim());
}

#[test]
fn gpt2_unit_bag() {
    let bag = unit_bag(&gpt2());
    let expected: BTreeMap<String, usize> = [
        "GPT2",
        "GatedMLP",
        "MHA",
        "RMSNorm",
        "RotaryPositionalEmbeddings",
    ]
    .iter()
    .map(|n| (n.to_string(), 1))
    .collect();
    assert_eq!(bag, expected);
}

#[test]
fn composed_program_equals_manual_unit_chain() {
    let child = UnitNode::from_source(UnitDecl::new("Inner"), "param g [1] = uniform(0.5, 1.5)\nt = tanh(X)\ns = scale(t, g)\nY = s").unwrap();
    let mut root = UnitNode::from_source(
        UnitDecl::new("Outer"),
        "param W [D, D] = uniform(-0.5, 0.5)\nchild Inner(X) -> (Y)\nh = linear(X, W)\nc = call Inner(h)\no = add(X, c)\nY = o",
    )
    .unwrap();
    root.children = vec![child];
    let tree = UnitTree::new("Outer", root);
    let program = compose(&tree).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = init_params(&program, 3, &mut rng).unwrap();
    assert_eq!(theta.keys().cloned().collect::<Vec<_>>(), vec!["Inner.g", "Outer.W"]);
    let x = Tensor::from_fn(vec![2, 5, 3], || rng.random_range(-1.0..1.0));
    let z = NamedTensorMap::new();
    let y = evaluate(&program, &x, &z, &theta).unwrap().y;

    // Same computation one unit at a time, each as its own bare program.
    let local = |pairs: &[(&str, &str)]| -> ParamStore {
        pairs.iter().map(|(to, from)| (to.to_string(), theta[*from].clone())).collect()
    };
    let h = evaluate(
        &parse("param W [D, D] = zeros\nh = linear(X, W)\nY = h").unwrap(),
        &x,
        &z,
        &local(&[("W", "Outer.W")]),
    )
    .unwrap()
    .y;
    let c = evaluate(
        &parse("param g [1] = zeros\nt = tanh(X)\ns = scale(t, g)\nY = s").unwrap(),
        &h,
        &z,
        &local(&[("g", "Inner.g")]),
    )
    .unwrap()
    .y;
    let manual: Vec<f64> = x.data().iter().zip(c.data()).map(|(a, b)| a + b).collect();
    assert!(y.data().iter().zip(&manual).all(|(a, b)| (a - b).abs() < 1e-14));
}

/// A random tree whose bodies are random straight-line programs that call their children.
fn random_tree(rng: &mut ChaCha8Rng, max_depth: usize) -> UnitTree {
    let mut counter = 0;
    let root = random_node(rng, max_depth, &mut counter);
    UnitTree::new("Design", root)
}

fn random_node(rng: &mut ChaCha8Rng, depth: usize, counter: &mut usize) -> UnitNode {
    let name = format!("U{counter}");
    *counter += 1;
    let kids = if depth == 0 { 0 } else { rng.random_range(0..=2) };
    let children: Vec<UnitNode> = (0..kids).map(|_| random_node(rng, depth - 1, counter)).collect();
    if kids == 0 && rng.random_bool(0.15) {
        return UnitNode::placeholder(UnitDecl::new(&name));
    }
    let body = Straight::random(rng, 4, true).source();
    let (params, stmts): (Vec<&str>, Vec<&str>) = body.lines().partition(|l| l.starts_with("param"));
    let mut src: String = params.iter().map(|l| format!("{l}\n")).collect();
    for c in &children {
        src += &format!("child {}(X) -> (Y) \"sub unit\"\n", c.decl.name);
    }
    let (last, stmts) = stmts.split_last().unwrap();
    let mut out = last.trim_start_matches("Y = ").to_string();
    for s in stmts {
        src += &format!("{s}\n");
    }
    for (i, c) in children.iter().enumerate() {
        src += &format!("k{i} = call {}({out})\n", c.decl.name);
        out = format!("k{i}");
    }
    src += &format!("Y = {out}\n");
    let mut node = UnitNode::from_source(UnitDecl::new(&name), &src).unwrap();
    node.children = children;
    node
}

fn shuffle_siblings(node: &mut UnitNode, rng: &mut ChaCha8Rng) {
    node.children.shuffle(rng);
    for c in &mut node.children {
        shuffle_siblings(c, rng);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn decompose_inverts_compose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 3);
        let program = compose(&tree).unwrap();
        let back = decompose(&program, "Design").unwrap();
        prop_assert!(back.same_structure(&tree));
        prop_assert_eq!(compose(&back).unwrap(), program.clone());
        prop_assert_eq!(parse(&program.to_string()).unwrap(), program);
    }

    #[test]
    fn hash_ignores_sibling_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 3);
        let mut shuffled = tree.clone();
        shuffle_siblings(&mut shuffled.root, &mut rng);
        prop_assert_eq!(canonical_hash(&tree), canonical_hash(&shuffled));
        prop_assert_eq!(compose(&tree).unwrap(), compose(&shuffled).unwrap());
    }
}
