//! Genetic operators over unit trees.
//!
//! Replacing a unit under a different name also renames the parent's child
//! declaration and call sites, so a parent body keeps composing after its
//! child is swapped for a differently named one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{Expr, Stmt};
use crate::unit_tree::{parse_fragment, TreeError, UnitBody, UnitDecl, UnitNode, UnitTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpKind {
    Mutation,
    Crossover,
    Scratch,
}

impl GpKind {
    pub const ALL: [GpKind; 3] = [GpKind::Mutation, GpKind::Crossover, GpKind::Scratch];

    pub fn parent_count(self) -> usize {
        match self {
            GpKind::Scratch => 0,
            GpKind::Mutation => 1,
            GpKind::Crossover => 2,
        }
    }
}

/// A genetic operation on designs referenced by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpOperation {
    pub kind: GpKind,
    pub parents: Vec<String>,
    pub target_unit: Option<String>,
}

impl GpOperation {
    pub fn validate(&self) -> Result<(), GenomeError> {
        if self.parents.len() != self.kind.parent_count() {
            return Err(GenomeError::ParentCount {
                kind: self.kind,
                found: self.parents.len(),
            });
        }
        if self.target_unit.is_some() != (self.kind == GpKind::Mutation) {
            return Err(GenomeError::InvalidOperation(
                "target unit is required for mutation and only for mutation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootSource {
    /// Copy of a unit (with its subtree) from one parent.
    Parent { side: Side, unit: String },
    /// A fresh root whose declared children become open slots.
    New(UnitNode),
}

/// Fill `slot` with a copy of `unit`'s subtree from one parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graft {
    pub slot: String,
    pub side: Side,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverPlan {
    pub design_name: String,
    pub root: RootSource,
    pub grafts: Vec<Graft>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenomeError {
    #[error("unit `{0}` is protected")]
    ProtectedUnit(String),
    #[error("no unit named `{0}`")]
    UnknownUnit(String),
    #[error("crossover source not found: {0}")]
    UnknownSource(String),
    #[error("unit `{unit}` cannot fill slot `{slot}`: {detail}")]
    IncompatibleInterface {
        slot: String,
        unit: String,
        detail: String,
    },
    #[error("{kind:?} takes {} parent(s), found {found}", kind.parent_count())]
    ParentCount { kind: GpKind, found: usize },
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
    #[error("every operation is masked at this round")]
    AllMasked,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Renames child `old` to `new` in a body's declarations and call sites.
fn rename_child(node: &mut UnitNode, old: &str, new: &str) -> Result<(), TreeError> {
    let UnitBody::Source(src) = &node.body else {
        return Ok(());
    };
    let mut section = parse_fragment(node.name(), src)?;
    if let crate::dsl::SectionBody::Statements(stmts) = &mut section.body {
        for s in stmts {
            match s {
                Stmt::Child(decl) if decl.name == old => decl.name = new.to_string(),
                Stmt::Assign {
                    expr: Expr::Call { unit, .. },
                    ..
                } if unit == old => *unit = new.to_string(),
                _ => {}
            }
        }
    }
    node.body = UnitBody::Source(section.to_string());
    Ok(())
}

/// Swaps `target`'s subtree for `replacement`, renaming the parent's reference if needed.
pub(crate) fn replace_subtree(
    tree: &UnitTree,
    target: &str,
    replacement: UnitNode,
    respect_protection: bool,
) -> Result<UnitTree, GenomeError> {
    let node = tree
        .find(target)
        .ok_or_else(|| GenomeError::UnknownUnit(target.to_string()))?;
    if respect_protection && node.protected {
        return Err(GenomeError::ProtectedUnit(target.to_string()));
    }
    let mut out = tree.clone();
    let new_name = replacement.decl.name.clone();
    if out.root.decl.name == target {
        out.root = replacement;
    } else {
        let parent_name = tree
            .root
            .parent_of(target)
            .expect("non-root unit has a parent")
            .decl
            .name
            .clone();
        let parent = out.root.find_mut(&parent_name).expect("parent exists");
        if new_name != target {
            rename_child(parent, target, &new_name)?;
        }
        let slot = parent
            .children
            .iter_mut()
            .find(|c| c.decl.name == target)
            .expect("target is a child of its parent");
        *slot = replacement;
    }
    out.validate()?;
    Ok(out)
}

/// Replaces the subtree rooted at `target` with `replacement`.
pub fn mutate(tree: &UnitTree, target: &str, replacement: UnitNode) -> Result<UnitTree, GenomeError> {
    replace_subtree(tree, target, replacement, true)
}

fn side<'a>(a: &'a UnitTree, b: &'a UnitTree, s: Side) -> &'a UnitTree {
    match s {
        Side::A => a,
        Side::B => b,
    }
}

/// Z keys a child can read when called in place of `slot` inside `parent`.
fn keys_in_scope(parent: &UnitNode, slot: &str) -> Result<Vec<String>, TreeError> {
    let mut keys: Vec<String> = parent.decl.inputs.iter().filter(|k| *k != "X").cloned().collect();
    let UnitBody::Source(src) = &parent.body else {
        return Ok(keys);
    };
    let section = parse_fragment(parent.name(), src)?;
    let declared: Vec<UnitDecl> = section.children().cloned().collect();
    for s in section.statements() {
        match s {
            Stmt::Assign {
                expr: Expr::Call { unit, bindings, .. },
                ..
            } => {
                if unit == slot {
                    keys.extend(bindings.iter().map(|(k, _)| k.clone()));
                    return Ok(keys);
                }
                if let Some(d) = declared.iter().find(|d| d.name == *unit) {
                    keys.extend(d.outputs.iter().filter(|k| *k != "Y").cloned());
                }
            }
            _ => {}
        }
    }
    Ok(keys)
}

/// Combines units of two parents according to an explicit plan.
pub fn crossover(a: &UnitTree, b: &UnitTree, plan: &CrossoverPlan) -> Result<UnitTree, GenomeError> {
    if plan.grafts.is_empty() {
        return Err(GenomeError::UnknownSource("plan grafts nothing".into()));
    }
    let root = match &plan.root {
        RootSource::Parent { side: s, unit } => side(a, b, *s)
            .find(unit)
            .cloned()
            .ok_or_else(|| GenomeError::UnknownSource(format!("{s:?}.{unit}")))?,
        RootSource::New(node) => node.clone(),
    };
    let mut tree = UnitTree::new(&plan.design_name, root);
    for g in &plan.grafts {
        let source = side(a, b, g.side)
            .find(&g.unit)
            .cloned()
            .ok_or_else(|| GenomeError::UnknownSource(format!("{:?}.{}", g.side, g.unit)))?;
        let parent = tree
            .root
            .parent_of(&g.slot)
            .ok_or_else(|| GenomeError::UnknownSource(format!("slot `{}`", g.slot)))?;
        let slot_decl = tree.find(&g.slot).expect("slot exists").decl.clone();
        let available = keys_in_scope(parent, &g.slot)?;
        let incompatible = |detail: String| GenomeError::IncompatibleInterface {
            slot: g.slot.clone(),
            unit: g.unit.clone(),
            detail,
        };
        if let Some(k) = source
            .decl
            .inputs
            .iter()
            .find(|k| *k != "X" && !available.contains(k))
        {
            return Err(incompatible(format!("input `{k}` is not in scope")));
        }
        if let Some(k) = slot_decl
            .outputs
            .iter()
            .find(|k| *k != "Y" && !source.decl.outputs.contains(k))
        {
            return Err(incompatible(format!("output `{k}` is not produced")));
        }
        tree = replace_subtree(&tree, &g.slot, source, false)?;
    }
    tree.root.set_protected_all(false);
    Ok(tree)
}

/// Single placeholder unit; composes to the identity.
pub fn scratch(root_decl: UnitDecl) -> Result<UnitTree, GenomeError> {
    let tree = UnitTree::new(&root_decl.name.clone(), UnitNode::placeholder(root_decl));
    tree.validate()?;
    Ok(tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperationConfig {
    pub mutation: f64,
    pub crossover: f64,
    pub scratch: f64,
    pub crossover_warmup: u64,
    pub scratch_warmup: u64,
}

impl Default for OperationConfig {
    fn default() -> Self {
        OperationConfig {
            mutation: 0.75,
            crossover: 0.2,
            scratch: 0.05,
            crossover_warmup: 20,
            scratch_warmup: 30,
        }
    }
}

impl OperationConfig {
    /// Probabilities after masking kinds whose warmup exceeds `round`.
    pub fn masked(&self, round: u64) -> Result<[f64; 3], GenomeError> {
        let probs = [self.mutation, self.crossover, self.scratch];
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(GenomeError::InvalidOperation("probabilities must be nonnegative".into()));
        }
        let live = [true, self.crossover_warmup <= round, self.scratch_warmup <= round];
        let kept: Vec<f64> = probs.iter().zip(live).map(|(p, l)| if l { *p } else { 0.0 }).collect();
        let total: f64 = kept.iter().sum();
        if total <= 0.0 {
            return Err(GenomeError::AllMasked);
        }
        Ok([kept[0] / total, kept[1] / total, kept[2] / total])
    }
}

/// Draws the operation kind for a design round.
pub fn choose_operation<R: Rng + ?Sized>(
    round: u64,
    rng: &mut R,
    cfg: &OperationConfig,
) -> Result<GpKind, GenomeError> {
    let probs = cfg.masked(round)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (kind, p) in GpKind::ALL.into_iter().zip(probs) {
        acc += p;
        if u < acc && p > 0.0 {
            return Ok(kind);
        }
    }
    // Rounding left `u` above the cumulative sum: take the last live kind.
    Ok(GpKind::ALL
        .into_iter()
        .zip(probs)
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(k, _)| k)
        .expect("at least one live kind"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::check_format;
    use crate::oracle::seeds;
    use crate::unit_tree::{compose, unit_bag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(name: &str, src: &str) -> UnitNode {
        UnitNode::from_source(UnitDecl::new(name), src).unwrap()
    }

    #[test]
    fn leaf_to_two_node_subtree() {
        let t = seeds::gpt2();
        let mut sub = leaf("GatedMLP", "child Inner(X) -> (Y)\ni = call Inner(X)\nY = i\n");
        sub.children = vec![leaf("Inner", "t = tanh(X)\nY = t\n")];
        let m = mutate(&t, "GatedMLP", sub).unwrap();
        assert_eq!(m.size(), t.size() - 1 + 2);
        assert_eq!(t, seeds::gpt2(), "input untouched");
    }

    #[test]
    fn protected_and_unknown_targets() {
        let mut t = seeds::gpt2();
        t.root.find_mut("MHA").unwrap().protected = true;
        let r = mutate(&t, "MHA", leaf("MHA", "Y = X"));
        assert!(matches!(r, Err(GenomeError::ProtectedUnit(u)) if u == "MHA"));
        let r = mutate(&t, "Nope", leaf("Nope", "Y = X"));
        assert!(matches!(r, Err(GenomeError::UnknownUnit(_))));
    }

    #[test]
    fn renaming_rewrites_parent_reference() {
        let t = seeds::gpt2();
        let m = mutate(&t, "GatedMLP", leaf("SparseMLP", "r = relu(X)\nY = r\n")).unwrap();
        assert!(m.find("GatedMLP").is_none());
        assert!(check_format(&m).passed());
        compose(&m).unwrap();
    }

    #[test]
    fn crossover_root_from_a_children_from_b() {
        let a = seeds::gpt2();
        let b = seeds::rwkv6();
        let plan = CrossoverPlan {
            design_name: "child".into(),
            root: RootSource::Parent {
                side: Side::A,
                unit: "GPT2".into(),
            },
            grafts: vec![
                Graft { slot: "MHA".into(), side: Side::B, unit: "TimeMix".into() },
                Graft { slot: "GatedMLP".into(), side: Side::B, unit: "ChannelMix".into() },
                Graft { slot: "RMSNorm".into(), side: Side::B, unit: "RWKVNorm".into() },
            ],
        };
        let c = crossover(&a, &b, &plan).unwrap();
        let bag = unit_bag(&c);
        let mut pool = unit_bag(&a);
        for (k, v) in unit_bag(&b) {
            *pool.entry(k).or_insert(0) += v;
        }
        for (k, v) in &bag {
            assert!(pool.get(k).copied().unwrap_or(0) >= *v, "{k}");
        }
        assert!(check_format(&c).passed());
    }

    #[test]
    fn empty_plan_and_missing_source() {
        let a = seeds::gpt2();
        let plan = CrossoverPlan {
            design_name: "x".into(),
            root: RootSource::Parent { side: Side::A, unit: "GPT2".into() },
            grafts: vec![],
        };
        assert!(matches!(crossover(&a, &a, &plan), Err(GenomeError::UnknownSource(_))));
        let plan = CrossoverPlan {
            grafts: vec![Graft { slot: "MHA".into(), side: Side::B, unit: "Ghost".into() }],
            ..plan
        };
        assert!(matches!(crossover(&a, &a, &plan), Err(GenomeError::UnknownSource(_))));
    }

    #[test]
    fn interface_mismatch_is_rejected() {
        let a = seeds::gpt2();
        let mut needy = leaf("Needy", "t = tanh(Z.memory)\nY = t\n");
        needy.decl.inputs = vec!["X".into(), "memory".into()];
        let b = UnitTree::new("B", needy);
        let plan = CrossoverPlan {
            design_name: "x".into(),
            root: RootSource::Parent { side: Side::A, unit: "GPT2".into() },
            grafts: vec![Graft { slot: "GatedMLP".into(), side: Side::B, unit: "Needy".into() }],
        };
        assert!(matches!(
            crossover(&a, &b, &plan),
            Err(GenomeError::IncompatibleInterface { .. })
        ));
    }

    #[test]
    fn scratch_is_identity_placeholder() {
        let t = scratch(UnitDecl::new("NewBlock")).unwrap();
        assert_eq!(t.size(), 1);
        assert!(t.root.is_placeholder());
        assert!(matches!(scratch(UnitDecl::new("")), Err(GenomeError::Tree(_))));
        let body = "param W [D, D] = uniform(-0.2, 0.2)\nh = linear(X, W)\nY = h\n";
        let m = mutate(&t, "NewBlock", leaf("NewBlock", body)).unwrap();
        assert_eq!(m, UnitTree::new("NewBlock", leaf("NewBlock", body)));
    }

    #[test]
    fn warmups_mask_operations() {
        let cfg = OperationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            assert_eq!(choose_operation(10, &mut rng, &cfg).unwrap(), GpKind::Mutation);
        }
        let mut seen_crossover = false;
        for _ in 0..2000 {
            let k = choose_operation(25, &mut rng, &cfg).unwrap();
            assert_ne!(k, GpKind::Scratch);
            seen_crossover |= k == GpKind::Crossover;
        }
        assert!(seen_crossover);
        let m = cfg.masked(25).unwrap();
        assert_eq!(m[2], 0.0);
        assert!((m[0] / m[1] - 0.75 / 0.2).abs() < 1e-12);
        let none = OperationConfig { mutation: 0.0, crossover: 0.0, scratch: 1.0, ..cfg };
        assert!(matches!(choose_operation(0, &mut rng, &none), Err(GenomeError::AllMasked)));
    }
}
