//! Candidate generators: a Bernoulli template generator and a scripted replayer.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DraftRequest, Generator, GeneratorModel};
use crate::genome::{crossover, CrossoverPlan, Graft, RootSource, Side};
use crate::unit_tree::{UnitBody, UnitDecl, UnitNode, UnitTree};

/// Ways a drawn-invalid unit is broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokenKind {
    Syntax,
    UndeclaredCall,
    UnusedChild,
    NonCausal,
    DanglingParameter,
}

impl BrokenKind {
    pub const ALL: [BrokenKind; 5] = [
        BrokenKind::Syntax,
        BrokenKind::UndeclaredCall,
        BrokenKind::UnusedChild,
        BrokenKind::NonCausal,
        BrokenKind::DanglingParameter,
    ];

    /// Kinds that parser and format checks alone detect.
    pub const STATIC: [BrokenKind; 3] = [
        BrokenKind::Syntax,
        BrokenKind::UndeclaredCall,
        BrokenKind::UnusedChild,
    ];
}

/// Leaf bodies. Every one is causal, differentiable and trainable.
const LEAVES: [(&str, &str); 6] = [
    (
        "tanh projection",
        "param W [D, D] = uniform(-0.3, 0.3)\nh = linear(X, W)\nt = tanh(h)\nY = t\n",
    ),
    (
        "sigmoid gated projection",
        "param Wa [D, D] = uniform(-0.3, 0.3)\nparam Wb [D, D] = uniform(-0.3, 0.3)\na = linear(X, Wa)\nb = linear(X, Wb)\ng = sigmoid(b)\nm = mul(a, g)\nY = m\n",
    ),
    (
        "scaled causal accumulation",
        "param W [D, D] = uniform(-0.3, 0.3)\nparam c [1] = uniform(0.1, 0.3)\nh = linear(X, W)\nacc = cumsum(h)\ns = scale(acc, c)\nt = tanh(s)\nY = t\n",
    ),
    (
        "token shift mixing",
        "param r [1] = uniform(0.3, 0.7)\nparam W [D, D] = uniform(-0.3, 0.3)\np = shift(X, 1)\ns = scale(p, r)\nm = add(X, s)\nh = linear(m, W)\nY = h\n",
    ),
    (
        "normalization",
        "param g [1] = uniform(0.9, 1.1)\nparam b [D] = zeros\nn = layernorm(X)\ns = scale(n, g)\no = bias(s, b)\nY = o\n",
    ),
    (
        "relu MLP",
        "param W1 [D, D] = uniform(-0.3, 0.3)\nparam W2 [D, D] = uniform(-0.3, 0.3)\nh = linear(X, W1)\na = relu(h)\no = linear(a, W2)\nY = o\n",
    ),
];

fn composite_body(children: &[String]) -> String {
    let mut s = String::new();
    for c in children {
        s += &format!("child {c}(X) -> (Y) \"sub-unit\"\n");
    }
    s += "param W [D, D] = uniform(-0.3, 0.3)\n";
    match children {
        [a] => s += &format!("a = call {a}(X)\nh = add(X, a)\no = linear(h, W)\nY = o\n"),
        [a, b] => {
            s += &format!(
                "a = call {a}(X)\nh = add(X, a)\nb = call {b}(h)\nm = add(h, b)\no = linear(m, W)\nY = o\n"
            )
        }
        _ => {
            // Chain through every child.
            let mut prev = "X".to_string();
            for (i, c) in children.iter().enumerate() {
                s += &format!("c{i} = call {c}({prev})\n");
                prev = format!("c{i}");
            }
            s += &format!("o = linear({prev}, W)\nr = add(X, o)\nY = r\n");
        }
    }
    s
}

/// Appends `export k = <output>` for every extra output key of `decl`.
fn with_exports(body: &str, decl: &UnitDecl) -> String {
    let extra: Vec<&String> = decl.outputs.iter().filter(|k| *k != "Y").collect();
    if extra.is_empty() {
        return body.to_string();
    }
    let out = body
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Y = "))
        .unwrap_or("X")
        .trim()
        .to_string();
    let mut s = body.to_string();
    for k in extra {
        s += &format!("export {k} = {out}\n");
    }
    s
}

/// Injects a defect of `kind` into `node`'s body.
fn corrupt(node: &mut UnitNode, kind: BrokenKind, taken: &mut BTreeSet<String>) {
    let body = match &node.body {
        UnitBody::Source(s) => s.clone(),
        UnitBody::Placeholder => "Y = X\n".to_string(),
    };
    let broken = match kind {
        BrokenKind::Syntax => format!("zz = linear(X\n{body}"),
        BrokenKind::UndeclaredCall => format!("zzg = call ZzGhost(X)\n{body}"),
        BrokenKind::UnusedChild => {
            let spare = unique("Spare", taken);
            node.children.push(UnitNode::placeholder(UnitDecl::new(&spare)));
            format!("child {spare}(X) -> (Y)\n{body}")
        }
        BrokenKind::NonCausal => {
            let mut lines: Vec<String> = body.lines().map(str::to_string).collect();
            let pos = lines.iter().rposition(|l| l.starts_with("Y = ")).unwrap_or(lines.len());
            let out = lines
                .get(pos)
                .and_then(|l| l.strip_prefix("Y = "))
                .unwrap_or("X")
                .trim()
                .to_string();
            let tail = format!("zzm = mean(X)\nzzo = add({out}, zzm)\nY = zzo");
            if pos < lines.len() {
                lines[pos] = tail;
            } else {
                lines.push(tail);
            }
            lines.join("\n") + "\n"
        }
        BrokenKind::DanglingParameter => format!("param zzu [D] = zeros\n{body}"),
    };
    node.body = UnitBody::Source(broken);
}

/// `base`, or `base2`, `base3`, ... whichever is free; the result is reserved.
fn unique(base: &str, taken: &mut BTreeSet<String>) -> String {
    let mut name = base.to_string();
    let mut i = 2;
    while taken.contains(&name) {
        name = format!("{base}{i}");
        i += 1;
    }
    taken.insert(name.clone());
    name
}

/// Draws validity per step, then emits a template unit or a deliberately broken one.
#[derive(Debug, Clone)]
pub struct BernoulliGenerator {
    model: GeneratorModel,
    vocabulary: Vec<String>,
    broken: Vec<BrokenKind>,
    /// Maximum tree size a draft may grow to, counting its placeholder children.
    unit_budget: usize,
    /// Fixed shape: a root over `n - 1` leaf children.
    chain: Option<usize>,
}

/// Unit names drafts are named after, beyond the seed units.
pub const DEFAULT_VOCABULARY: [&str; 16] = [
    "GatedDeltaMix",
    "HyenaFilter",
    "SlidingConv",
    "LinearAttention",
    "DecayRetention",
    "SparseMoE",
    "StateGate",
    "ShortConv",
    "FastWeightMemory",
    "ChannelGate",
    "GroupNorm",
    "SwiGLU",
    "DualPathMix",
    "LocalAttention",
    "MultiScaleRetention",
    "ExpertRouter",
];

impl BernoulliGenerator {
    pub fn new(model: GeneratorModel, vocabulary: Vec<String>) -> Self {
        BernoulliGenerator {
            model,
            vocabulary,
            broken: BrokenKind::ALL.to_vec(),
            unit_budget: 8,
            chain: None,
        }
    }

    /// Every staged design becomes a root with `n - 1` leaf children, so it takes exactly `n` steps.
    pub fn with_chain(mut self, n: usize) -> Self {
        self.chain = Some(n.max(1));
        self
    }

    pub fn with_broken_kinds(mut self, kinds: &[BrokenKind]) -> Self {
        assert!(!kinds.is_empty(), "at least one broken kind is required");
        self.broken = kinds.to_vec();
        self
    }

    pub fn with_unit_budget(mut self, budget: usize) -> Self {
        self.unit_budget = budget.max(1);
        self
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn pick_name(&self, taken: &mut BTreeSet<String>, rng: &mut dyn RngCore) -> String {
        let base = if self.vocabulary.is_empty() {
            "Unit"
        } else {
            &self.vocabulary[rng.random_range(0..self.vocabulary.len())]
        };
        unique(base, taken)
    }

    /// A valid unit implementing `decl` under a fresh name with at most `max_children` children.
    fn template(
        &self,
        decl: &UnitDecl,
        max_children: usize,
        taken: &mut BTreeSet<String>,
        rng: &mut dyn RngCore,
    ) -> UnitNode {
        let composites = max_children.min(2);
        let pick = rng.random_range(0..LEAVES.len() + composites);
        let n = pick.saturating_sub(LEAVES.len() - 1);
        self.shaped(decl, n, pick, taken, rng)
    }

    /// Leaf template `pick` when `n == 0`, else a composite over `n` fresh children.
    fn shaped(
        &self,
        decl: &UnitDecl,
        n: usize,
        pick: usize,
        taken: &mut BTreeSet<String>,
        rng: &mut dyn RngCore,
    ) -> UnitNode {
        let (req, body, children) = if n == 0 {
            let (req, body) = LEAVES[pick % LEAVES.len()];
            (req.to_string(), body.to_string(), Vec::new())
        } else {
            let names: Vec<String> = (0..n).map(|_| self.pick_name(taken, rng)).collect();
            ("residual composition".to_string(), composite_body(&names), names)
        };
        let mut d = decl.clone();
        d.requirements = req;
        UnitNode {
            decl: d,
            body: UnitBody::Source(with_exports(&body, decl)),
            children: children
                .into_iter()
                .map(|c| UnitNode::placeholder(UnitDecl::new(&c)))
                .collect(),
            protected: false,
        }
    }

    fn maybe_corrupt(&self, node: &mut UnitNode, p: f64, taken: &mut BTreeSet<String>, rng: &mut dyn RngCore) {
        if rng.random::<f64>() >= p {
            let kind = self.broken[rng.random_range(0..self.broken.len())];
            corrupt(node, kind, taken);
        }
    }

    /// Root from one parent with some direct children swapped for units of the other.
    fn crossover_root(&self, parents: &[UnitTree], rng: &mut dyn RngCore) -> Option<UnitNode> {
        let [a, b] = parents else { return None };
        let (side, other) = if rng.random::<bool>() {
            (Side::A, Side::B)
        } else {
            (Side::B, Side::A)
        };
        let (home, away) = match side {
            Side::A => (a, b),
            Side::B => (b, a),
        };
        let mut plan = CrossoverPlan {
            design_name: home.design_name.clone(),
            root: RootSource::Parent {
                side,
                unit: home.root.decl.name.clone(),
            },
            grafts: Vec::new(),
        };
        let donors: Vec<&UnitNode> = away.root.nodes().into_iter().skip(1).collect();
        let mut slots: Vec<String> = home.root.children.iter().map(|c| c.decl.name.clone()).collect();
        if donors.is_empty() || slots.is_empty() {
            return Some(home.root.clone());
        }
        // Shuffle slots so the forced first graft is not always the same one.
        for i in (1..slots.len()).rev() {
            slots.swap(i, rng.random_range(0..=i));
        }
        let mut best: Option<UnitTree> = None;
        for (i, slot) in slots.iter().enumerate() {
            if i > 0 && rng.random::<f64>() < 0.5 {
                continue;
            }
            let donor = donors[rng.random_range(0..donors.len())];
            plan.grafts.push(Graft {
                slot: slot.clone(),
                side: other,
                unit: donor.decl.name.clone(),
            });
            match crossover(a, b, &plan) {
                Ok(t) => best = Some(t),
                Err(_) => {
                    plan.grafts.pop();
                }
            }
        }
        Some(best.map(|t| t.root).unwrap_or_else(|| home.root.clone()))
    }
}

impl Generator for BernoulliGenerator {
    fn model(&self) -> &GeneratorModel {
        &self.model
    }

    fn draft(&mut self, request: &DraftRequest<'_>, rng: &mut dyn RngCore) -> UnitNode {
        let p = self.model.step(request.step).p;
        let mut taken: BTreeSet<String> = request.tree.unit_names().into_iter().map(str::to_string).collect();
        let replaced = request
            .tree
            .find(&request.unit.name)
            .map(|n| n.size())
            .unwrap_or(1);
        if request.force_reuse {
            if let Some(mut node) = self.crossover_root(request.parents, rng) {
                let mut taken: BTreeSet<String> = node.nodes().iter().map(|n| n.decl.name.clone()).collect();
                self.maybe_corrupt(&mut node, p, &mut taken, rng);
                return node;
            }
        }
        let mut decl = request.unit.clone();
        // Only the first unit may be renamed: later units are children that an
        // accepted, frozen parent already refers to by name.
        if request.step == 0 {
            taken.remove(&request.unit.name);
            decl.name = self.pick_name(&mut taken, rng);
        }
        let mut node = match self.chain {
            Some(n) => {
                let children = if request.step == 0 { n - 1 } else { 0 };
                let pick = rng.random_range(0..LEAVES.len());
                self.shaped(&decl, children, pick, &mut taken, rng)
            }
            None => {
                let remaining = self.unit_budget.saturating_sub(request.tree.size() - replaced + 1);
                self.template(&decl, remaining, &mut taken, rng)
            }
        };
        self.maybe_corrupt(&mut node, p, &mut taken, rng);
        node
    }

    fn draft_whole(&mut self, design_name: &str, rng: &mut dyn RngCore) -> UnitTree {
        let n = self.model.steps.len();
        let mut taken = BTreeSet::new();
        let root_name = self.pick_name(&mut taken, rng);
        let mut root = if n == 1 {
            self.template(&UnitDecl::new(&root_name), 0, &mut taken, rng)
        } else {
            let names: Vec<String> = (1..n).map(|_| self.pick_name(&mut taken, rng)).collect();
            let children = names
                .iter()
                .map(|c| self.template(&UnitDecl::new(c), 0, &mut BTreeSet::new(), rng))
                .collect();
            UnitNode {
                decl: UnitDecl::new(&root_name).with_requirements("sequential composition"),
                body: UnitBody::Source(composite_body(&names)),
                children,
                protected: false,
            }
        };
        self.maybe_corrupt(&mut root, self.model.step(0).p, &mut taken, rng);
        for k in 1..n {
            let p = self.model.step(k).p;
            let child = &mut root.children[k - 1];
            self.maybe_corrupt(child, p, &mut taken, rng);
        }
        UnitTree::new(design_name, root)
    }
}

/// Replays fixed drafts in order. Runs out into syntax errors.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    model: GeneratorModel,
    drafts: VecDeque<UnitNode>,
    wholes: VecDeque<UnitTree>,
}

impl ScriptedGenerator {
    pub fn new(model: GeneratorModel, drafts: Vec<UnitNode>) -> Self {
        ScriptedGenerator {
            model,
            drafts: drafts.into(),
            wholes: VecDeque::new(),
        }
    }

    pub fn with_wholes(mut self, wholes: Vec<UnitTree>) -> Self {
        self.wholes = wholes.into();
        self
    }

    pub fn remaining(&self) -> usize {
        self.drafts.len()
    }

    fn exhausted(name: &str) -> UnitNode {
        UnitNode {
            decl: UnitDecl::new(name),
            body: UnitBody::Source("script exhausted(\n".into()),
            children: Vec::new(),
            protected: false,
        }
    }
}

impl Generator for ScriptedGenerator {
    fn model(&self) -> &GeneratorModel {
        &self.model
    }

    fn draft(&mut self, request: &DraftRequest<'_>, _rng: &mut dyn RngCore) -> UnitNode {
        self.drafts
            .pop_front()
            .unwrap_or_else(|| Self::exhausted(&request.unit.name))
    }

    fn draft_whole(&mut self, design_name: &str, _rng: &mut dyn RngCore) -> UnitTree {
        self.wholes
            .pop_front()
            .unwrap_or_else(|| UnitTree::new(design_name, Self::exhausted("Exhausted")))
    }
}
