//! The five seed designs.
//!
//! The bodies are simplified stand-ins that keep each family's shape: a
//! pre-norm residual root, a causal token mixer and a channel mixer.
//!
//! | seed | units |
//! |------|-------|
//! | `GPT2` | GPT2, GatedMLP, MHA, RMSNorm, RotaryPositionalEmbeddings |
//! | `Mamba2` | Mamba2, Mamba2Layer, ConvShift, SSDMinimalDiscrete, Mamba2Norm |
//! | `RetNet` | RetNet, MultiScaleRetention, RetentionDecay, RetNetMLP, RetNetNorm |
//! | `RWKV6` | RWKV6, TimeMix, TokenShift, ChannelMix, RWKVNorm |
//! | `TTT` | TTT, TTTLinear, SwiGluMLP, TTTNorm |

use crate::unit_tree::{UnitDecl, UnitNode, UnitTree};

/// Seed names in the order of the default seed distribution.
pub const SEED_NAMES: [&str; 5] = ["GPT2", "Mamba2", "RetNet", "TTT", "RWKV6"];

fn norm_body() -> &'static str {
    "param g [1] = uniform(0.9, 1.1)\nparam b [D] = zeros\nn = layernorm(X)\ns = scale(n, g)\no = bias(s, b)\nY = o\n"
}

fn residual_root(norm: &str, mixer: &str, mlp: &str) -> String {
    format!(
        "child {norm}(X) -> (Y) \"normalization\"\n\
         child {mixer}(X) -> (Y) \"causal sequence mixing\"\n\
         child {mlp}(X) -> (Y) \"channel mixing\"\n\
         n1 = call {norm}(X)\n\
         a = call {mixer}(n1)\n\
         h = add(X, a)\n\
         n2 = call {norm}(h)\n\
         m = call {mlp}(n2)\n\
         o = add(h, m)\n\
         Y = o\n"
    )
}

fn unit(name: &str, req: &str, body: &str, children: Vec<UnitNode>) -> UnitNode {
    let mut node = UnitNode::from_source(UnitDecl::new(name).with_requirements(req), body)
        .unwrap_or_else(|e| panic!("seed unit {name}: {e}"));
    let declared = node.children.len();
    node.children = children;
    assert_eq!(declared, node.children.len(), "seed unit {name} children");
    node
}

fn gated_mlp(name: &str) -> UnitNode {
    unit(
        name,
        "gated channel MLP",
        "param W1 [D, D] = uniform(-0.3, 0.3)\nparam W2 [D, D] = uniform(-0.3, 0.3)\nparam W3 [D, D] = uniform(-0.3, 0.3)\nu = linear(X, W1)\ng = linear(X, W2)\na = sigmoid(g)\nh = mul(u, a)\no = linear(h, W3)\nY = o\n",
        vec![],
    )
}

fn norm(name: &str) -> UnitNode {
    unit(name, "normalization with learned gain and bias", norm_body(), vec![])
}

pub fn gpt2() -> UnitTree {
    let rotary = unit(
        "RotaryPositionalEmbeddings",
        "mix each position with its predecessor",
        "param r [1] = uniform(0.4, 0.6)\np = shift(X, 1)\ns = scale(p, r)\no = add(X, s)\nY = o\n",
        vec![],
    );
    let mha = unit(
        "MHA",
        "causal gated linear attention",
        "param Wq [D, D] = uniform(-0.3, 0.3)\nparam Wk [D, D] = uniform(-0.3, 0.3)\nparam Wv [D, D] = uniform(-0.3, 0.3)\nparam Wo [D, D] = uniform(-0.3, 0.3)\nchild RotaryPositionalEmbeddings(X) -> (Y) \"position mixing\"\nq = linear(X, Wq)\nk = linear(X, Wk)\nv = linear(X, Wv)\nqr = call RotaryPositionalEmbeddings(q)\ng = sigmoid(k)\nkv = mul(g, v)\nc = cumsum(kv)\ns = scale(c, 0.25)\nqs = sigmoid(qr)\nm = mul(qs, s)\no = linear(m, Wo)\nY = o\n",
        vec![rotary],
    );
    let root = unit(
        "GPT2",
        "pre-norm transformer block",
        &residual_root("RMSNorm", "MHA", "GatedMLP"),
        vec![norm("RMSNorm"), mha, gated_mlp("GatedMLP")],
    );
    UnitTree::new("GPT2", root)
}

pub fn mamba2() -> UnitTree {
    let conv = unit(
        "ConvShift",
        "short causal convolution",
        "param a [1] = uniform(0.3, 0.7)\np1 = shift(X, 1)\np2 = shift(X, 2)\ns1 = scale(p1, a)\nt = add(X, s1)\no = add(t, p2)\nY = o\n",
        vec![],
    );
    let ssd = unit(
        "SSDMinimalDiscrete",
        "selective scan; exports its running state",
        "param Wdt [D, D] = uniform(-0.3, 0.3)\nparam bdt [D] = zeros\ndt = linear(X, Wdt)\ndb = bias(dt, bdt)\ngate = sigmoid(db)\nu = mul(gate, X)\nc = cumsum(u)\ns = scale(c, 0.25)\nY = s\nexport ssm_state = c\n",
        vec![],
    );
    let layer = unit(
        "Mamba2Layer",
        "gated state-space layer",
        "param Win [D, D] = uniform(-0.3, 0.3)\nparam Wg [D, D] = uniform(-0.3, 0.3)\nparam Wout [D, D] = uniform(-0.3, 0.3)\nchild ConvShift(X) -> (Y) \"short causal convolution\"\nchild SSDMinimalDiscrete(X) -> (Y, ssm_state) \"selective scan\"\nu = linear(X, Win)\nc = call ConvShift(u)\na = tanh(c)\ns = call SSDMinimalDiscrete(a)\nst = scale(Z.ssm_state, 0.05)\nr = add(s, st)\ng = linear(X, Wg)\ngs = sigmoid(g)\nh = mul(r, gs)\no = linear(h, Wout)\nY = o\n",
        vec![conv, ssd],
    );
    let root = unit(
        "Mamba2",
        "pre-norm state-space block",
        "child Mamba2Norm(X) -> (Y) \"normalization\"\nchild Mamba2Layer(X) -> (Y) \"state-space mixing\"\nn = call Mamba2Norm(X)\nm = call Mamba2Layer(n)\no = add(X, m)\nY = o\n",
        vec![norm("Mamba2Norm"), layer],
    );
    UnitTree::new("Mamba2", root)
}

pub fn retnet() -> UnitTree {
    let decay = unit(
        "RetentionDecay",
        "decayed causal accumulation",
        "param gamma [1] = uniform(0.4, 0.6)\np = shift(X, 1)\ns = scale(p, gamma)\nh = add(X, s)\nc = cumsum(h)\no = scale(c, 0.2)\nY = o\n",
        vec![],
    );
    let msr = unit(
        "MultiScaleRetention",
        "retention with decay",
        "param Wq [D, D] = uniform(-0.3, 0.3)\nparam Wk [D, D] = uniform(-0.3, 0.3)\nparam Wv [D, D] = uniform(-0.3, 0.3)\nparam Wo [D, D] = uniform(-0.3, 0.3)\nchild RetentionDecay(X) -> (Y) \"decayed accumulation\"\nq = linear(X, Wq)\nk = linear(X, Wk)\nv = linear(X, Wv)\nkv = mul(k, v)\nd = call RetentionDecay(kv)\nqs = tanh(q)\nm = mul(qs, d)\no = linear(m, Wo)\nY = o\n",
        vec![decay],
    );
    let mlp = unit(
        "RetNetMLP",
        "two-layer ReLU MLP",
        "param W1 [D, D] = uniform(-0.3, 0.3)\nparam W2 [D, D] = uniform(-0.3, 0.3)\nparam b1 [D] = uniform(0.05, 0.15)\nh = linear(X, W1)\nhb = bias(h, b1)\na = relu(hb)\no = linear(a, W2)\nY = o\n",
        vec![],
    );
    let root = unit(
        "RetNet",
        "pre-norm retention block",
        &residual_root("RetNetNorm", "MultiScaleRetention", "RetNetMLP"),
        vec![norm("RetNetNorm"), msr, mlp],
    );
    UnitTree::new("RetNet", root)
}

pub fn rwkv6() -> UnitTree {
    let shift = unit(
        "TokenShift",
        "interpolate with the previous token",
        "param mu [1] = uniform(0.3, 0.7)\np = shift(X, 1)\nd = scale(p, mu)\no = add(X, d)\nY = o\n",
        vec![],
    );
    let time = unit(
        "TimeMix",
        "receptance-gated causal mixing",
        "param Wr [D, D] = uniform(-0.3, 0.3)\nparam Wk [D, D] = uniform(-0.3, 0.3)\nparam Wv [D, D] = uniform(-0.3, 0.3)\nparam Wo [D, D] = uniform(-0.3, 0.3)\nchild TokenShift(X) -> (Y) \"token shift\"\ns = call TokenShift(X)\nr = linear(s, Wr)\nk = linear(s, Wk)\nv = linear(X, Wv)\nek = sigmoid(k)\nkv = mul(ek, v)\nc = cumsum(kv)\ncs = scale(c, 0.2)\nrg = sigmoid(r)\nm = mul(rg, cs)\no = linear(m, Wo)\nY = o\n",
        vec![shift],
    );
    let channel = unit(
        "ChannelMix",
        "squared-ReLU channel mixing",
        "param Wk [D, D] = uniform(-0.3, 0.3)\nparam Wv [D, D] = uniform(-0.3, 0.3)\nparam Wr [D, D] = uniform(-0.3, 0.3)\nk = linear(X, Wk)\na = relu(k)\na2 = mul(a, a)\nv = linear(a2, Wv)\nr = linear(X, Wr)\ng = sigmoid(r)\no = mul(g, v)\nY = o\n",
        vec![],
    );
    let root = unit(
        "RWKV6",
        "pre-norm RWKV block",
        &residual_root("RWKVNorm", "TimeMix", "ChannelMix"),
        vec![norm("RWKVNorm"), time, channel],
    );
    UnitTree::new("RWKV6", root)
}

pub fn ttt() -> UnitTree {
    let linear = unit(
        "TTTLinear",
        "fast-weight style accumulation",
        "param Wk [D, D] = uniform(-0.3, 0.3)\nparam Wv [D, D] = uniform(-0.3, 0.3)\nparam Wq [D, D] = uniform(-0.3, 0.3)\nparam lr [1] = uniform(0.05, 0.15)\nk = linear(X, Wk)\nv = linear(X, Wv)\ne = mul(k, v)\nc = cumsum(e)\nst = scale(c, lr)\nq = linear(X, Wq)\no = mul(q, st)\nt = tanh(o)\nY = t\n",
        vec![],
    );
    let root = unit(
        "TTT",
        "pre-norm test-time-training block",
        &residual_root("TTTNorm", "TTTLinear", "SwiGluMLP"),
        vec![norm("TTTNorm"), linear, gated_mlp("SwiGluMLP")],
    );
    UnitTree::new("TTT", root)
}

/// The five seeds in [`SEED_NAMES`] order.
pub fn build_seed_trees() -> Vec<UnitTree> {
    vec![gpt2(), mamba2(), retnet(), ttt(), rwkv6()]
}

pub fn seed(name: &str) -> Option<UnitTree> {
    build_seed_trees().into_iter().find(|t| t.design_name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{run_all, CheckerConfig};
    use crate::unit_tree::{canonical_hash, unit_bag};

    #[test]
    fn seeds_pass_every_check() {
        let cfg = CheckerConfig::default();
        for t in build_seed_trees() {
            let report = run_all(&t, &cfg, 7);
            assert!(report.passed(), "{}: {}", t.design_name, report.to_json());
        }
    }

    #[test]
    fn seeds_are_distinct_and_sized() {
        let trees = build_seed_trees();
        let mut hashes: Vec<String> = trees.iter().map(canonical_hash).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 5);
        let sizes: Vec<usize> = trees.iter().map(UnitTree::size).collect();
        assert_eq!(sizes, [5, 5, 5, 4, 5]);
        let bag = unit_bag(&gpt2());
        let names: Vec<&str> = bag.keys().map(String::as_str).collect();
        assert_eq!(names, ["GPT2", "GatedMLP", "MHA", "RMSNorm", "RotaryPositionalEmbeddings"]);
    }
}
