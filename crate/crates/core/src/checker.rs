//! Validity pipeline for candidate designs.
//!
//! Static checks (parser, formatter) run first; execution checks
//! (initialization, forward, backward, causality, differentiability,
//! effectiveness) follow in that order. The first failure marks every later
//! check as skipped.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dsl::{flops, init_params, parse, BlockProgram, Loss, ParamStore, Section, Trace};
use crate::oracle::seeds;
use crate::tensor::{NamedTensorMap, Tensor};
use crate::unit_tree::{compose, parse_fragment, UnitBody, UnitTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Parser,
    Formatter,
    Initialization,
    Forward,
    Backward,
    Causality,
    Differentiability,
    Effectiveness,
}

impl CheckName {
    pub const ORDER: [CheckName; 8] = [
        CheckName::Parser,
        CheckName::Formatter,
        CheckName::Initialization,
        CheckName::Forward,
        CheckName::Backward,
        CheckName::Causality,
        CheckName::Differentiability,
        CheckName::Effectiveness,
    ];

    pub fn is_static(self) -> bool {
        matches!(self, CheckName::Parser | CheckName::Formatter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Message {
        detail: String,
    },
    Unit {
        unit: String,
        detail: String,
    },
    Causality {
        t: usize,
        deviation: f64,
    },
    DanglingParameters {
        parameters: Vec<String>,
    },
    NonFiniteGradient {
        parameter: String,
    },
    Effectiveness {
        initial_loss: f64,
        final_loss: f64,
        max_grad_norm: f64,
        flop_ratio: f64,
        reasons: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: CheckName,
    pub outcome: Outcome,
    pub witness: Option<Witness>,
}

impl CheckResult {
    fn pass(check: CheckName) -> Self {
        CheckResult {
            check,
            outcome: Outcome::Pass,
            witness: None,
        }
    }

    fn pass_with(check: CheckName, witness: Witness) -> Self {
        CheckResult {
            check,
            outcome: Outcome::Pass,
            witness: Some(witness),
        }
    }

    fn fail(check: CheckName, witness: Witness) -> Self {
        CheckResult {
            check,
            outcome: Outcome::Fail,
            witness: Some(witness),
        }
    }

    fn message(check: CheckName, detail: impl ToString) -> Self {
        Self::fail(
            check,
            Witness::Message {
                detail: detail.to_string(),
            },
        )
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    StaticFailure,
    ExecutionFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
    pub verdict: Verdict,
}

impl CheckReport {
    fn from_results(results: Vec<CheckResult>) -> Self {
        let first_fail = results.iter().find(|r| r.outcome == Outcome::Fail);
        let verdict = match first_fail {
            None => Verdict::Pass,
            Some(r) if r.check.is_static() => Verdict::StaticFailure,
            Some(_) => Verdict::ExecutionFailure,
        };
        CheckReport { results, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn result(&self, check: CheckName) -> &CheckResult {
        self.results
            .iter()
            .find(|r| r.check == check)
            .expect("every check is reported")
    }

    /// Command-line exit status: 0 pass, 2 static failure, 3 execution failure.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::StaticFailure => 2,
            Verdict::ExecutionFailure => 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProbeShape {
    pub batch: usize,
    pub length: usize,
    pub width: usize,
}

impl Default for ProbeShape {
    fn default() -> Self {
        ProbeShape {
            batch: 2,
            length: 8,
            width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessConfig {
    pub vocab: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub reference: BlockProgram,
    pub flop_ratio_bound: f64,
    pub grad_norm_bound: f64,
    /// Any training loss above this counts as divergence.
    pub loss_ceiling: f64,
}

impl Default for EffectivenessConfig {
    fn default() -> Self {
        EffectivenessConfig {
            vocab: 16,
            seq_len: 16,
            batch: 4,
            steps: 10,
            learning_rate: 0.05,
            reference: compose(&seeds::gpt2()).expect("reference seed composes"),
            flop_ratio_bound: 5.0,
            grad_norm_bound: 1e4,
            loss_ceiling: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid checker configuration: {0}")]
pub struct ConfigError(pub String);

impl EffectivenessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps < 2 {
            return Err(ConfigError("step count must be at least 2".into()));
        }
        if self.vocab < 2 || self.seq_len < 2 || self.batch < 1 {
            return Err(ConfigError("toy task needs vocab >= 2, seq_len >= 2, batch >= 1".into()));
        }
        let positive = [
            self.learning_rate,
            self.flop_ratio_bound,
            self.grad_norm_bound,
            self.loss_ceiling,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ConfigError("rates and bounds must be positive".into()));
        }
        Ok(())
    }

    fn reference_flops(&self) -> u64 {
        flops(&self.reference, self.batch, self.seq_len, self.vocab)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckerConfig {
    pub probe: ProbeShape,
    pub causality_probes: usize,
    pub causality_tolerance: f64,
    pub differentiability_probes: usize,
    pub effectiveness: EffectivenessConfig,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            probe: ProbeShape::default(),
            causality_probes: 2,
            causality_tolerance: 1e-9,
            differentiability_probes: 3,
            effectiveness: EffectivenessConfig::default(),
        }
    }
}

fn random_activation<R: Rng + ?Sized>(shape: ProbeShape, rng: &mut R) -> Tensor {
    Tensor::from_fn(vec![shape.batch, shape.length, shape.width], || {
        rng.random_range(-1.0..1.0)
    })
}

/// Every non-placeholder body parses as a bare fragment.
pub fn check_parser(tree: &UnitTree) -> CheckResult {
    for node in tree.root.nodes() {
        if let UnitBody::Source(src) = &node.body {
            if let Err(e) = parse_fragment(node.name(), src) {
                return CheckResult::fail(
                    CheckName::Parser,
                    Witness::Unit {
                        unit: node.name().to_string(),
                        detail: e.to_string(),
                    },
                );
            }
        }
    }
    CheckResult::pass(CheckName::Parser)
}

fn section_protocol(unit: &str, section: &Section) -> Option<Witness> {
    let declared: BTreeSet<&str> = section.children().map(|c| c.name.as_str()).collect();
    let invoked: BTreeSet<&str> = section.calls().collect();
    if let Some(c) = declared.difference(&invoked).next() {
        return Some(Witness::Unit {
            unit: unit.to_string(),
            detail: format!("child `{c}` is declared but never invoked"),
        });
    }
    if let Some(c) = invoked.difference(&declared).next() {
        return Some(Witness::Unit {
            unit: unit.to_string(),
            detail: format!("`{c}` is invoked but not declared"),
        });
    }
    None
}

/// Declared children and invoked children agree in every unit, and the tree composes.
pub fn check_format(tree: &UnitTree) -> CheckResult {
    for node in tree.root.nodes() {
        if let UnitBody::Source(src) = &node.body {
            let section = match parse_fragment(node.name(), src) {
                Ok(s) => s,
                Err(e) => {
                    return CheckResult::fail(
                        CheckName::Formatter,
                        Witness::Unit {
                            unit: node.name().to_string(),
                            detail: e.to_string(),
                        },
                    )
                }
            };
            if let Some(w) = section_protocol(node.name(), &section) {
                return CheckResult::fail(CheckName::Formatter, w);
            }
        }
    }
    match compose(tree) {
        Ok(_) => CheckResult::pass(CheckName::Formatter),
        Err(e) => CheckResult::message(CheckName::Formatter, e),
    }
}

/// Program-level counterpart of [`check_format`].
pub fn check_program_format(p: &BlockProgram) -> CheckResult {
    for s in &p.sections {
        let name = s.name().unwrap_or("<anonymous>");
        if let Some(w) = section_protocol(name, s) {
            return CheckResult::fail(CheckName::Formatter, w);
        }
        for c in s.children() {
            if p.section(&c.name).is_none() {
                return CheckResult::fail(
                    CheckName::Formatter,
                    Witness::Unit {
                        unit: name.to_string(),
                        detail: format!("child `{}` has no section", c.name),
                    },
                );
            }
        }
    }
    CheckResult::pass(CheckName::Formatter)
}

/// Initializers realize the declared shapes.
pub fn check_initialization<R: Rng + ?Sized>(
    p: &BlockProgram,
    shape: ProbeShape,
    rng: &mut R,
) -> CheckResult {
    match init_params(p, shape.width, rng) {
        Ok(_) => CheckResult::pass(CheckName::Initialization),
        Err(e) => CheckResult::message(CheckName::Initialization, e),
    }
}

fn probe_trace<R: Rng + ?Sized>(
    p: &BlockProgram,
    shape: ProbeShape,
    rng: &mut R,
) -> Result<(Trace, Tensor, ParamStore), String> {
    let theta = init_params(p, shape.width, rng).map_err(|e| e.to_string())?;
    let x = random_activation(shape, rng);
    let trace = Trace::record(p, &x, &NamedTensorMap::new(), &theta).map_err(|e| e.to_string())?;
    Ok((trace, x, theta))
}

/// One forward pass on a random probe produces a finite `[B, L, D]` output.
pub fn check_forward<R: Rng + ?Sized>(p: &BlockProgram, shape: ProbeShape, rng: &mut R) -> CheckResult {
    match probe_trace(p, shape, rng) {
        Ok((trace, x, _)) if trace.output().shape() == x.shape() => {
            CheckResult::pass(CheckName::Forward)
        }
        Ok(_) => CheckResult::message(CheckName::Forward, "output shape differs from input"),
        Err(e) => CheckResult::message(CheckName::Forward, e),
    }
}

/// A backward pass from a random cotangent completes and covers every parameter.
pub fn check_backward<R: Rng + ?Sized>(p: &BlockProgram, shape: ProbeShape, rng: &mut R) -> CheckResult {
    match probe_trace(p, shape, rng) {
        Ok((trace, _, theta)) => {
            let dy: Vec<f64> = (0..trace.output_data().len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let grads = trace.backward(&dy);
            if grads.keys().eq(theta.keys()) {
                CheckResult::pass(CheckName::Backward)
            } else {
                CheckResult::message(CheckName::Backward, "gradient set does not match parameters")
            }
        }
        Err(e) => CheckResult::message(CheckName::Backward, e),
    }
}

/// Perturbs positions after `t` and requires outputs at positions `<= t` to stay put.
pub fn check_causality<R: Rng + ?Sized>(
    p: &BlockProgram,
    probes: usize,
    rng: &mut R,
) -> CheckResult {
    check_causality_with(p, probes, ProbeShape::default(), 1e-9, rng)
}

pub fn check_causality_with<R: Rng + ?Sized>(
    p: &BlockProgram,
    probes: usize,
    shape: ProbeShape,
    tolerance: f64,
    rng: &mut R,
) -> CheckResult {
    let (b, l, d) = (shape.batch, shape.length, shape.width);
    for _ in 0..probes {
        let theta = match init_params(p, d, rng) {
            Ok(t) => t,
            Err(e) => return CheckResult::message(CheckName::Causality, e),
        };
        let x = random_activation(shape, rng);
        let z = NamedTensorMap::new();
        let base = match Trace::record(p, &x, &z, &theta) {
            Ok(t) => t,
            Err(e) => return CheckResult::message(CheckName::Causality, e),
        };
        let y0 = base.output_data();
        for t in 0..l.saturating_sub(1) {
            let mut xp = x.clone();
            for bi in 0..b {
                let start = (bi * l + t + 1) * d;
                let end = (bi + 1) * l * d;
                for v in &mut xp.data_mut()[start..end] {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            let run = match Trace::record(p, &xp, &z, &theta) {
                Ok(r) => r,
                Err(e) => return CheckResult::message(CheckName::Causality, e),
            };
            let y1 = run.output_data();
            let mut deviation = 0.0f64;
            for bi in 0..b {
                let range = bi * l * d..(bi * l + t + 1) * d;
                for (u, v) in y0[range.clone()].iter().zip(&y1[range]) {
                    deviation = deviation.max((u - v).abs());
                }
            }
            if deviation > tolerance || deviation.is_nan() {
                return CheckResult::fail(CheckName::Causality, Witness::Causality { t, deviation });
            }
        }
    }
    CheckResult::pass(CheckName::Causality)
}

/// Gradients are finite and every parameter receives signal on some probe.
pub fn check_differentiability<R: Rng + ?Sized>(
    p: &BlockProgram,
    probes: usize,
    shape: ProbeShape,
    rng: &mut R,
) -> CheckResult {
    let mut live: BTreeSet<String> = BTreeSet::new();
    let mut names: Vec<String> = Vec::new();
    for _ in 0..probes {
        let (trace, _, theta) = match probe_trace(p, shape, rng) {
            Ok(v) => v,
            Err(e) => return CheckResult::message(CheckName::Differentiability, e),
        };
        names = theta.keys().cloned().collect();
        let w: Vec<f64> = (0..trace.output_data().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let (_, dy) = trace.loss(&Loss::Weighted(w));
        for (name, g) in trace.backward(&dy) {
            if !g.is_finite() {
                return CheckResult::fail(
                    CheckName::Differentiability,
                    Witness::NonFiniteGradient { parameter: name },
                );
            }
            if g.data().iter().any(|v| *v != 0.0) {
                live.insert(name);
            }
        }
    }
    let dangling: Vec<String> = names.into_iter().filter(|n| !live.contains(n)).collect();
    if dangling.is_empty() {
        CheckResult::pass(CheckName::Differentiability)
    } else {
        CheckResult::fail(
            CheckName::Differentiability,
            Witness::DanglingParameters { parameters: dangling },
        )
    }
}

/// Copy-previous-token training run plus the FLOP gate.
pub fn check_effectiveness<R: Rng + ?Sized>(
    p: &BlockProgram,
    cfg: &EffectivenessConfig,
    rng: &mut R,
) -> CheckResult {
    if let Err(e) = cfg.validate() {
        return CheckResult::message(CheckName::Effectiveness, e);
    }
    let (b, l, v) = (cfg.batch, cfg.seq_len, cfg.vocab);
    let tokens: Vec<usize> = (0..b * l).map(|_| rng.random_range(0..v)).collect();
    let mut x = Tensor::zeros(vec![b, l, v]);
    for (r, &tok) in tokens.iter().enumerate() {
        x.data_mut()[r * v + tok] = 1.0;
    }
    let targets: Vec<usize> = (0..b * l)
        .map(|r| if r % l == 0 { 0 } else { tokens[r - 1] })
        .collect();
    let loss = Loss::CrossEntropy {
        targets,
        from_position: 1,
    };
    let mut theta = match init_params(p, v, rng) {
        Ok(t) => t,
        Err(e) => return CheckResult::message(CheckName::Effectiveness, e),
    };
    let z = NamedTensorMap::new();
    let mut reasons = Vec::new();
    let mut initial = f64::NAN;
    let mut max_norm = 0.0f64;
    for step in 0..cfg.steps {
        let trace = match Trace::record(p, &x, &z, &theta) {
            Ok(t) => t,
            Err(e) => return CheckResult::message(CheckName::Effectiveness, e),
        };
        let (value, dy) = trace.loss(&loss);
        if step == 0 {
            initial = value;
        }
        if !(value <= cfg.loss_ceiling) {
            reasons.push(format!("loss {value} exceeds ceiling at step {step}"));
            break;
        }
        let grads = trace.backward(&dy);
        let norm = grads.values().map(Tensor::norm_sq).sum::<f64>().sqrt();
        max_norm = max_norm.max(norm);
        if !(norm <= cfg.grad_norm_bound) {
            reasons.push(format!("gradient norm {norm:e} exceeds bound at step {step}"));
            break;
        }
        for (name, g) in grads {
            let t = theta.get_mut(&name).expect("gradient names match parameters");
            for (w, gi) in t.data_mut().iter_mut().zip(g.data()) {
                *w -= cfg.learning_rate * gi;
            }
        }
    }
    let final_loss = match Trace::record(p, &x, &z, &theta) {
        Ok(t) => t.loss(&loss).0,
        Err(e) => return CheckResult::message(CheckName::Effectiveness, e),
    };
    if reasons.is_empty() && !(final_loss < initial) {
        reasons.push("loss did not decrease".into());
    }
    let reference = cfg.reference_flops();
    let flop_ratio = if reference == 0 {
        f64::INFINITY
    } else {
        flops(p, b, l, v) as f64 / reference as f64
    };
    if !(flop_ratio <= cfg.flop_ratio_bound) {
        reasons.push(format!(
            "flop ratio {flop_ratio:.3} exceeds bound {}",
            cfg.flop_ratio_bound
        ));
    }
    let witness = Witness::Effectiveness {
        initial_loss: initial,
        final_loss,
        max_grad_norm: max_norm,
        flop_ratio,
        reasons: reasons.clone(),
    };
    if reasons.is_empty() {
        CheckResult::pass_with(CheckName::Effectiveness, witness)
    } else {
        CheckResult::fail(CheckName::Effectiveness, witness)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn finish(mut results: Vec<CheckResult>) -> CheckReport {
    let done: Vec<CheckName> = results.iter().map(|r| r.check).collect();
    for check in CheckName::ORDER {
        if !done.contains(&check) {
            results.push(CheckResult {
                check,
                outcome: Outcome::Skipped,
                witness: None,
            });
        }
    }
    CheckReport::from_results(results)
}

type CheckFn<'a> = Box<dyn FnOnce() -> CheckResult + 'a>;

fn run_sequence(mut results: Vec<CheckResult>, checks: Vec<CheckFn<'_>>) -> CheckReport {
    if results.iter().any(|r| !r.passed()) {
        return finish(results);
    }
    for check in checks {
        let r = check();
        let failed = !r.passed();
        results.push(r);
        if failed {
            break;
        }
    }
    finish(results)
}

fn execution_checks<'a>(p: &'a BlockProgram, cfg: &'a CheckerConfig, seed: u64) -> Vec<CheckFn<'a>> {
    vec![
        Box::new(move || check_initialization(p, cfg.probe, &mut stream(seed, 1))),
        Box::new(move || check_forward(p, cfg.probe, &mut stream(seed, 2))),
        Box::new(move || check_backward(p, cfg.probe, &mut stream(seed, 3))),
        Box::new(move || {
            check_causality_with(
                p,
                cfg.causality_probes,
                cfg.probe,
                cfg.causality_tolerance,
                &mut stream(seed, 4),
            )
        }),
        Box::new(move || {
            check_differentiability(p, cfg.differentiability_probes, cfg.probe, &mut stream(seed, 5))
        }),
        Box::new(move || check_effectiveness(p, &cfg.effectiveness, &mut stream(seed, 6))),
    ]
}

/// Full pipeline over a unit tree. Identical `seed`s give identical reports.
pub fn run_all(tree: &UnitTree, cfg: &CheckerConfig, seed: u64) -> CheckReport {
    let parser = check_parser(tree);
    if !parser.passed() {
        return finish(vec![parser]);
    }
    let format = check_format(tree);
    if !format.passed() {
        return finish(vec![parser, format]);
    }
    let program = compose(tree).expect("formatter pass implies composition");
    run_sequence(vec![parser, format], execution_checks(&program, cfg, seed))
}

/// Static checks only.
pub fn run_static(tree: &UnitTree) -> CheckReport {
    let parser = check_parser(tree);
    if !parser.passed() {
        return finish(vec![parser]);
    }
    let format = check_format(tree);
    let mut report = finish(vec![parser, format]);
    if report.verdict == Verdict::Pass {
        // Execution checks never ran; report the static verdict only.
        report.results.retain(|r| r.check.is_static());
    }
    report
}

/// Full pipeline over raw program text.
pub fn run_source(text: &str, cfg: &CheckerConfig, seed: u64) -> CheckReport {
    let program = match parse(text) {
        Ok(p) => p,
        Err(e) => return finish(vec![CheckResult::message(CheckName::Parser, e)]),
    };
    let results = vec![CheckResult::pass(CheckName::Parser), check_program_format(&program)];
    run_sequence(results, execution_checks(&program, cfg, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unit_tree::{UnitDecl, UnitNode};

    fn single(src: &str) -> UnitTree {
        UnitTree::new("T", UnitNode::from_source(UnitDecl::new("T"), src).unwrap())
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn format_detects_both_protocol_errors() {
        let ok = UnitTree::new(
            "P",
            UnitNode::from_source(UnitDecl::new("P"), "child C(X) -> (Y)\nc = call C(X)\nY = c").unwrap(),
        );
        assert!(check_format(&ok).passed());
        let unused = UnitTree::new(
            "P",
            UnitNode::from_source(UnitDecl::new("P"), "child C(X) -> (Y)\nY = X").unwrap(),
        );
        let r = check_format(&unused);
        assert_eq!(r.outcome, Outcome::Fail);
        assert!(matches!(r.witness, Some(Witness::Unit { ref unit, .. }) if unit == "P"));
        let undeclared = single("c = call C(X)\nY = c");
        assert_eq!(check_format(&undeclared).outcome, Outcome::Fail);
    }

    #[test]
    fn causality_pass_and_fail() {
        let p = parse("c = cumsum(X)\nt = tanh(c)\nY = t").unwrap();
        assert!(check_causality(&p, 2, &mut rng()).passed());
        let p = parse("m = mean(X)\nY = m").unwrap();
        match check_causality(&p, 2, &mut rng()).witness {
            Some(Witness::Causality { t, deviation }) => {
                assert!(t < 7);
                assert!(deviation > 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_parameter_is_named() {
        let p = parse("param W [D, D] = uniform(-1, 1)\nparam U [D, D] = uniform(-1, 1)\nh = linear(X, W)\nY = h").unwrap();
        let r = check_differentiability(&p, 3, ProbeShape::default(), &mut rng());
        assert_eq!(
            r.witness,
            Some(Witness::DanglingParameters {
                parameters: vec!["U".into()]
            })
        );
    }

    #[test]
    fn overflow_gradient_is_non_finite() {
        let p = parse("param g [1] = zeros\nh = scale(X, g)\na = scale(h, 1e200)\ns = sigmoid(a)\ny = scale(s, 1e200)\nY = y").unwrap();
        let mut r = rng();
        assert!(check_forward(&p, ProbeShape::default(), &mut r).passed());
        assert!(check_backward(&p, ProbeShape::default(), &mut r).passed());
        let res = check_differentiability(&p, 3, ProbeShape::default(), &mut r);
        assert!(matches!(res.witness, Some(Witness::NonFiniteGradient { ref parameter }) if parameter == "g"));
    }

    #[test]
    fn reference_against_itself() {
        let cfg = EffectivenessConfig::default();
        let reference = cfg.reference.clone();
        let r = check_effectiveness(&reference, &cfg, &mut rng());
        match &r.witness {
            Some(Witness::Effectiveness { flop_ratio, initial_loss, final_loss, .. }) => {
                assert_eq!(*flop_ratio, 1.0);
                assert!(final_loss < initial_loss);
            }
            other => panic!("{other:?}"),
        }
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn parameter_free_program_cannot_learn() {
        let p = parse("t = tanh(X)\nY = t").unwrap();
        let r = check_effectiveness(&p, &EffectivenessConfig::default(), &mut rng());
        assert_eq!(r.outcome, Outcome::Fail);
    }

    #[test]
    fn broken_body_skips_execution_checks() {
        let mut node = UnitNode::placeholder(UnitDecl::new("T"));
        node.body = crate::unit_tree::UnitBody::Source("h = linear(X, W\nY = h".into());
        let t = UnitTree::new("T", node);
        let report = run_all(&t, &CheckerConfig::default(), 1);
        assert_eq!(report.result(CheckName::Parser).outcome, Outcome::Fail);
        assert!(report.results[2..].iter().all(|r| r.outcome == Outcome::Skipped));
        assert_eq!(report.exit_code(), 2);
    }

    #[test]
    fn non_causal_tree_stops_at_causality() {
        let t = single("param W [D, D] = uniform(-0.5, 0.5)\nh = linear(X, W)\nm = mean(h)\nY = m");
        let report = run_all(&t, &CheckerConfig::default(), 1);
        assert_eq!(report.result(CheckName::Formatter).outcome, Outcome::Pass);
        assert_eq!(report.result(CheckName::Causality).outcome, Outcome::Fail);
        assert_eq!(report.result(CheckName::Effectiveness).outcome, Outcome::Skipped);
        assert_eq!(report.exit_code(), 3);
    }

    #[test]
    fn report_json_keeps_check_order() {
        let report = run_all(&single("Y = X"), &CheckerConfig::default(), 5);
        let json = report.to_json();
        let parser = json.find("\"parser\"").unwrap();
        let effectiveness = json.find("\"effectiveness\"").unwrap();
        assert!(parser < effectiveness);
    }
}
