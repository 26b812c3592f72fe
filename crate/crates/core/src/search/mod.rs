//! Staged (unit-by-unit) implementation of design proposals.
//!
//! [`implement`] grows a unit tree one unit at a time. Each candidate unit is
//! checked together with everything accepted so far; a passing unit is frozen
//! and its declared children join the frontier, a failing one is rolled back
//! and redrawn. [`direct_generate`] is the single-shot baseline that redraws
//! the whole design until every unit is valid at once.
//!
//! Retries are modelled as i.i.d. draws, matching the analysis in [`analytic`].

pub mod analytic;
pub mod generator;
pub mod montecarlo;

use std::collections::VecDeque;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::checker::{run_all, run_static, CheckReport, CheckerConfig};
use crate::genome::{replace_subtree, GenomeError};
use crate::unit_tree::{UnitDecl, UnitNode, UnitTree};

pub use generator::{BernoulliGenerator, BrokenKind, ScriptedGenerator};

/// Token costs and success probability of one generation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepModel {
    pub p: f64,
    pub history: f64,
    pub instruction: f64,
    pub output: f64,
}

impl StepModel {
    pub fn free(p: f64) -> Self {
        StepModel {
            p,
            history: 0.0,
            instruction: 0.0,
            output: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QualityDist {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl QualityDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            QualityDist::Constant { value } => value,
            QualityDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            QualityDist::Constant { value } => value.is_finite(),
            QualityDist::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
        }
    }
}

/// Per-step probabilities and token costs. Step `k` past the end reuses the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub steps: Vec<StepModel>,
    /// `c_i`, price per input token.
    pub input_price: f64,
    /// `c_o`, price per output token.
    pub output_price: f64,
    /// Observer rating of an accepted unit.
    pub quality: QualityDist,
    /// Reviewer rating of a proposal.
    pub proposal_quality: QualityDist,
}

impl GeneratorModel {
    /// `n` identical free steps with success probability `p`; gates always pass.
    pub fn uniform(p: f64, n: usize) -> Self {
        GeneratorModel {
            steps: vec![StepModel::free(p); n.max(1)],
            input_price: 0.0,
            output_price: 0.0,
            quality: QualityDist::Constant { value: 5.0 },
            proposal_quality: QualityDist::Constant { value: 5.0 },
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidModel(m.to_string()));
        if self.steps.is_empty() {
            return bad("at least one step is required");
        }
        for s in &self.steps {
            // p = 0 is allowed here so simulations can model a unit that never succeeds;
            // the analytic calculators reject it.
            if !(0.0..=1.0).contains(&s.p) {
                return bad("step probabilities must lie in [0, 1]");
            }
            if [s.history, s.instruction, s.output]
                .iter()
                .any(|c| !(c.is_finite() && *c >= 0.0))
            {
                return bad("token counts must be nonnegative");
            }
        }
        if !(self.input_price >= 0.0 && self.output_price >= 0.0)
            || !self.input_price.is_finite()
            || !self.output_price.is_finite()
        {
            return bad("prices must be nonnegative");
        }
        if !self.quality.is_valid() || !self.proposal_quality.is_valid() {
            return bad("quality distributions must be finite");
        }
        Ok(())
    }

    pub fn step(&self, k: usize) -> &StepModel {
        &self.steps[k.min(self.steps.len() - 1)]
    }

    /// Price of one attempt at step `k`: `c_i (H_k + δ_k) + c_o O_k`.
    pub fn attempt_cost(&self, k: usize) -> f64 {
        let s = self.step(k);
        self.input_price * (s.history + s.instruction) + self.output_price * s.output
    }

    /// Probability that a single-shot draw of all steps is valid.
    pub fn p_direct(&self) -> f64 {
        self.steps.iter().map(|s| s.p).product()
    }

    /// Price of one single-shot draw: `c_i (H_1 + Σ δ_k) + c_o Σ O_k`.
    pub fn full_cost(&self) -> f64 {
        let delta: f64 = self.steps.iter().map(|s| s.instruction).sum();
        let out: f64 = self.steps.iter().map(|s| s.output).sum();
        self.input_price * (self.steps[0].history + delta) + self.output_price * out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k_fails: u32,
    pub k_attempts: u32,
    pub review_threshold: f64,
    pub observer_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k_fails: 5,
            k_attempts: 5,
            review_threshold: 4.0,
            observer_threshold: 3.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.k_fails < 1 || self.k_attempts < 1 {
            return Err(SearchError::InvalidConfig(
                "k_fails and k_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Accepted,
    /// Candidate could not be placed into the tree.
    Malformed,
    CheckerRejected,
    ObserverRejected,
}

/// One generator call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub attempt: u32,
    pub unit: String,
    pub try_index: u32,
    pub outcome: StepOutcome,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Implemented,
    Unimplementable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
    pub attempts: u32,
    pub status: TerminalStatus,
}

impl SearchTrace {
    fn new() -> Self {
        SearchTrace {
            steps: Vec::new(),
            attempts: 0,
            status: TerminalStatus::Unimplementable,
        }
    }

    pub fn calls(&self) -> usize {
        self.steps.len()
    }

    pub fn accepted(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Accepted)
            .count()
    }

    pub fn cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("proposal abandoned after {} attempts", trace.attempts)]
    Unimplementable { trace: Box<SearchTrace> },
    #[error("no valid design after {calls} single-shot calls")]
    RetriesExhausted { calls: u64, cost: f64 },
    #[error("invalid proposal: {0}")]
    InvalidProposal(#[from] GenomeError),
    #[error("invalid generator model: {0}")]
    InvalidModel(String),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("argument outside the domain: {0}")]
    DomainError(String),
}

/// Tree validity oracle used by the search loops.
pub trait Validator {
    fn check(&self, tree: &UnitTree, seed: u64) -> CheckReport;
}

/// Full symbolic checker.
#[derive(Debug, Clone, Default)]
pub struct SymbolicValidator {
    pub config: CheckerConfig,
}

impl Validator for SymbolicValidator {
    fn check(&self, tree: &UnitTree, seed: u64) -> CheckReport {
        run_all(tree, &self.config, seed)
    }
}

/// Parser and format checks only.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticValidator;

impl Validator for StaticValidator {
    fn check(&self, tree: &UnitTree, _seed: u64) -> CheckReport {
        run_static(tree)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProposalKind {
    Mutation { parent: UnitTree, target: String },
    Crossover { parents: [UnitTree; 2] },
    Scratch { root: UnitDecl },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub design_name: String,
    pub kind: ProposalKind,
}

impl Proposal {
    pub fn parents(&self) -> &[UnitTree] {
        match &self.kind {
            ProposalKind::Mutation { parent, .. } => std::slice::from_ref(parent),
            ProposalKind::Crossover { parents } => parents,
            ProposalKind::Scratch { .. } => &[],
        }
    }

    /// Starting tree and first frontier unit.
    fn start(&self) -> Result<(UnitTree, String), SearchError> {
        match &self.kind {
            ProposalKind::Mutation { parent, target } => {
                let node = parent
                    .find(target)
                    .ok_or_else(|| GenomeError::UnknownUnit(target.clone()))?;
                if node.protected {
                    return Err(GenomeError::ProtectedUnit(target.clone()).into());
                }
                let mut tree = parent.clone();
                tree.design_name = self.design_name.clone();
                Ok((tree, target.clone()))
            }
            ProposalKind::Crossover { .. } => {
                let decl = UnitDecl::new("Root");
                Ok((UnitTree::new(&self.design_name, UnitNode::placeholder(decl)), "Root".into()))
            }
            ProposalKind::Scratch { root } => {
                let tree = UnitTree::new(&self.design_name, UnitNode::placeholder(root.clone()));
                tree.validate().map_err(GenomeError::from)?;
                Ok((tree, root.name.clone()))
            }
        }
    }
}

/// What the generator is asked to write.
pub struct DraftRequest<'a> {
    pub tree: &'a UnitTree,
    /// Declaration of the unit being (re)implemented.
    pub unit: &'a UnitDecl,
    /// Index of this unit among accepted steps of the current attempt.
    pub step: usize,
    pub parents: &'a [UnitTree],
    /// Crossover roots must be assembled from parent units.
    pub force_reuse: bool,
}

/// Source of candidate units.
pub trait Generator {
    fn model(&self) -> &GeneratorModel;

    /// A candidate subtree for `request.unit`. Unimplemented children are placeholders.
    fn draft(&mut self, request: &DraftRequest<'_>, rng: &mut dyn RngCore) -> UnitNode;

    /// A whole design of `model().steps.len()` units drawn in one shot.
    fn draft_whole(&mut self, design_name: &str, rng: &mut dyn RngCore) -> UnitTree;

    fn observe(&mut self, _unit: &UnitNode, rng: &mut dyn RngCore) -> f64 {
        self.model().quality.sample(rng)
    }

    fn review(&mut self, rng: &mut dyn RngCore) -> f64 {
        self.model().proposal_quality.sample(rng)
    }
}

/// Reviewer loop: drafts used and the rating of the first proposal scoring at least the threshold.
pub fn review_gate(
    generator: &mut dyn Generator,
    cfg: &SearchConfig,
    max_drafts: u32,
    rng: &mut dyn RngCore,
) -> Option<(u32, f64)> {
    (1..=max_drafts)
        .map(|i| (i, generator.review(rng)))
        .find(|(_, q)| *q >= cfg.review_threshold)
}

/// Staged implementation of `proposal`.
pub fn implement(
    proposal: &Proposal,
    generator: &mut dyn Generator,
    validator: &dyn Validator,
    cfg: &SearchConfig,
    rng: &mut dyn RngCore,
) -> Result<(UnitTree, SearchTrace), SearchError> {
    cfg.validate()?;
    generator.model().validate()?;
    let (base, first) = proposal.start()?;
    let crossover = matches!(proposal.kind, ProposalKind::Crossover { .. });
    let mut trace = SearchTrace::new();
    for attempt in 1..=cfg.k_attempts {
        trace.attempts = attempt;
        let mut tree = base.clone();
        let mut frontier = VecDeque::from([first.clone()]);
        let mut step = 0usize;
        let mut abandoned = false;
        while let Some(unit) = frontier.pop_front() {
            let decl = tree.find(&unit).expect("frontier units are in the tree").decl.clone();
            let mut accepted = false;
            for try_index in 1..=cfg.k_fails {
                let request = DraftRequest {
                    tree: &tree,
                    unit: &decl,
                    step,
                    parents: proposal.parents(),
                    force_reuse: crossover && step == 0,
                };
                let draft = generator.draft(&request, rng);
                let cost = generator.model().attempt_cost(step);
                let outcome = match replace_subtree(&tree, &unit, draft.clone(), false) {
                    Err(_) => StepOutcome::Malformed,
                    Ok(candidate) => {
                        if !validator.check(&candidate, rng.next_u64()).passed() {
                            StepOutcome::CheckerRejected
                        } else if generator.observe(&draft, rng) < cfg.observer_threshold {
                            StepOutcome::ObserverRejected
                        } else {
                            tree = candidate;
                            StepOutcome::Accepted
                        }
                    }
                };
                accepted = outcome == StepOutcome::Accepted;
                trace.steps.push(TraceStep {
                    attempt,
                    unit: unit.clone(),
                    try_index,
                    outcome,
                    cost,
                });
                if accepted {
                    frontier.extend(
                        draft
                            .nodes()
                            .into_iter()
                            .skip(1)
                            .filter(|n| n.is_placeholder())
                            .map(|n| n.decl.name.clone()),
                    );
                    step += 1;
                    break;
                }
            }
            if !accepted {
                abandoned = true;
                break;
            }
        }
        if !abandoned {
            trace.status = TerminalStatus::Implemented;
            return Ok((tree, trace));
        }
    }
    Err(SearchError::Unimplementable {
        trace: Box::new(trace),
    })
}

/// Outcome of the single-shot baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub tree: UnitTree,
    pub calls: u64,
    pub cost: f64,
}

/// Redraws the whole design until it validates, at most `max_retries` times.
pub fn direct_generate(
    design_name: &str,
    generator: &mut dyn Generator,
    validator: &dyn Validator,
    max_retries: u64,
    rng: &mut dyn RngCore,
) -> Result<DirectResult, SearchError> {
    generator.model().validate()?;
    let price = generator.model().full_cost();
    for calls in 1..=max_retries {
        let tree = generator.draft_whole(design_name, rng);
        if tree.validate().is_ok() && validator.check(&tree, rng.next_u64()).passed() {
            return Ok(DirectResult {
                tree,
                calls,
                cost: calls as f64 * price,
            });
        }
    }
    Err(SearchError::RetriesExhausted {
        calls: max_retries,
        cost: max_retries as f64 * price,
    })
}
