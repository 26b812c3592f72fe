//! The evolutionary loop: designers and verifiers sharing one store and one budget ledger.
//!
//! Workers are cooperative tasks on a simulated clock. A task reads the store
//! when it starts and commits its result when it finishes, so designs and
//! verifications interleave as they would across machines. Each worker draws
//! from its own random stream derived from the master seed and its id, and
//! clock ties break by worker id, so a run is a pure function of its config
//! for any number of workers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checker::{CheckerConfig, EffectivenessConfig, ProbeShape};
use crate::genome::{choose_operation, GpKind, OperationConfig};
use crate::metrics::{self, GenerationSeries, Metrics, DEFAULT_STEP, DEFAULT_WINDOW};
use crate::oracle::seeds::build_seed_trees;
use crate::oracle::{base_name, oracle_scores, Landscape, ScaleSpec};
use crate::scheduler::{self, default_totals, BudgetLedger, Candidate, Mode, SelectionConfig};
use crate::search::analytic::throughput;
use crate::search::generator::DEFAULT_VOCABULARY;
use crate::search::{
    implement, review_gate, BernoulliGenerator, BrokenKind, GeneratorModel, Proposal, ProposalKind, QualityDist,
    SearchConfig, SearchError, StaticValidator, StepModel, SymbolicValidator, Validator,
};
use crate::store::{
    encode_log, DesignId, EvoStore, Lineage, LogWriter, ProposalMeta, Status, StoreConfig, StoreError, StoreSummary,
};
use crate::unit_tree::{compose, UnitDecl, UnitTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Parents and verification targets are drawn uniformly; fitness is never consulted.
    NoFitnessSelection,
    /// Parents are always seeds.
    SeedsOnly,
    /// Parents are always seeds, but the generator reuses unit names from every accepted design.
    SeedsWithMemory,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoFitnessSelection,
        Ablation::SeedsOnly,
        Ablation::SeedsWithMemory,
    ];

    fn seeds_only(self) -> bool {
        matches!(self, Ablation::SeedsOnly | Ablation::SeedsWithMemory)
    }
}

/// How thoroughly candidate units are checked during implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CheckerProfile {
    /// Every check at default probe sizes.
    #[default]
    Full,
    /// Every check with single probes and a two-step training run.
    Fast,
    /// Parser and format only; the generator then only emits statically detectable faults.
    Static,
}

impl CheckerProfile {
    pub fn config(self) -> Option<CheckerConfig> {
        match self {
            CheckerProfile::Full => Some(CheckerConfig::default()),
            CheckerProfile::Fast => Some(CheckerConfig {
                probe: ProbeShape::default(),
                causality_probes: 1,
                differentiability_probes: 1,
                effectiveness: EffectivenessConfig {
                    steps: 2,
                    seq_len: 8,
                    batch: 2,
                    ..EffectivenessConfig::default()
                },
                ..CheckerConfig::default()
            }),
            CheckerProfile::Static => None,
        }
    }
}

/// Simulated task durations, in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    /// Designer time per generator call, review drafts included.
    pub minutes_per_call: f64,
    /// Verification time per scale, lowest first.
    pub verify_minutes: Vec<f64>,
    /// Durations are scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            minutes_per_call: 4.0,
            // 566 s median training plus 30% overhead at the lowest scale.
            verify_minutes: vec![12.3, 25.0, 50.0, 100.0],
            jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleBudget {
    pub scale: String,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Designs to add beyond the seeds.
    pub design_budget: usize,
    /// Designers stop after this many failed design tasks.
    pub max_failures: usize,
    pub designers: usize,
    pub verifiers: usize,
    pub ablation: Ablation,
    /// Lowest scale first.
    pub budgets: Vec<ScaleBudget>,
    pub selection: SelectionConfig,
    pub search: SearchConfig,
    pub operations: OperationConfig,
    pub generator: GeneratorModel,
    /// Explicit landscape; generated from `landscape_seed` when absent.
    pub landscape: Option<Landscape>,
    pub landscape_seed: u64,
    pub tasks: usize,
    pub checker: CheckerProfile,
    pub max_review_drafts: u32,
    pub unit_budget: usize,
    pub timing: TimingModel,
}

pub fn default_generator() -> GeneratorModel {
    GeneratorModel {
        steps: vec![StepModel {
            p: 0.8,
            history: 4000.0,
            instruction: 600.0,
            output: 900.0,
        }],
        input_price: 3e-6,
        output_price: 1.5e-5,
        quality: QualityDist::Uniform { low: 2.0, high: 5.0 },
        proposal_quality: QualityDist::Uniform { low: 3.0, high: 5.0 },
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            design_budget: 300,
            max_failures: 1000,
            designers: 1,
            verifiers: 1,
            ablation: Ablation::Full,
            budgets: default_totals()
                .into_iter()
                .map(|(scale, total)| ScaleBudget { scale, total })
                .collect(),
            selection: SelectionConfig::default(),
            search: SearchConfig::default(),
            operations: OperationConfig::default(),
            generator: default_generator(),
            landscape: None,
            landscape_seed: 0,
            tasks: 6,
            checker: CheckerProfile::Full,
            max_review_drafts: 5,
            unit_budget: 8,
            timing: TimingModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(String),
}

fn config_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

/// Every unit name of the seed designs followed by the default vocabulary.
pub fn default_vocabulary() -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for tree in build_seed_trees() {
        names.extend(tree.unit_names().into_iter().map(str::to_string));
    }
    names.extend(DEFAULT_VOCABULARY.iter().map(|s| s.to_string()));
    names
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn ledger(&self) -> Result<BudgetLedger, RunError> {
        let totals: Vec<(String, u64)> = self.budgets.iter().map(|b| (b.scale.clone(), b.total)).collect();
        BudgetLedger::new(&totals).map_err(config_err)
    }

    pub fn scale_labels(&self) -> Vec<String> {
        self.budgets.iter().map(|b| b.scale.clone()).collect()
    }

    /// The configured landscape, or one generated over the default vocabulary.
    pub fn resolve_landscape(&self) -> Landscape {
        if let Some(l) = &self.landscape {
            return l.clone();
        }
        let vocab = default_vocabulary();
        let refs: Vec<&str> = vocab.iter().map(String::as_str).collect();
        let mut l = Landscape::generate(self.landscape_seed, &refs, self.tasks.max(1));
        if l.scale_labels() != self.scale_labels() {
            l.scales = self
                .budgets
                .iter()
                .enumerate()
                .map(|(i, b)| ScaleSpec {
                    label: b.scale.clone(),
                    gain: 1.0 + 0.1 * i as f64,
                })
                .collect();
        }
        l
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.design_budget == 0 {
            return Err(config_err("design_budget must be positive"));
        }
        if self.designers == 0 || self.verifiers == 0 {
            return Err(config_err("worker counts must be at least 1"));
        }
        if self.tasks == 0 || self.max_review_drafts == 0 || self.unit_budget == 0 {
            return Err(config_err("tasks, max_review_drafts and unit_budget must be positive"));
        }
        self.ledger()?;
        self.selection.validate().map_err(config_err)?;
        self.search.validate().map_err(config_err)?;
        self.generator.validate().map_err(config_err)?;
        self.operations.masked(u64::MAX).map_err(config_err)?;
        if self.operations.masked(0).is_err() {
            return Err(config_err("the mutation probability must be positive"));
        }
        let landscape = self.resolve_landscape();
        landscape.validate().map_err(config_err)?;
        if landscape.scale_labels() != self.scale_labels() {
            return Err(config_err("landscape scales must match the budget scales"));
        }
        let t = &self.timing;
        if t.verify_minutes.len() != self.budgets.len() {
            return Err(config_err("timing needs one verification time per scale"));
        }
        if !(t.minutes_per_call > 0.0) || t.verify_minutes.iter().any(|m| !(*m > 0.0)) {
            return Err(config_err("durations must be positive"));
        }
        if !(0.0..1.0).contains(&t.jitter) {
            return Err(config_err("jitter must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Throughput of the configured worker mix under measured stage times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerRatioReport {
    pub designers: usize,
    pub verifiers: usize,
    /// Mean minutes per design.
    pub t_d: f64,
    /// Mean minutes per verification.
    pub t_v: f64,
    /// Designs per minute, `min(N_D / T_D, N_V / T_V)`.
    pub theta: f64,
    /// Balanced verifier-to-designer ratio `T_V / T_D`.
    pub r_star: f64,
    /// Configured `N_V / N_D`.
    pub ratio: f64,
}

pub fn worker_ratio_report(cfg: &RunConfig, t_d: f64, t_v: f64) -> Result<WorkerRatioReport, SearchError> {
    let t = throughput(cfg.designers as f64, cfg.verifiers as f64, t_d, t_v)?;
    Ok(WorkerRatioReport {
        designers: cfg.designers,
        verifiers: cfg.verifiers,
        t_d,
        t_v,
        theta: t.theta,
        r_star: t.r_star,
        ratio: cfg.verifiers as f64 / cfg.designers as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ablation: Ablation,
    pub seed: u64,
    /// Designs added beyond the seeds.
    pub designs: usize,
    pub design_failures: usize,
    /// Successful verifications per scale.
    pub verifications: BTreeMap<String, u64>,
    pub verification_errors: u64,
    /// Ledger usage per scale, failed runs included.
    pub budget_used: BTreeMap<String, u64>,
    pub sim_minutes: f64,
    pub generator_calls: u64,
    pub token_cost: f64,
    pub workers: Option<WorkerRatioReport>,
    pub store: StoreSummary,
    pub metrics: Option<Metrics>,
}

pub struct RunOutput {
    pub store: EvoStore,
    pub ledger: BudgetLedger,
    pub summary: RunSummary,
}

impl RunOutput {
    /// The event log as written to `events.jsonl`.
    pub fn log_text(&self) -> String {
        encode_log(&self.store)
    }

    pub fn series(&self) -> Option<GenerationSeries> {
        metrics::generation_series(&self.store, DEFAULT_WINDOW, DEFAULT_STEP).ok()
    }

    /// Writes `events.jsonl`, `summary.json` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let io = |e: std::io::Error| RunError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("events.jsonl"), self.log_text()).map_err(io)?;
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        fs::write(dir.join("summary.json"), summary + "\n").map_err(io)?;
        let csv = match self.series() {
            Some(s) => metrics::metrics_csv(&s),
            None => format!("{}\n", metrics::METRICS_CSV_HEADER),
        };
        fs::write(dir.join("metrics.csv"), csv).map_err(io)
    }
}

/// Random stream of one worker.
pub fn worker_stream(master: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(worker as u64 + 1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Designer,
    Verifier,
}

struct Worker {
    role: Role,
    rng: ChaCha8Rng,
    /// Tasks started by this worker.
    counter: u64,
}

enum Task {
    Design {
        id: DesignId,
        outcome: Option<(UnitTree, String, Lineage, ProposalMeta)>,
    },
    Verify {
        id: DesignId,
        scale: String,
        scores: Option<BTreeMap<String, f64>>,
    },
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    landscape: Landscape,
    validator: Box<dyn Validator>,
    store: EvoStore,
    ledger: BudgetLedger,
    vocabulary: Vec<String>,
    seeds: BTreeSet<DesignId>,
    workers: Vec<Worker>,
    pending: Vec<Option<(f64, Task)>>,
    in_flight_designs: usize,
    verifying: BTreeSet<DesignId>,
    failures: usize,
    verification_rounds: u64,
    design_minutes: Vec<f64>,
    verify_minutes: Vec<f64>,
    generator_calls: u64,
    token_cost: f64,
}

fn jitter(rng: &mut ChaCha8Rng, j: f64) -> f64 {
    if j == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - j..=1.0 + j)
    }
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        let validator: Box<dyn Validator> = match cfg.checker.config() {
            Some(config) => Box::new(SymbolicValidator { config }),
            None => Box::new(StaticValidator),
        };
        let mut store = EvoStore::new(StoreConfig::new(cfg.scale_labels()));
        let mut seeds = BTreeSet::new();
        for tree in build_seed_trees() {
            let id = DesignId(tree.design_name.clone());
            let program = compose(&tree).map_err(config_err)?.to_string();
            store.add_design(id.clone(), tree, program, Lineage::seed(), ProposalMeta::default())?;
            store.mark_implemented(&id)?;
            seeds.insert(id);
        }
        let mut workers = Vec::new();
        for i in 0..cfg.designers + cfg.verifiers {
            workers.push(Worker {
                role: if i < cfg.designers { Role::Designer } else { Role::Verifier },
                rng: worker_stream(cfg.seed, i),
                counter: 0,
            });
        }
        Ok(Engine {
            cfg,
            landscape: cfg.resolve_landscape(),
            validator,
            store,
            ledger: cfg.ledger()?,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            seeds,
            pending: workers.iter().map(|_| None).collect(),
            workers,
            in_flight_designs: 0,
            verifying: BTreeSet::new(),
            failures: 0,
            verification_rounds: 0,
            design_minutes: Vec::new(),
            verify_minutes: Vec::new(),
            generator_calls: 0,
            token_cost: 0.0,
        })
    }

    fn designs_added(&self) -> usize {
        self.store.len() - self.seeds.len()
    }

    fn generator(&self) -> BernoulliGenerator {
        let g = BernoulliGenerator::new(self.cfg.generator.clone(), self.vocabulary.clone())
            .with_unit_budget(self.cfg.unit_budget);
        if self.cfg.checker == CheckerProfile::Static {
            g.with_broken_kinds(&BrokenKind::STATIC)
        } else {
            g
        }
    }

    fn parent_pool(&self) -> Vec<Candidate> {
        let mut pool = scheduler::design_candidates(&self.store);
        if self.cfg.ablation.seeds_only() {
            pool.retain(|c| self.seeds.contains(&c.id));
        }
        pool
    }

    fn start_design(&mut self, w: usize, now: f64) -> Option<(f64, Task)> {
        let cfg = self.cfg;
        if self.designs_added() + self.in_flight_designs >= cfg.design_budget || self.failures >= cfg.max_failures {
            return None;
        }
        let round = self.designs_added() as u64;
        let pool = self.parent_pool();
        let mut generator = self.generator();
        let worker = &mut self.workers[w];
        worker.counter += 1;
        let id = DesignId(format!("d{w}-{:04}", worker.counter));
        let rng = &mut worker.rng;
        let mut kind = choose_operation(round, rng, &cfg.operations).expect("validated operations");
        if pool.len() < kind.parent_count() {
            kind = if pool.is_empty() { GpKind::Scratch } else { GpKind::Mutation };
        }
        let selection = match (kind.parent_count(), cfg.ablation) {
            (0, _) => None,
            (n, Ablation::NoFitnessSelection) => scheduler::select_uniform(&pool, n, rng).ok(),
            (n, _) => scheduler::select(&pool, Mode::Design, n, round, &cfg.selection, rng).ok(),
        };
        let parents: Vec<DesignId> = selection.as_ref().map(|s| s.designs.clone()).unwrap_or_default();
        let trees: Vec<UnitTree> = parents
            .iter()
            .map(|p| self.store.get(p).expect("selected from store").tree.clone())
            .collect();
        let review = review_gate(&mut generator, &cfg.search, cfg.max_review_drafts, rng);
        let mut calls = review.map_or(cfg.max_review_drafts, |r| r.0) as u64;
        let mut cost = 0.0;
        let mut outcome = None;
        if let Some((_, quality)) = review {
            let proposal_kind = match kind {
                GpKind::Mutation => {
                    let parent = trees[0].clone();
                    let targets: Vec<String> = parent
                        .root
                        .nodes()
                        .into_iter()
                        .filter(|n| !n.protected)
                        .map(|n| n.decl.name.clone())
                        .collect();
                    if targets.is_empty() {
                        None
                    } else {
                        let target = targets[rng.random_range(0..targets.len())].clone();
                        Some(ProposalKind::Mutation { parent, target })
                    }
                }
                GpKind::Crossover => Some(ProposalKind::Crossover {
                    parents: [trees[0].clone(), trees[1].clone()],
                }),
                GpKind::Scratch => Some(ProposalKind::Scratch {
                    root: UnitDecl::new("Scratch"),
                }),
            };
            if let Some(kind_) = proposal_kind {
                let proposal = Proposal {
                    design_name: id.0.clone(),
                    kind: kind_,
                };
                match implement(&proposal, &mut generator, self.validator.as_ref(), &cfg.search, rng) {
                    Ok((tree, trace)) => {
                        calls += trace.calls() as u64;
                        cost = trace.cost();
                        if let Ok(program) = compose(&tree) {
                            let meta = ProposalMeta {
                                quality,
                                round,
                                created_at: 0.0,
                                selection: selection.as_ref().map(|s| s.branch.as_str().to_string()),
                                generator_calls: calls,
                                token_cost: cost,
                            };
                            let lineage = Lineage {
                                parents: parents.clone(),
                                operation: Some(kind),
                            };
                            outcome = Some((tree, program.to_string(), lineage, meta));
                        }
                    }
                    Err(SearchError::Unimplementable { trace }) => {
                        calls += trace.calls() as u64;
                        cost = trace.cost();
                    }
                    Err(_) => {}
                }
            }
        }
        let minutes = cfg.timing.minutes_per_call * calls as f64 * jitter(rng, cfg.timing.jitter);
        self.generator_calls += calls;
        self.token_cost += cost;
        self.design_minutes.push(minutes);
        self.in_flight_designs += 1;
        Some((now + minutes, Task::Design { id, outcome }))
    }

    fn verify_pool(&self) -> Vec<Candidate> {
        let mut pool = scheduler::verify_candidates(&self.store, &self.ledger);
        pool.retain(|c| !self.verifying.contains(&c.id));
        pool
    }

    fn start_verify(&mut self, w: usize, now: f64) -> Option<(f64, Task)> {
        let cfg = self.cfg;
        let pool = self.verify_pool();
        if pool.is_empty() {
            return None;
        }
        let round = self.verification_rounds;
        let worker = &mut self.workers[w];
        worker.counter += 1;
        let rng = &mut worker.rng;
        let selection = match cfg.ablation {
            Ablation::NoFitnessSelection => scheduler::select_uniform(&pool, 1, rng),
            _ => scheduler::select(&pool, Mode::Verify, 1, round, &cfg.selection, rng),
        }
        .expect("pool is non-empty");
        let id = selection.designs[0].clone();
        let record = self.store.get(&id).expect("selected from store");
        let scale = self.ledger.select_scale(record).expect("pool designs have an open scale");
        let reserved = self.ledger.try_reserve(&scale).expect("scale from ledger");
        debug_assert!(reserved);
        let scores = oracle_scores(&record.tree, &scale, &self.landscape, rng).ok();
        let idx = self.ledger.scales().iter().position(|s| *s == scale).expect("known scale");
        let minutes = cfg.timing.verify_minutes[idx] * jitter(rng, cfg.timing.jitter);
        self.verify_minutes.push(minutes);
        self.verifying.insert(id.clone());
        Some((now + minutes, Task::Verify { id, scale, scores }))
    }

    fn start_idle(&mut self, now: f64) {
        for w in 0..self.workers.len() {
            if self.pending[w].is_some() {
                continue;
            }
            self.pending[w] = match self.workers[w].role {
                Role::Designer => self.start_design(w, now),
                Role::Verifier => self.start_verify(w, now),
            };
        }
    }

    fn commit(&mut self, at: f64, task: Task) -> Result<(), RunError> {
        match task {
            Task::Design { id, outcome } => {
                self.in_flight_designs -= 1;
                match outcome {
                    Some((tree, program, lineage, mut meta)) => {
                        meta.created_at = at;
                        if self.cfg.ablation == Ablation::SeedsWithMemory {
                            self.vocabulary
                                .extend(tree.unit_names().into_iter().map(|n| base_name(n).to_string()));
                        }
                        self.store.add_design(id.clone(), tree, program, lineage, meta)?;
                        self.store.mark_implemented(&id)?;
                    }
                    None => self.failures += 1,
                }
            }
            Task::Verify { id, scale, scores } => {
                self.verifying.remove(&id);
                self.verification_rounds += 1;
                match scores {
                    Some(s) => self.store.record_verification(&id, &scale, s, at)?,
                    None => self.store.record_verification_error(&id, &scale, at)?,
                };
            }
        }
        Ok(())
    }

    fn run(mut self, mut log: Option<&mut LogWriter>) -> Result<RunOutput, RunError> {
        let io = |e: StoreError| RunError::Io(e.to_string());
        let mut now = 0.0;
        loop {
            self.start_idle(now);
            let next = self
                .pending
                .iter()
                .enumerate()
                .filter_map(|(w, p)| p.as_ref().map(|(t, _)| (w, *t)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((w, t)) = next else { break };
            now = t;
            let (_, task) = self.pending[w].take().expect("selected pending task");
            self.commit(now, task)?;
            if let Some(writer) = log.as_deref_mut() {
                writer.sync(&self.store).map_err(io)?;
            }
        }
        Ok(self.finish(now))
    }

    fn finish(self, now: f64) -> RunOutput {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let workers = match (mean(&self.design_minutes), mean(&self.verify_minutes)) {
            (Some(t_d), Some(t_v)) => worker_ratio_report(self.cfg, t_d, t_v).ok(),
            _ => None,
        };
        let mut verifications: BTreeMap<String, u64> =
            self.ledger.scales().iter().map(|s| (s.clone(), 0)).collect();
        for r in self.store.designs() {
            for s in r.results.keys() {
                *verifications.get_mut(s).expect("store scales match ledger") += 1;
            }
        }
        let errors: u64 = self.store.designs().map(|r| r.errors as u64).sum();
        let budget_used = self
            .ledger
            .scales()
            .iter()
            .cloned()
            .zip(self.ledger.used().iter().copied())
            .collect();
        let metrics = metrics::generation_series(&self.store, DEFAULT_WINDOW, DEFAULT_STEP)
            .ok()
            .and_then(|s| metrics::metrics(&s).ok());
        let summary = RunSummary {
            ablation: self.cfg.ablation,
            seed: self.cfg.seed,
            designs: self.designs_added(),
            design_failures: self.failures,
            verifications,
            verification_errors: errors,
            budget_used,
            sim_minutes: now,
            generator_calls: self.generator_calls,
            token_cost: self.token_cost,
            workers,
            store: self.store.summary(),
            metrics,
        };
        RunOutput {
            store: self.store,
            ledger: self.ledger,
            summary,
        }
    }
}

/// Runs the loop to completion: designers stop at the design budget, verifiers when nothing is verifiable.
pub fn run_evolution(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    Engine::new(cfg)?.run(None)
}

/// As [`run_evolution`], appending every committed event to `log` as it happens.
pub fn run_evolution_logged(cfg: &RunConfig, log: &mut LogWriter) -> Result<RunOutput, RunError> {
    Engine::new(cfg)?.run(Some(log))
}

/// Whether a design was chosen by a fitness-aware branch.
pub fn selection_branch(store: &EvoStore, id: &DesignId) -> Option<String> {
    store.get(id).and_then(|r| r.meta.selection.clone())
}

/// Designs in the store that are neither seeds nor erroneous.
pub fn live_designs(store: &EvoStore) -> usize {
    store
        .designs()
        .filter(|r| r.lineage.operation.is_some() && r.status != Status::Erroneous)
        .count()
}
