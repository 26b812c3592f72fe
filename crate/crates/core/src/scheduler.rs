//! Parent and verification-target selection, and the ladder-of-scales budget.
//!
//! Designs are split into four quadrants by fitness and confidence
//! thresholds. Designers exploit good and confident designs and explore poor
//! but confident ones; verifiers exploit good but unconfident designs and
//! explore poor and unconfident ones. A restart branch, annealed over the
//! first rounds, returns seed designs instead.
//!
//! Verification budget per scale is released in stages: the next scale opens
//! only once enough of the scale below has been used (see [`assign_los_budgets`]).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::store::{DesignId, DesignRecord, EvoStore, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Mean of the dense fitness rank and the dense confidence rank.
    #[default]
    MeanRank,
    Fitness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Top fraction of each dimension counted as "good" / "confident".
    pub cutoff: f64,
    pub p_explore: f64,
    /// Window of the top-K pick; the effective window is at least the number of designs requested.
    pub top_k: usize,
    /// Probability of picking outside the top-K window.
    pub alpha: f64,
    /// Restart probability after annealing, `p_rs`.
    pub restart_floor: f64,
    /// Rounds over which restart probability anneals from 1 to `p_rs`.
    pub restart_rounds: u64,
    pub seed_distribution: BTreeMap<String, f64>,
    pub ordering: Ordering,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            cutoff: 0.25,
            p_explore: 0.15,
            top_k: 1,
            alpha: 0.05,
            restart_floor: 0.05,
            restart_rounds: 10,
            seed_distribution: default_seed_distribution(),
            ordering: Ordering::MeanRank,
        }
    }
}

pub fn default_seed_distribution() -> BTreeMap<String, f64> {
    [("GPT2", 0.3), ("Mamba2", 0.25), ("RetNet", 0.15), ("TTT", 0.15), ("RWKV6", 0.15)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !(prob(self.cutoff) && self.cutoff > 0.0) {
            return Err(SchedulerError::InvalidConfig("cutoff must lie in (0, 1]".into()));
        }
        if !(prob(self.p_explore) && prob(self.alpha) && prob(self.restart_floor)) {
            return Err(SchedulerError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if self.top_k < 1 {
            return Err(SchedulerError::InvalidConfig("top_k must be at least 1".into()));
        }
        if self.seed_distribution.values().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.seed_distribution.values().sum::<f64>() <= 0.0
        {
            return Err(SchedulerError::InvalidConfig(
                "seed weights must be nonnegative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("no design to select from")]
    EmptyPopulation,
    #[error("scale totals must be non-empty, positive and strictly decreasing with scale")]
    MisorderedScales,
    #[error("no design `{0}`")]
    UnknownDesign(DesignId),
    #[error("unknown scale `{0}`")]
    UnknownScale(String),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
}

/// What the quadrant logic needs to know about a design.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: DesignId,
    /// `None` when unverified.
    pub fitness: Option<f64>,
    pub confidence: usize,
    pub is_seed: bool,
}

impl Candidate {
    pub fn from_record(r: &DesignRecord) -> Self {
        Candidate {
            id: r.id.clone(),
            fitness: r.fitness(),
            confidence: r.confidence(),
            is_seed: r.lineage.operation.is_none(),
        }
    }

    /// Unverified designs rank below every verified one.
    fn f(&self) -> f64 {
        self.fitness.unwrap_or(-1.0)
    }
}

/// Sample quantile with linear interpolation between order statistics (R type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Quadrants {
    /// Good and confident.
    pub q1: Vec<Candidate>,
    /// Good, not confident.
    pub q2: Vec<Candidate>,
    /// Poor, confident.
    pub q3: Vec<Candidate>,
    /// Poor, not confident.
    pub q4: Vec<Candidate>,
}

/// Splits at the `1 - cutoff` quantile of each dimension; ties at a threshold classify upward.
pub fn quadrant_partition(designs: &[Candidate], cutoff: f64) -> Result<Quadrants, SchedulerError> {
    if designs.is_empty() {
        return Err(SchedulerError::EmptyPopulation);
    }
    let fs: Vec<f64> = designs.iter().map(Candidate::f).collect();
    let cs: Vec<f64> = designs.iter().map(|d| d.confidence as f64).collect();
    let f_thr = quantile(&fs, 1.0 - cutoff);
    let c_thr = quantile(&cs, 1.0 - cutoff);
    let mut q = Quadrants::default();
    for d in designs {
        let good = d.f() >= f_thr;
        let confident = d.confidence as f64 >= c_thr;
        match (good, confident) {
            (true, true) => q.q1.push(d.clone()),
            (true, false) => q.q2.push(d.clone()),
            (false, true) => q.q3.push(d.clone()),
            (false, false) => q.q4.push(d.clone()),
        }
    }
    Ok(q)
}

/// Dense ranks, 1 for the largest value.
fn dense_rank(values: &[f64]) -> Vec<usize> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    values
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).expect("present") + 1)
        .collect()
}

/// Best first. Stable, so equal keys keep input order.
pub fn rank_designs(designs: &[Candidate], ordering: Ordering) -> Vec<Candidate> {
    let fs: Vec<f64> = designs.iter().map(Candidate::f).collect();
    let keys: Vec<f64> = match ordering {
        Ordering::Fitness => dense_rank(&fs).into_iter().map(|r| r as f64).collect(),
        Ordering::MeanRank => {
            let cs: Vec<f64> = designs.iter().map(|d| d.confidence as f64).collect();
            dense_rank(&fs)
                .into_iter()
                .zip(dense_rank(&cs))
                .map(|(a, b)| (a + b) as f64 / 2.0)
                .collect()
        }
    };
    let mut idx: Vec<usize> = (0..designs.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    idx.into_iter().map(|i| designs[i].clone()).collect()
}

/// Linear anneal from 1 at round 0 to `floor` at `rounds`, constant after.
pub fn restart_probability(round: u64, floor: f64, rounds: u64) -> f64 {
    if rounds == 0 || round >= rounds {
        return floor;
    }
    1.0 - (1.0 - floor) * round as f64 / rounds as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Design,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Restart,
    Exploit,
    Explore,
    /// Uniform over the whole population; fitness is never consulted.
    Uniform,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Restart => "restart",
            Branch::Exploit => "exploit",
            Branch::Explore => "explore",
            Branch::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub designs: Vec<DesignId>,
    pub branch: Branch,
    /// At least one pick came from outside the top-K window.
    pub noisy: bool,
}

fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Up to `n` distinct seeds drawn without replacement from the seed distribution.
fn pick_seeds<R: Rng + ?Sized>(
    designs: &[Candidate],
    cfg: &SelectionConfig,
    n: usize,
    rng: &mut R,
) -> Option<Vec<DesignId>> {
    let mut pool: Vec<(&Candidate, f64)> = designs
        .iter()
        .filter(|d| d.is_seed)
        .map(|d| (d, cfg.seed_distribution.get(&d.id.0).copied().unwrap_or(0.0)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    if pool.len() < n {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let weights: Vec<f64> = pool.iter().map(|(_, w)| *w).collect();
        let i = weighted_pick(&weights, rng);
        out.push(pool.remove(i).0.id.clone());
    }
    Some(out)
}

/// Quadrant selection of `n` distinct designs.
pub fn select<R: Rng + ?Sized>(
    designs: &[Candidate],
    mode: Mode,
    n: usize,
    round: u64,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<Selection, SchedulerError> {
    if designs.len() < n.max(1) {
        return Err(SchedulerError::EmptyPopulation);
    }
    if rng.random::<f64>() < restart_probability(round, cfg.restart_floor, cfg.restart_rounds) {
        if let Some(ids) = pick_seeds(designs, cfg, n, rng) {
            return Ok(Selection {
                designs: ids,
                branch: Branch::Restart,
                noisy: false,
            });
        }
    }
    let q = quadrant_partition(designs, cfg.cutoff)?;
    let explore = rng.random::<f64>() < cfg.p_explore;
    let (first, second, rest) = match (mode, explore) {
        (Mode::Design, false) => (&q.q1, &q.q3, [&q.q2, &q.q4]),
        (Mode::Design, true) => (&q.q3, &q.q1, [&q.q2, &q.q4]),
        (Mode::Verify, false) => (&q.q2, &q.q4, [&q.q1, &q.q3]),
        (Mode::Verify, true) => (&q.q4, &q.q2, [&q.q1, &q.q3]),
    };
    // Empty or short quadrants fall back to the mode's other quadrant, then the rest.
    let mut ranked = rank_designs(first, cfg.ordering);
    for pool in [second, rest[0], rest[1]] {
        if ranked.len() >= n {
            break;
        }
        ranked.extend(rank_designs(pool, cfg.ordering));
    }
    let window = cfg.top_k.max(n);
    let mut chosen: Vec<DesignId> = Vec::with_capacity(n);
    let mut noisy = false;
    for i in 0..n {
        let outside: Vec<&Candidate> = ranked
            .iter()
            .skip(window)
            .filter(|c| !chosen.contains(&c.id))
            .collect();
        let pick = if rng.random::<f64>() < cfg.alpha && !outside.is_empty() {
            noisy = true;
            outside[rng.random_range(0..outside.len())].id.clone()
        } else {
            ranked
                .iter()
                .skip(i)
                .chain(ranked.iter())
                .find(|c| !chosen.contains(&c.id))
                .expect("ranked holds at least n designs")
                .id
                .clone()
        };
        chosen.push(pick);
    }
    Ok(Selection {
        designs: chosen,
        branch: if explore { Branch::Explore } else { Branch::Exploit },
        noisy,
    })
}

/// Uniform choice of `n` distinct designs, ignoring fitness entirely.
pub fn select_uniform<R: Rng + ?Sized>(
    designs: &[Candidate],
    n: usize,
    rng: &mut R,
) -> Result<Selection, SchedulerError> {
    if designs.len() < n.max(1) {
        return Err(SchedulerError::EmptyPopulation);
    }
    let mut idx: Vec<usize> = (0..designs.len()).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..idx.len());
        out.push(designs[idx.swap_remove(i)].id.clone());
    }
    Ok(Selection {
        designs: out,
        branch: Branch::Uniform,
        noisy: false,
    })
}

/// Designs a designer may build on: implemented or verified, never erroneous.
pub fn design_candidates(store: &EvoStore) -> Vec<Candidate> {
    store
        .designs()
        .filter(|r| matches!(r.status, Status::Implemented | Status::Verified(_)))
        .map(Candidate::from_record)
        .collect()
}

/// Parents for a designer step.
pub fn select_for_design<R: Rng + ?Sized>(
    store: &EvoStore,
    cfg: &SelectionConfig,
    n: usize,
    round: u64,
    rng: &mut R,
) -> Result<Selection, SchedulerError> {
    select(&design_candidates(store), Mode::Design, n, round, cfg, rng)
}

/// Designs with at least one unverified scale that currently has budget.
pub fn verify_candidates(store: &EvoStore, ledger: &BudgetLedger) -> Vec<Candidate> {
    let available = ledger.available();
    store
        .designs()
        .filter(|r| matches!(r.status, Status::Implemented | Status::Verified(_)))
        .filter(|r| {
            ledger
                .scales()
                .iter()
                .zip(&available)
                .any(|(s, a)| *a > 0 && !r.is_verified_at(s))
        })
        .map(Candidate::from_record)
        .collect()
}

/// Next design to verify.
pub fn select_for_verify<R: Rng + ?Sized>(
    store: &EvoStore,
    ledger: &BudgetLedger,
    cfg: &SelectionConfig,
    round: u64,
    rng: &mut R,
) -> Result<Selection, SchedulerError> {
    select(&verify_candidates(store, ledger), Mode::Verify, 1, round, cfg, rng)
}

/// Ladder-of-scales availability per scale, lowest scale first.
///
/// `loS[lowest] = used[lowest]`; `loS[next] = ⌊loS[curr] · total[next] / total[curr]⌋`
/// in exact integer arithmetic. The lowest scale offers one slot until its
/// total is used up; higher scales offer `loS − used`, or nothing once `loS`
/// exceeds the total.
pub fn assign_los_budgets(used: &[u64], totals: &[u64]) -> Result<Vec<u64>, SchedulerError> {
    if totals.is_empty() || used.len() != totals.len() {
        return Err(SchedulerError::MisorderedScales);
    }
    if totals.contains(&0) || totals.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SchedulerError::MisorderedScales);
    }
    let mut available = Vec::with_capacity(totals.len());
    let mut los = used[0];
    // `>=` rather than `>`: with `>` the last slot would let used reach total + 1.
    available.push(if los >= totals[0] { 0 } else { 1 });
    for i in 0..totals.len() - 1 {
        let next = ((los as u128 * totals[i + 1] as u128) / totals[i] as u128) as u64;
        los = next;
        available.push(if next > totals[i + 1] {
            0
        } else {
            next.saturating_sub(used[i + 1])
        });
    }
    Ok(available)
}

/// Per-scale totals and usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    scales: Vec<String>,
    totals: Vec<u64>,
    used: Vec<u64>,
}

/// Verification totals per scale from the reference deployment.
pub fn default_totals() -> Vec<(String, u64)> {
    [("14M", 1000), ("31M", 400), ("70M", 150), ("125M", 40)]
        .into_iter()
        .map(|(s, t)| (s.to_string(), t))
        .collect()
}

impl BudgetLedger {
    /// `totals` ordered from the lowest scale up.
    pub fn new(totals: &[(String, u64)]) -> Result<Self, SchedulerError> {
        let t: Vec<u64> = totals.iter().map(|(_, t)| *t).collect();
        assign_los_budgets(&vec![0; t.len()], &t)?;
        let names: BTreeSet<&String> = totals.iter().map(|(s, _)| s).collect();
        if names.len() != totals.len() {
            return Err(SchedulerError::MisorderedScales);
        }
        Ok(BudgetLedger {
            scales: totals.iter().map(|(s, _)| s.clone()).collect(),
            used: vec![0; t.len()],
            totals: t,
        })
    }

    pub fn scales(&self) -> &[String] {
        &self.scales
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn used(&self) -> &[u64] {
        &self.used
    }

    pub fn available(&self) -> Vec<u64> {
        assign_los_budgets(&self.used, &self.totals).expect("validated at construction")
    }

    fn index(&self, scale: &str) -> Result<usize, SchedulerError> {
        self.scales
            .iter()
            .position(|s| s == scale)
            .ok_or_else(|| SchedulerError::UnknownScale(scale.to_string()))
    }

    /// Compare-and-increment: consumes one unit of `scale` iff it is available.
    pub fn try_reserve(&mut self, scale: &str) -> Result<bool, SchedulerError> {
        let i = self.index(scale)?;
        if self.available()[i] > 0 {
            self.used[i] += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Lowest scale with budget at which `record` is not yet verified.
    pub fn select_scale(&self, record: &DesignRecord) -> Option<String> {
        self.scales
            .iter()
            .zip(self.available())
            .find(|(s, a)| *a > 0 && !record.is_verified_at(s))
            .map(|(s, _)| s.clone())
    }

    pub fn exhausted(&self) -> bool {
        self.available().iter().all(|a| *a == 0)
    }
}

/// Store-level scale choice.
pub fn select_scale(id: &DesignId, store: &EvoStore, ledger: &BudgetLedger) -> Result<Option<String>, SchedulerError> {
    let r = store.get(id).ok_or_else(|| SchedulerError::UnknownDesign(id.clone()))?;
    Ok(ledger.select_scale(r))
}

/// Ledger shared between concurrent verifiers.
#[derive(Debug, Clone)]
pub struct SharedLedger(Arc<Mutex<BudgetLedger>>);

impl SharedLedger {
    pub fn new(ledger: BudgetLedger) -> Self {
        SharedLedger(Arc::new(Mutex::new(ledger)))
    }

    pub fn try_reserve(&self, scale: &str) -> Result<bool, SchedulerError> {
        self.0.lock().expect("ledger lock").try_reserve(scale)
    }

    pub fn snapshot(&self) -> BudgetLedger {
        self.0.lock().expect("ledger lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(id: &str, f: Option<f64>, c: usize) -> Candidate {
        Candidate {
            id: id.into(),
            fitness: f,
            confidence: c,
            is_seed: false,
        }
    }

    fn totals() -> Vec<u64> {
        vec![1000, 400, 150, 40]
    }

    #[test]
    fn los_hand_traces() {
        assert_eq!(assign_los_budgets(&[0, 0, 0, 0], &totals()).unwrap(), vec![1, 0, 0, 0]);
        assert_eq!(assign_los_budgets(&[100, 0, 0, 0], &totals()).unwrap(), vec![1, 40, 15, 4]);
        assert_eq!(assign_los_budgets(&[1001, 0, 0, 0], &totals()).unwrap()[0], 0);
        assert_eq!(assign_los_budgets(&[2, 0, 0, 0], &totals()).unwrap()[1], 0);
        assert_eq!(assign_los_budgets(&[3, 0, 0, 0], &totals()).unwrap()[1], 1);
        assert_eq!(
            assign_los_budgets(&[0, 0], &[10, 10]),
            Err(SchedulerError::MisorderedScales)
        );
        assert_eq!(
            assign_los_budgets(&[0, 0], &[10, 20]),
            Err(SchedulerError::MisorderedScales)
        );
    }

    #[test]
    fn restart_schedule() {
        assert_eq!(restart_probability(0, 0.05, 10), 1.0);
        assert_eq!(restart_probability(10, 0.05, 10), 0.05);
        assert_eq!(restart_probability(99, 0.05, 10), 0.05);
        assert!((restart_probability(5, 0.05, 10) - 0.525).abs() < 1e-12);
    }

    #[test]
    fn all_equal_population_is_q1() {
        let ds: Vec<Candidate> = (0..5).map(|i| cand(&format!("d{i}"), Some(0.5), 2)).collect();
        let q = quadrant_partition(&ds, 0.25).unwrap();
        assert_eq!(q.q1.len(), 5);
        assert_eq!(quadrant_partition(&[], 0.25), Err(SchedulerError::EmptyPopulation));
    }

    #[test]
    fn type7_quantile() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn mean_rank_orders_by_both_dimensions() {
        let ds = vec![cand("a", Some(0.9), 0), cand("b", Some(0.8), 3), cand("c", Some(0.7), 2)];
        let by_mean: Vec<String> = rank_designs(&ds, Ordering::MeanRank).into_iter().map(|c| c.id.0).collect();
        assert_eq!(by_mean, ["b", "a", "c"]);
        let by_fit: Vec<String> = rank_designs(&ds, Ordering::Fitness).into_iter().map(|c| c.id.0).collect();
        assert_eq!(by_fit, ["a", "b", "c"]);
    }

    #[test]
    fn ledger_reservations_respect_totals() {
        let small: Vec<(String, u64)> = vec![("s".into(), 4), ("m".into(), 2)];
        let mut l = BudgetLedger::new(&small).unwrap();
        let mut granted = 0;
        for _ in 0..20 {
            if l.try_reserve("s").unwrap() {
                granted += 1;
            }
        }
        assert_eq!(granted, 4);
        assert_eq!(l.available(), vec![0, 2]);
        assert!(l.try_reserve("m").unwrap());
        assert!(l.try_reserve("m").unwrap());
        assert!(!l.try_reserve("m").unwrap());
        assert!(l.exhausted());
    }

    #[test]
    fn concurrent_reservations_never_overspend() {
        let shared = SharedLedger::new(BudgetLedger::new(&[("s".into(), 50)]).unwrap());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let l = shared.clone();
                std::thread::spawn(move || (0..100).filter(|_| l.try_reserve("s").unwrap()).count())
            })
            .collect();
        let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(total, 50);
        assert_eq!(shared.snapshot().used(), &[50]);
    }

    #[test]
    fn deterministic_branches() {
        let cfg = SelectionConfig {
            restart_floor: 0.0,
            restart_rounds: 0,
            p_explore: 0.0,
            alpha: 0.0,
            cutoff: 0.5,
            ordering: Ordering::Fitness,
            ..SelectionConfig::default()
        };
        let ds = vec![
            cand("q1a", Some(0.9), 3),
            cand("q1b", Some(0.8), 3),
            cand("q2", Some(0.95), 0),
            cand("q3", Some(0.2), 3),
            cand("q3b", Some(0.1), 4),
            cand("q4", Some(0.3), 0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = select(&ds, Mode::Design, 1, 50, &cfg, &mut rng).unwrap();
        assert_eq!(s.designs, vec![DesignId::from("q1a")]);
        assert_eq!(s.branch, Branch::Exploit);
        let s = select(&ds, Mode::Verify, 1, 50, &cfg, &mut rng).unwrap();
        assert_eq!(s.designs, vec![DesignId::from("q2")]);
        let explore = SelectionConfig { p_explore: 1.0, ..cfg.clone() };
        let s = select(&ds, Mode::Design, 1, 50, &explore, &mut rng).unwrap();
        assert_eq!(s.designs, vec![DesignId::from("q3")]);
        let s = select(&ds, Mode::Verify, 1, 50, &explore, &mut rng).unwrap();
        assert_eq!(s.designs, vec![DesignId::from("q4")]);
        let pair = select(&ds, Mode::Design, 2, 50, &cfg, &mut rng).unwrap();
        assert_eq!(pair.designs, vec![DesignId::from("q1a"), DesignId::from("q1b")]);
    }
}
