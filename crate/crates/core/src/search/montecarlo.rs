//! Monte Carlo counterparts of the closed forms in [`super::analytic`].
//!
//! Every attempt is an i.i.d. Bernoulli trial, so the number of calls until
//! the first success is drawn directly from a geometric distribution.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::analytic::vs_gap;
use super::{GeneratorModel, SearchError};

/// Calls until the first success of a Bernoulli(`p`) trial, `p ∈ (0, 1]`.
pub fn sample_calls<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64, SearchError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SearchError::DomainError(format!("probability {p} is outside (0, 1]")));
    }
    let g = Geometric::new(p).map_err(|e| SearchError::DomainError(e.to_string()))?;
    Ok(1 + g.sample(rng))
}

/// Mean and standard error of `trials` draws of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

fn estimate<R: Rng + ?Sized>(
    trials: usize,
    rng: &mut R,
    mut f: impl FnMut(&mut R) -> Result<f64, SearchError>,
) -> Result<Estimate, SearchError> {
    if trials < 2 {
        return Err(SearchError::DomainError("at least two trials are required".into()));
    }
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..trials {
        let x = f(rng)?;
        sum += x;
        sq += x * x;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(Estimate {
        mean,
        std_error: (var / n).sqrt(),
    })
}

pub fn mc_calls_direct<R: Rng + ?Sized>(p_valid: f64, trials: usize, rng: &mut R) -> Result<Estimate, SearchError> {
    estimate(trials, rng, |r| Ok(sample_calls(p_valid, r)? as f64))
}

pub fn mc_calls_vs<R: Rng + ?Sized>(ps: &[f64], trials: usize, rng: &mut R) -> Result<Estimate, SearchError> {
    estimate(trials, rng, |r| {
        ps.iter().try_fold(0.0, |acc, &p| Ok(acc + sample_calls(p, r)? as f64))
    })
}

/// Token cost of staged generation: every attempt at step `k` is billed at its step price.
pub fn mc_cost_vs<R: Rng + ?Sized>(model: &GeneratorModel, trials: usize, rng: &mut R) -> Result<Estimate, SearchError> {
    estimate(trials, rng, |r| {
        model.steps.iter().enumerate().try_fold(0.0, |acc, (k, s)| {
            Ok(acc + sample_calls(s.p, r)? as f64 * model.attempt_cost(k))
        })
    })
}

/// Token cost of single-shot generation: every call pays the full price.
pub fn mc_cost_direct<R: Rng + ?Sized>(model: &GeneratorModel, trials: usize, rng: &mut R) -> Result<Estimate, SearchError> {
    let p = model.p_direct();
    let price = model.full_cost();
    estimate(trials, rng, |r| Ok(sample_calls(p, r)? as f64 * price))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub analytic_direct: f64,
    pub analytic_vs: f64,
    pub empirical_direct: f64,
    pub empirical_vs: f64,
    /// `analytic_direct / analytic_vs`.
    pub ratio: f64,
}

/// Analytic and simulated expected calls for `N` identical steps at probability `p`.
pub fn simulate_vs_gap<R: Rng + ?Sized>(
    p: f64,
    ns: impl IntoIterator<Item = usize>,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<GapRow>, SearchError> {
    ns.into_iter()
        .map(|n| {
            let (analytic_direct, analytic_vs, ratio) = vs_gap(p, n)?;
            let empirical_direct = mc_calls_direct(p.powi(n as i32), trials, rng)?.mean;
            let empirical_vs = mc_calls_vs(&vec![p; n], trials, rng)?.mean;
            Ok(GapRow {
                n,
                analytic_direct,
                analytic_vs,
                empirical_direct,
                empirical_vs,
                ratio,
            })
        })
        .collect()
}

pub const GAP_CSV_HEADER: &str = "N,analytic_direct,analytic_vs,empirical_direct,empirical_vs,ratio";

pub fn gap_csv(rows: &[GapRow]) -> String {
    let mut s = format!("{GAP_CSV_HEADER}\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{}\n",
            r.n, r.analytic_direct, r.analytic_vs, r.empirical_direct, r.empirical_vs, r.ratio
        );
    }
    s
}
