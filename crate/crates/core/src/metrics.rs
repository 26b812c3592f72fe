//! Population-fitness series and summary statistics of a finished run.
//!
//! Verified designs are ordered by when their first successful verification
//! landed in the log. A window of `S_P` designs slides in steps of `k_s`; the
//! window means `m_0..m_G` form the series that the metrics summarize.

use serde::{Deserialize, Serialize};

use crate::store::{DesignId, EventKind, EvoStore, VerificationOutcome};

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_STEP: usize = 25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least {needed} verified designs, found {found}")]
    InsufficientDesigns { needed: usize, found: usize },
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("invalid window: size and step must be positive")]
    InvalidWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSeries {
    pub means: Vec<f64>,
    pub window: usize,
    pub step: usize,
}

/// `(id, fitness)` of every verified design, in order of first successful verification.
pub fn verified_sequence(store: &EvoStore) -> Vec<(DesignId, f64)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in store.events() {
        if let EventKind::VerificationRecorded {
            id,
            outcome: VerificationOutcome::Scores { .. },
            ..
        } = &e.event
        {
            if seen.insert(id.clone()) {
                let f = store.fitness(id).expect("verified design has fitness");
                out.push((id.clone(), f));
            }
        }
    }
    out
}

/// Window means over an already ordered fitness sequence.
pub fn series_from_values(values: &[f64], window: usize, step: usize) -> Result<GenerationSeries, MetricsError> {
    if window == 0 || step == 0 {
        return Err(MetricsError::InvalidWindow);
    }
    if values.len() < window {
        return Err(MetricsError::InsufficientDesigns {
            needed: window,
            found: values.len(),
        });
    }
    let means = (0..)
        .map(|g| g * step)
        .take_while(|start| start + window <= values.len())
        .map(|start| values[start..start + window].iter().sum::<f64>() / window as f64)
        .collect();
    Ok(GenerationSeries { means, window, step })
}

pub fn generation_series(store: &EvoStore, window: usize, step: usize) -> Result<GenerationSeries, MetricsError> {
    let values: Vec<f64> = verified_sequence(store).into_iter().map(|(_, f)| f).collect();
    series_from_values(&values, window, step)
}

/// Which standard deviation `ν` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    /// Divides by `n - 1`.
    #[default]
    Sample,
    /// Divides by `n`.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// End improvement `m_G - m_0`.
    pub delta: f64,
    /// Peak improvement `max_g m_g - m_0`.
    pub delta_max: f64,
    /// Standard deviation of generational differences.
    pub volatility: f64,
    /// Mean generational difference over `volatility`; `None` when the volatility is zero.
    pub sharpe: Option<f64>,
    /// Largest drop below a running maximum, as a nonpositive number.
    pub max_drawdown: f64,
}

pub fn delta(means: &[f64]) -> Result<f64, MetricsError> {
    match (means.first(), means.last()) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(MetricsError::DegenerateSeries("empty series".into())),
    }
}

pub fn delta_max(means: &[f64]) -> Result<f64, MetricsError> {
    let first = *means
        .first()
        .ok_or_else(|| MetricsError::DegenerateSeries("empty series".into()))?;
    Ok(means.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - first)
}

pub fn max_drawdown(means: &[f64]) -> Result<f64, MetricsError> {
    if means.is_empty() {
        return Err(MetricsError::DegenerateSeries("empty series".into()));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut mdd: f64 = 0.0;
    for &m in means {
        peak = peak.max(m);
        mdd = mdd.min(m - peak);
    }
    Ok(mdd)
}

fn diffs(means: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if means.len() < 2 {
        return Err(MetricsError::DegenerateSeries(
            "need at least two windows for generational differences".into(),
        ));
    }
    Ok(means.windows(2).map(|w| w[1] - w[0]).collect())
}

fn std_dev(xs: &[f64], kind: StdKind) -> Result<f64, MetricsError> {
    let n = xs.len() as f64;
    let denom = match kind {
        StdKind::Sample if xs.len() < 2 => {
            return Err(MetricsError::DegenerateSeries(
                "sample standard deviation needs two differences".into(),
            ))
        }
        StdKind::Sample => n - 1.0,
        StdKind::Population => n,
    };
    let mean = xs.iter().sum::<f64>() / n;
    Ok((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / denom).sqrt())
}

pub fn volatility(means: &[f64], kind: StdKind) -> Result<f64, MetricsError> {
    std_dev(&diffs(means)?, kind)
}

pub fn sharpe_ratio(means: &[f64], kind: StdKind) -> Result<f64, MetricsError> {
    let d = diffs(means)?;
    let nu = std_dev(&d, kind)?;
    if nu == 0.0 {
        return Err(MetricsError::DegenerateSeries("zero volatility".into()));
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64 / nu)
}

/// All five metrics with the sample standard deviation.
pub fn metrics(series: &GenerationSeries) -> Result<Metrics, MetricsError> {
    metrics_with(&series.means, StdKind::Sample)
}

pub fn metrics_with(means: &[f64], kind: StdKind) -> Result<Metrics, MetricsError> {
    let volatility = volatility(means, kind)?;
    Ok(Metrics {
        delta: delta(means)?,
        delta_max: delta_max(means)?,
        volatility,
        sharpe: sharpe_ratio(means, kind).ok(),
        max_drawdown: max_drawdown(means)?,
    })
}

pub const METRICS_CSV_HEADER: &str = "window,mean_fitness";

pub fn metrics_csv(series: &GenerationSeries) -> String {
    let mut s = format!("{METRICS_CSV_HEADER}\n");
    for (g, m) in series.means.iter().enumerate() {
        s += &format!("{g},{m}\n");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero pairs used.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Exact `P(W+ >= w_plus)` under the null of symmetric differences.
    pub p_value: f64,
}

/// Exact one-sided signed-rank test that `diffs` are shifted above zero.
///
/// Zero differences are dropped; tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult, MetricsError> {
    let mut d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    if d.is_empty() {
        return Err(MetricsError::DegenerateSeries("all differences are zero".into()));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::DegenerateSeries("non-finite difference".into()));
    }
    d.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = d.len();
    // Doubled ranks keep average ranks integral.
    let mut rank2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        let r = (i + 1 + j + 1) as u64;
        rank2[i..=j].fill(r);
        i = j + 1;
    }
    let w2: u64 = d.iter().zip(&rank2).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total: u64 = rank2.iter().sum();
    // counts[s] = number of sign patterns with doubled positive-rank sum s.
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in &rank2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: f64 = counts[w2 as usize..].iter().sum();
    Ok(WilcoxonResult {
        n,
        w_plus: w2 as f64 / 2.0,
        p_value: tail / 2f64.powi(n as i32),
    })
}
