//! Synthetic verification: scale-correlated task scores from bag-of-units features.
//!
//! Each unit name carries a hidden weight per task. A design's linear score
//! on task `t` is the weighted unit count, scaled by a per-scale gain, pushed
//! through a logistic squash together with cross-scale and observation noise.
//! Weights factor as `u[name] * a[task]` with `a > 0`, so with zero noise the
//! fitness ranking of any set of designs is the same at every scale.

pub mod seeds;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::unit_tree::{unit_bag, UnitTree};

/// Error rate of a verification run in the reference deployment (8.61%).
pub const DEFAULT_ERROR_RATE: f64 = 0.0861;

/// Logits are clamped so scores stay strictly inside (0, 1).
const LOGIT_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub label: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub tasks: Vec<String>,
    /// Per-task intercept.
    pub base: Vec<f64>,
    /// Unit name → per-task weight.
    pub weights: BTreeMap<String, Vec<f64>>,
    pub scales: Vec<ScaleSpec>,
    pub sigma_scale: f64,
    pub sigma_obs: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("simulated verification run failed")]
    VerificationError,
    #[error("unknown scale `{0}`")]
    UnknownScale(String),
    #[error("invalid landscape: {0}")]
    InvalidLandscape(String),
}

/// Scale labels and gains of the four lowest rungs.
pub fn default_scales() -> Vec<ScaleSpec> {
    [("14M", 1.0), ("31M", 1.1), ("70M", 1.2), ("125M", 1.3)]
        .into_iter()
        .map(|(label, gain)| ScaleSpec {
            label: label.into(),
            gain,
        })
        .collect()
}

/// Unit names that differ only by a numeric suffix (`Gate`, `Gate2`) share weights.
pub fn base_name(name: &str) -> &str {
    let trimmed = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if trimmed.is_empty() {
        name
    } else {
        trimmed
    }
}

impl Landscape {
    /// Random landscape over `vocabulary` with `tasks` tasks.
    pub fn generate(seed: u64, vocabulary: &[&str], tasks: usize) -> Landscape {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loadings: Vec<f64> = (0..tasks).map(|_| rng.random_range(0.5..1.5)).collect();
        let base = (0..tasks).map(|_| rng.random_range(-0.5..0.5)).collect();
        let unit = Normal::new(0.0, 0.5).expect("valid normal");
        let mut names: Vec<&str> = vocabulary.iter().map(|n| base_name(n)).collect();
        names.sort_unstable();
        names.dedup();
        let weights = names
            .into_iter()
            .map(|n| {
                let u: f64 = unit.sample(&mut rng);
                (n.to_string(), loadings.iter().map(|a| u * a).collect())
            })
            .collect();
        Landscape {
            tasks: (0..tasks).map(|i| format!("task{i}")).collect(),
            base,
            weights,
            scales: default_scales(),
            sigma_scale: 0.05,
            sigma_obs: 0.05,
            error_rate: DEFAULT_ERROR_RATE,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidLandscape(m.to_string()));
        if self.tasks.is_empty() || self.base.len() != self.tasks.len() {
            return bad("tasks and intercepts must be non-empty and aligned");
        }
        if self.weights.values().any(|w| w.len() != self.tasks.len()) {
            return bad("every weight row needs one entry per task");
        }
        if !(self.sigma_scale >= 0.0 && self.sigma_obs >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.error_rate) && self.error_rate != 1.0 {
            return bad("error rate must lie in [0, 1]");
        }
        if self.scales.is_empty() || self.scales.windows(2).any(|w| w[0].gain >= w[1].gain) {
            return bad("scale gains must be strictly increasing");
        }
        Ok(())
    }

    pub fn scale_index(&self, label: &str) -> Option<usize> {
        self.scales.iter().position(|s| s.label == label)
    }

    pub fn scale_labels(&self) -> Vec<String> {
        self.scales.iter().map(|s| s.label.clone()).collect()
    }

    /// Noise-free per-task linear score `⟨w_t, bag⟩`.
    pub fn linear_scores(&self, tree: &UnitTree) -> Vec<f64> {
        let mut out = vec![0.0; self.tasks.len()];
        for (name, count) in unit_bag(tree) {
            if let Some(w) = self.weights.get(base_name(&name)) {
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += wi * count as f64;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landscape serializes")
    }

    pub fn from_json(text: &str) -> Result<Landscape, OracleError> {
        let l: Landscape =
            serde_json::from_str(text).map_err(|e| OracleError::InvalidLandscape(e.to_string()))?;
        l.validate()?;
        Ok(l)
    }
}

fn logistic(x: f64) -> f64 {
    let x = x.clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
    1.0 / (1.0 + (-x).exp())
}

/// Scores `tree` at `scale` on every task, or fails with probability `error_rate`.
pub fn oracle_scores<R: Rng + ?Sized>(
    tree: &UnitTree,
    scale: &str,
    landscape: &Landscape,
    rng: &mut R,
) -> Result<BTreeMap<String, f64>, OracleError> {
    let idx = landscape
        .scale_index(scale)
        .ok_or_else(|| OracleError::UnknownScale(scale.to_string()))?;
    if rng.random::<f64>() < landscape.error_rate {
        return Err(OracleError::VerificationError);
    }
    let gain = landscape.scales[idx].gain;
    let shared: f64 = rng.sample::<f64, _>(StandardNormal) * landscape.sigma_scale;
    let linear = landscape.linear_scores(tree);
    Ok(landscape
        .tasks
        .iter()
        .zip(&landscape.base)
        .zip(linear)
        .map(|((task, base), lin)| {
            let obs: f64 = rng.sample::<f64, _>(StandardNormal) * landscape.sigma_obs;
            (task.clone(), logistic(base + gain * lin + shared + obs))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<&'static str> {
        vec!["GPT2", "MHA", "GatedMLP", "RMSNorm", "RotaryPositionalEmbeddings", "Mamba2"]
    }

    #[test]
    fn suffixes_share_weights() {
        assert_eq!(base_name("Gate12"), "Gate");
        assert_eq!(base_name("Gate"), "Gate");
        assert_eq!(base_name("7"), "7");
    }

    #[test]
    fn error_rate_one_always_fails() {
        let mut l = Landscape::generate(1, &vocab(), 3);
        l.error_rate = 1.0;
        let t = seeds::gpt2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(
                oracle_scores(&t, "14M", &l, &mut rng),
                Err(OracleError::VerificationError)
            );
        }
    }

    #[test]
    fn scores_are_deterministic_and_bounded() {
        let l = Landscape::generate(3, &vocab(), 4);
        let t = seeds::gpt2();
        let a = oracle_scores(&t, "70M", &l, &mut ChaCha8Rng::seed_from_u64(5));
        let b = oracle_scores(&t, "70M", &l, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        if let Ok(scores) = a {
            assert!(scores.values().all(|s| *s > 0.0 && *s < 1.0));
        }
        assert!(matches!(
            oracle_scores(&t, "1B", &l, &mut ChaCha8Rng::seed_from_u64(5)),
            Err(OracleError::UnknownScale(_))
        ));
    }

    #[test]
    fn landscape_json_round_trip() {
        let l = Landscape::generate(9, &vocab(), 2);
        assert_eq!(Landscape::from_json(&l.to_json()).unwrap(), l);
    }
}
