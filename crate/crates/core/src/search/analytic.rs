//! Closed-form costs of staged versus single-shot generation, design yield and
//! pipeline throughput.

use serde::{Deserialize, Serialize};

use super::{GeneratorModel, SearchError};

fn check_probability(p: f64) -> Result<(), SearchError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(SearchError::DomainError(format!("probability {p} is outside (0, 1]")))
    }
}

/// Expected single-shot calls until success: `1 / p`.
pub fn expected_calls_direct(p_valid: f64) -> Result<f64, SearchError> {
    check_probability(p_valid)?;
    Ok(1.0 / p_valid)
}

/// Expected staged calls: `Σ 1 / p_k`.
pub fn expected_calls_vs(ps: &[f64]) -> Result<f64, SearchError> {
    ps.iter().try_fold(0.0, |acc, &p| {
        check_probability(p)?;
        Ok(acc + 1.0 / p)
    })
}

/// `Σ (1 / p_k) (c_i (H_k + δ_k) + c_o O_k)`.
pub fn expected_cost_vs(model: &GeneratorModel) -> Result<f64, SearchError> {
    model.steps.iter().enumerate().try_fold(0.0, |acc, (k, s)| {
        check_probability(s.p)?;
        Ok(acc + model.attempt_cost(k) / s.p)
    })
}

/// `Cost_full / Π p_k`.
pub fn expected_cost_direct(model: &GeneratorModel) -> Result<f64, SearchError> {
    for s in &model.steps {
        check_probability(s.p)?;
    }
    Ok(model.full_cost() / model.p_direct())
}

/// Expected output tokens written under staged generation: `Σ O_k / p_k`.
pub fn expected_output_tokens_vs(model: &GeneratorModel) -> Result<f64, SearchError> {
    model.steps.iter().try_fold(0.0, |acc, s| {
        check_probability(s.p)?;
        Ok(acc + s.output / s.p)
    })
}

/// Output tokens of one single-shot draw: `Σ O_k`.
pub fn single_shot_output_tokens(model: &GeneratorModel) -> f64 {
    model.steps.iter().map(|s| s.output).sum()
}

/// Expected number of good designs out of budget `budget`: `Q E B / c`.
pub fn expected_yield(quality: f64, efficiency: f64, cost: f64, budget: f64) -> Result<f64, SearchError> {
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(SearchError::DomainError(format!("cost per design {cost} must be positive")));
    }
    if !(quality >= 0.0 && efficiency >= 0.0 && budget >= 0.0) {
        return Err(SearchError::DomainError(
            "quality, efficiency and budget must be nonnegative".into(),
        ));
    }
    Ok(quality * efficiency * budget / cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    /// Designs per unit time: `min(N_D / T_D, N_V / T_V)`.
    pub theta: f64,
    /// Balanced verifier-to-designer ratio `T_V / T_D`.
    pub r_star: f64,
}

/// Throughput of a design/verify pipeline with `n_d` designers and `n_v` verifiers.
pub fn throughput(n_d: f64, n_v: f64, t_d: f64, t_v: f64) -> Result<Throughput, SearchError> {
    if !(t_d > 0.0 && t_v > 0.0) {
        return Err(SearchError::DomainError("stage times must be positive".into()));
    }
    if !(n_d >= 0.0 && n_v >= 0.0) {
        return Err(SearchError::DomainError("node counts must be nonnegative".into()));
    }
    Ok(Throughput {
        theta: (n_d / t_d).min(n_v / t_v),
        r_star: t_v / t_d,
    })
}

/// Effective design time when a fraction `error_rate` of designs must be redone.
pub fn design_time_with_errors(mean_design_time: f64, error_rate: f64) -> Result<f64, SearchError> {
    if !(0.0..1.0).contains(&error_rate) {
        return Err(SearchError::DomainError(format!("error rate {error_rate} is outside [0, 1)")));
    }
    Ok(mean_design_time / (1.0 - error_rate))
}

/// Wall-clock verification minutes from measured training seconds plus a fractional overhead.
pub fn verification_minutes(train_seconds: f64, overhead: f64) -> f64 {
    train_seconds * (1.0 + overhead) / 60.0
}

/// `(N, E_direct, E_vs, E_direct / E_vs)` for `N` identical steps at probability `p`.
pub fn vs_gap(p: f64, n: usize) -> Result<(f64, f64, f64), SearchError> {
    check_probability(p)?;
    let direct = expected_calls_direct(p.powi(n as i32))?;
    let vs = expected_calls_vs(&vec![p; n])?;
    Ok((direct, vs, direct / vs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::StepModel;

    #[test]
    fn spot_values() {
        assert_eq!(expected_calls_direct(1.0).unwrap(), 1.0);
        assert_eq!(expected_calls_direct(0.5f64.powi(3)).unwrap(), 8.0);
        assert_eq!(expected_calls_vs(&[1.0; 4]).unwrap(), 4.0);
        assert_eq!(expected_calls_vs(&[0.5; 3]).unwrap(), 6.0);
        let mixed = expected_calls_vs(&[0.9, 0.3, 0.6]).unwrap();
        assert!((mixed - (10.0 / 9.0 + 10.0 / 3.0 + 5.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(expected_calls_direct(0.0), Err(SearchError::DomainError(_))));
        assert!(matches!(expected_calls_direct(-0.1), Err(SearchError::DomainError(_))));
    }

    #[test]
    fn single_step_cost() {
        let mut m = GeneratorModel::uniform(0.5, 1);
        m.steps[0] = StepModel {
            p: 0.5,
            history: 6.0,
            instruction: 4.0,
            output: 5.0,
        };
        m.input_price = 1.0;
        m.output_price = 2.0;
        assert_eq!(expected_cost_vs(&m).unwrap(), 40.0);
        assert_eq!(expected_cost_vs(&GeneratorModel::uniform(0.3, 4)).unwrap(), 0.0);
    }

    #[test]
    fn yield_and_throughput() {
        assert_eq!(expected_yield(1.0, 1.0, 7.0, 7.0).unwrap(), 1.0);
        assert_eq!(expected_yield(0.0, 0.7, 2.0, 9.0).unwrap(), 0.0);
        let t = throughput(10.0, 5.0, 20.0, 10.0).unwrap();
        assert_eq!(t.theta, 0.5);
        assert_eq!(t.r_star, 0.5);
        let td = design_time_with_errors(20.0, 0.0861).unwrap();
        assert_eq!((td * 10.0).round() / 10.0, 21.9);
        let r = verification_minutes(566.0, 0.3) / td;
        assert!((r - 0.56).abs() < 0.005, "{r}");
    }

    #[test]
    fn gap_at_ten() {
        let (_, _, ratio) = vs_gap(0.5, 10).unwrap();
        assert!((ratio - 51.2).abs() < 1e-12);
    }
}
