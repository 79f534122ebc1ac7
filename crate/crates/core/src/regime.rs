//! Horizon and perturbation budget for approximating an ergodic chain.
//!
//! With `C` the Lipschitz constant of the ideal kernel in `rho_lambda` and
//! `tau1` its variation threshold time, the perturbed chain is within
//! `epsilon` of stationarity after `t_eps = ceil(ln(2e/epsilon) tau1)` steps
//! provided the per-step kernel error `delta` is at most
//!
//! * `(1 - lambda C) epsilon / (2 t_eps)` when `lambda C < 1`,
//! * `epsilon / (t_eps (t_eps + 1))` when `lambda C = 1`,
//! * `(lambda C - 1)^2 epsilon / (2 (lambda C)^(t_eps + 1))` when `lambda C > 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Width of the band around `lambda C = 1` treated as the boundary case.
pub const NEUTRAL_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Convergent,
    Neutral,
    Divergent,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Convergent => "convergent",
            Regime::Neutral => "neutral",
            Regime::Divergent => "divergent",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergent" => Ok(Regime::Convergent),
            "neutral" => Ok(Regime::Neutral),
            "divergent" => Ok(Regime::Divergent),
            other => invalid(format!("unknown regime {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub lambda: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub epsilon: f64,
    pub tau1: u64,
    pub t_epsilon: u64,
    pub regime: Regime,
    /// Zero when the budget underflows a double; see `log2_delta_budget`.
    pub delta_budget: f64,
    pub log2_delta_budget: f64,
    pub underflow: bool,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return invalid(format!("{name} must be finite and >= 0, got {v}"));
    }
    Ok(())
}

pub fn classify_regime(lambda: f64, c: f64) -> Result<Regime> {
    check_nonneg("lambda", lambda)?;
    check_nonneg("C", c)?;
    let lc = lambda * c;
    Ok(if lc < 1.0 - NEUTRAL_BAND {
        Regime::Convergent
    } else if lc > 1.0 + NEUTRAL_BAND {
        Regime::Divergent
    } else {
        Regime::Neutral
    })
}

/// `ceil(ln(2e / epsilon) * tau1)`.
///
/// Products within 1e-12 (relative) of an integer are taken to be that integer,
/// so that exactly representable cases such as `epsilon = 2` are not pushed up
/// by rounding in the logarithm.
pub fn t_epsilon(epsilon: f64, tau1: u64) -> Result<u64> {
    let two_e = 2.0 * std::f64::consts::E;
    if !(epsilon > 0.0) || epsilon > two_e {
        return invalid(format!("epsilon must lie in (0, 2e], got {epsilon}"));
    }
    let product = (1.0 + (2.0 / epsilon).ln()) * tau1 as f64;
    let nearest = product.round();
    let value = if (product - nearest).abs() <= 1e-12 * nearest.abs().max(1.0) {
        nearest
    } else {
        product.ceil()
    };
    Ok(value.max(0.0) as u64)
}

/// Horizon, regime and admissible per-step kernel error.
pub fn delta_budget(lambda: f64, c: f64, epsilon: f64, tau1: u64) -> Result<RegimeReport> {
    let regime = classify_regime(lambda, c)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return invalid(format!("epsilon must lie in (0, 1], got {epsilon}"));
    }
    if tau1 < 1 {
        return invalid("tau1 must be at least 1");
    }
    let t = t_epsilon(epsilon, tau1)?;
    let tf = t as f64;
    let lc = lambda * c;
    let ln2 = std::f64::consts::LN_2;
    let (delta, log2) = match regime {
        Regime::Convergent => {
            let d = (1.0 - lc) * epsilon / (2.0 * tf);
            (d, d.log2())
        }
        Regime::Neutral => {
            let d = epsilon / (tf * (tf + 1.0));
            (d, d.log2())
        }
        Regime::Divergent => {
            let ln_d = 2.0 * (lc - 1.0).ln() + epsilon.ln() - ln2 - (tf + 1.0) * lc.ln();
            (ln_d.exp(), ln_d / ln2)
        }
    };
    Ok(RegimeReport {
        lambda,
        c,
        epsilon,
        tau1,
        t_epsilon: t,
        regime,
        delta_budget: delta,
        log2_delta_budget: log2,
        underflow: delta == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn horizon_examples() {
        let two_e = 2.0 * std::f64::consts::E;
        assert_eq!(t_epsilon(two_e, 37).unwrap(), 0);
        assert_eq!(t_epsilon(2.0, 5).unwrap(), 5);
        assert_eq!(t_epsilon(0.1, 100).unwrap(), 400);
        assert!(t_epsilon(0.0, 5).is_err());
        assert!(t_epsilon(-1.0, 5).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify_regime(0.0, 17.0).unwrap(), Regime::Convergent);
        assert_eq!(classify_regime(1.0, 1.0).unwrap(), Regime::Neutral);
        assert_eq!(classify_regime(1.0, 2.0).unwrap(), Regime::Divergent);
        assert_eq!(classify_regime(1.0, 1.0 + 1e-14).unwrap(), Regime::Neutral);
        assert!(classify_regime(-1.0, 1.0).is_err());
    }

    #[test]
    fn underflow_is_reported_in_log_space() {
        let r = delta_budget(1.0, 4.0, 0.1, 1000).unwrap();
        assert!(r.underflow);
        assert_eq!(r.delta_budget, 0.0);
        assert!(r.log2_delta_budget < -1000.0 && r.log2_delta_budget.is_finite());
    }

    #[test]
    fn budget_validation() {
        assert!(delta_budget(0.0, 1.0, 0.0, 10).is_err());
        assert!(delta_budget(0.0, 1.0, 1.5, 10).is_err());
        assert!(delta_budget(0.0, 1.0, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn budget_monotone(
            lc in prop_oneof![0.0f64..0.99, Just(1.0), 1.01f64..3.0],
            eps in 0.01f64..1.0,
            deps in 0.0f64..0.5,
            tau in 1u64..400,
            dtau in 0u64..400,
        ) {
            let base = delta_budget(lc, 1.0, eps, tau).unwrap();
            let longer = delta_budget(lc, 1.0, eps, tau + dtau).unwrap();
            let looser = delta_budget(lc, 1.0, (eps + deps).min(1.0), tau).unwrap();
            prop_assert!(base.delta_budget > 0.0 || base.underflow);
            prop_assert!(longer.log2_delta_budget <= base.log2_delta_budget + 1e-12);
            prop_assert!(looser.log2_delta_budget >= base.log2_delta_budget - 1e-12);
            prop_assert!(longer.t_epsilon >= base.t_epsilon);
        }

        #[test]
        fn horizon_grows_as_epsilon_shrinks(eps in 0.001f64..5.0, shrink in 0.0f64..1.0, tau in 0u64..1000) {
            let smaller = eps * (1.0 - 0.999 * shrink);
            prop_assert!(t_epsilon(smaller, tau).unwrap() >= t_epsilon(eps, tau).unwrap());
        }
    }
}
