//! The three chain pairs showing that the convergent, neutral and divergent
//! budgets cannot be improved, plus verifiers for their quantitative claims.
//!
//! * Convergent: a walk around a circle of radius `n` that resets to `w_0`
//!   with probability `1/n` per step; the perturbed walk resets with `4/n`.
//! * Neutral: `n` stacked copies of that circle with layer-dependent reset
//!   probability and a downward drift between layers; the perturbed chain
//!   drifts upward instead.
//! * Divergent: the tent map on `n`-bit dyadic fractions followed by a random
//!   appended bit; the perturbed chain copies the neighbouring bit with
//!   probability 3/4.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{
    kernel_lipschitz_constant, stationary_distribution, t_step_distribution,
    variation_threshold_time, ChainPair, FiniteMarkovChain, PairSelection, TAU1_THRESHOLD,
};
use crate::error::{invalid, Error, Result};
use crate::metric::{Distribution, FiniteMetricSpace, Point};
use crate::prohorov::{prohorov_distance, tv_distance};
use crate::regime::delta_budget;

/// Target accuracy used by the tightness reports.
pub const TIGHTNESS_EPSILON: f64 = 0.1;

const STATIONARY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Convergent,
    Neutral,
    Divergent,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Convergent => "convergent",
            Family::Neutral => "neutral",
            Family::Divergent => "divergent",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergent" => Ok(Family::Convergent),
            "neutral" => Ok(Family::Neutral),
            "divergent" => Ok(Family::Divergent),
            other => invalid(format!("unknown family {other:?}")),
        }
    }
}

impl Family {
    pub fn check_n(self, n: usize) -> Result<()> {
        let ok = match self {
            Family::Convergent => n >= 4 && n.is_multiple_of(2),
            Family::Neutral => n >= 10 && n.is_multiple_of(10),
            Family::Divergent => (2..=14).contains(&n),
        };
        if ok {
            Ok(())
        } else {
            let rule = match self {
                Family::Convergent => "an even n >= 4",
                Family::Neutral => "n >= 10 divisible by 10",
                Family::Divergent => "2 <= n <= 14",
            };
            invalid(format!("{self} family needs {rule}, got n = {n}"))
        }
    }

    pub fn pair(self, n: usize) -> Result<ChainPair> {
        match self {
            Family::Convergent => convergent_pair(n),
            Family::Neutral => neutral_pair(n),
            Family::Divergent => divergent_pair(n),
        }
    }

    /// The `lambda` each family is analysed under.
    pub fn lambda(self) -> f64 {
        match self {
            Family::Convergent => 0.0,
            Family::Neutral | Family::Divergent => 1.0,
        }
    }

    /// Horizon handed to the variation-threshold search.
    pub fn tau1_horizon(self, n: usize) -> usize {
        match self {
            Family::Convergent => 10 * n,
            Family::Neutral => 20 * n,
            Family::Divergent => 2 * n,
        }
    }
}

fn circle_point(n: usize, j: usize) -> (f64, f64) {
    let a = 2.0 * PI * j as f64 / n as f64;
    let r = n as f64;
    (r * a.cos(), r * a.sin())
}

fn circle_space(n: usize) -> Result<FiniteMetricSpace> {
    let points = (0..n)
        .map(|j| {
            let (x, y) = circle_point(n, j);
            Point {
                label: format!("w{j}"),
                coords: Some(vec![x, y]),
            }
        })
        .collect();
    FiniteMetricSpace::from_points(points)
}

fn reset_walk(space: FiniteMetricSpace, n: usize, reset: f64) -> Result<FiniteMarkovChain> {
    let rows = (0..n)
        .map(|j| vec![(0, reset), ((j + 1) % n, 1.0 - reset)])
        .collect();
    FiniteMarkovChain::from_sparse(space, rows)
}

/// Reset walk on `n` points of a circle of radius `n`: reset probability
/// `1/n` for the ideal chain, `4/n` for the perturbed one.
pub fn convergent_pair(n: usize) -> Result<ChainPair> {
    Family::Convergent.check_n(n)?;
    let space = circle_space(n)?;
    let nf = n as f64;
    let ideal = reset_walk(space.clone(), n, 1.0 / nf)?;
    let perturbed = reset_walk(space, n, 4.0 / nf)?;
    ChainPair::same_space(ideal, perturbed)
}

/// Reset probability on layer `i` of the neutral family.
pub fn neutral_reset(n: usize, i: usize) -> f64 {
    let nf = n as f64;
    // Thresholds n/5 and 4n/5 are integers when 10 | n.
    if i < n / 5 {
        1.0 / nf
    } else if i < 4 * n / 5 {
        5.0 * i as f64 / (nf * nf)
    } else {
        4.0 / nf
    }
}

/// Index of state `w_{i,j}` in the neutral family.
pub fn neutral_index(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

fn neutral_chain(space: FiniteMetricSpace, n: usize, down: f64) -> Result<FiniteMarkovChain> {
    let rows = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let r = neutral_reset(n, i);
            let lower = i.saturating_sub(1);
            let upper = (i + 1).min(n - 1);
            let mut row = Vec::with_capacity(4);
            for (jn, pj) in [(0, r), ((j + 1) % n, 1.0 - r)] {
                for (inext, pi) in [(lower, down), (upper, 1.0 - down)] {
                    row.push((neutral_index(n, inext, jn), pj * pi));
                }
            }
            row
        })
        .collect();
    FiniteMarkovChain::from_sparse(space, rows)
}

/// `n` layers of `n`-point circles at heights `5i/n^2`. The ideal chain
/// drifts down with probability 2/3, the perturbed chain up with 2/3.
pub fn neutral_pair(n: usize) -> Result<ChainPair> {
    Family::Neutral.check_n(n)?;
    let nf = n as f64;
    let points = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (x, y) = circle_point(n, j);
            Point {
                label: format!("w{i},{j}"),
                coords: Some(vec![x, y, 5.0 * i as f64 / (nf * nf)]),
            }
        })
        .collect();
    let space = FiniteMetricSpace::from_points(points)?;
    let ideal = neutral_chain(space.clone(), n, 2.0 / 3.0)?;
    let perturbed = neutral_chain(space, n, 1.0 / 3.0)?;
    ChainPair::same_space(ideal, perturbed)
}

/// The discrete tent map on states `i` standing for `i / 2^n`.
pub fn tent_map(n: usize, i: u64) -> u64 {
    let half = 1u64 << (n - 1);
    if i < half {
        2 * i
    } else {
        2 * ((1u64 << n) - 1 - i)
    }
}

/// Tent map followed by a random appended bit; the perturbed chain appends a
/// copy of the bit to its left with probability 3/4.
pub fn divergent_pair(n: usize) -> Result<ChainPair> {
    Family::Divergent.check_n(n)?;
    let size = 1usize << n;
    let scale = size as f64;
    let points = (0..size)
        .map(|i| Point {
            label: format!("{i}/2^{n}"),
            coords: Some(vec![i as f64 / scale]),
        })
        .collect();
    let space = FiniteMetricSpace::from_points(points)?;
    let mut ideal = Vec::with_capacity(size);
    let mut perturbed = Vec::with_capacity(size);
    for i in 0..size as u64 {
        let g = tent_map(n, i) as usize;
        ideal.push(vec![(g, 0.5), (g + 1, 0.5)]);
        let left_bit = (g >> 1) & 1;
        perturbed.push(vec![(g + left_bit, 0.75), (g + 1 - left_bit, 0.25)]);
    }
    let ideal = FiniteMarkovChain::from_sparse(space.clone(), ideal)?;
    let perturbed = FiniteMarkovChain::from_sparse(space, perturbed)?;
    ChainPair::same_space(ideal, perturbed)
}

/// States of the divergent family in `[0, 1/4) U [3/4, 1)`.
pub fn divergent_outer_quarters(n: usize) -> Vec<usize> {
    let size = 1usize << n;
    (0..size).filter(|&i| 4 * i < size || 4 * i >= 3 * size).collect()
}

/// States of the divergent family in `[0, 1/3) U [2/3, 1)`.
pub fn divergent_outer_thirds(n: usize) -> Vec<usize> {
    let size = 1usize << n;
    (0..size).filter(|&i| 3 * i < size || 3 * i >= 2 * size).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub n: usize,
    pub t: usize,
    pub start: usize,
    /// `P-hat^t(x, A)` for `A = [0,1/4) U [3/4,1)`.
    pub perturbed_mass_quarters: f64,
    /// `P^t(x, A')` for `A' = [0,1/3) U [2/3,1)`.
    pub ideal_mass_thirds: f64,
    /// `|A'| / 2^n`.
    pub thirds_fraction: f64,
    /// `rho_1(P-hat^t(x, .), pi)` with `pi` uniform.
    pub rho_to_stationary: f64,
}

pub fn verify_divergent_separation(n: usize, t: usize, start: usize) -> Result<SeparationReport> {
    if t < n {
        return invalid(format!("separation needs t >= n, got t = {t} < n = {n}"));
    }
    let pair = divergent_pair(n)?;
    let hat = t_step_distribution(&pair.perturbed, start, t)?;
    let ideal = t_step_distribution(&pair.ideal, start, t)?;
    let quarters = divergent_outer_quarters(n);
    let thirds = divergent_outer_thirds(n);
    let uniform = Distribution::uniform(1 << n)?;
    let rho = prohorov_distance(&hat, &uniform, pair.ideal.space(), 1.0)?.value;
    Ok(SeparationReport {
        n,
        t,
        start,
        perturbed_mass_quarters: hat.mass_of(&quarters),
        ideal_mass_thirds: ideal.mass_of(&thirds),
        thirds_fraction: thirds.len() as f64 / (1u64 << n) as f64,
        rho_to_stationary: rho,
    })
}

/// Adjacent state pairs over which the Lipschitz constant is checked.
pub fn adjacent_pairs(family: Family, n: usize) -> Vec<(usize, usize)> {
    match family {
        Family::Convergent => (0..n).map(|j| (j, (j + 1) % n)).collect(),
        Family::Neutral => (0..n - 1)
            .flat_map(|i| (0..n).map(move |j| (neutral_index(n, i, j), neutral_index(n, i + 1, j))))
            .collect(),
        Family::Divergent => (0..(1usize << n) - 1).map(|i| (i, i + 1)).collect(),
    }
}

/// One row of the tightness table.
#[derive(Debug, Clone, Serialize)]
pub struct TightnessReport {
    pub family: Family,
    pub n: usize,
    pub tau1: usize,
    /// `max_x rho_lambda(P-hat(x,.), P(x,.))`.
    pub delta_actual: f64,
    /// Admissible per-step error at `epsilon` for the computed `tau1`.
    pub delta_budget: f64,
    /// Distance between the two stationary laws (TV for the convergent
    /// family, `rho_1` otherwise).
    pub gap: f64,
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub log2_delta_budget: f64,
    pub t_epsilon: u64,
}

pub fn verify_regime_tightness(family: Family, n: usize) -> Result<TightnessReport> {
    let pair = family.pair(n)?;
    let lambda = family.lambda();
    let space = pair.ideal.space();

    let mut delta_actual = 0.0_f64;
    for x in 0..pair.perturbed.len() {
        let hat = pair.embed(pair.perturbed.row(x)?.weights())?;
        let ideal = pair.ideal.row(pair.embedding[x])?;
        delta_actual = delta_actual.max(prohorov_distance(&hat, &ideal, space, lambda)?.value);
    }

    // With lambda = 0 the Lipschitz condition is vacuous at C = 1 because all
    // states are more than distance 1 apart.
    let c = match family {
        Family::Convergent => 1.0,
        _ => kernel_lipschitz_constant(
            &pair.ideal,
            lambda,
            &PairSelection::Listed(adjacent_pairs(family, n)),
        )?,
    };

    let tau1 = variation_threshold_time(&pair.ideal, family.tau1_horizon(n), TAU1_THRESHOLD)?.tau1;
    let pi = stationary_distribution(&pair.ideal, STATIONARY_TOL)?;
    let pi_hat = pair.embed(stationary_distribution(&pair.perturbed, STATIONARY_TOL)?.weights())?;
    let gap = match family {
        Family::Convergent => tv_distance(&pi, &pi_hat)?,
        _ => prohorov_distance(&pi, &pi_hat, space, lambda)?.value,
    };
    let budget = delta_budget(lambda, c, TIGHTNESS_EPSILON, tau1.max(1) as u64)?;
    Ok(TightnessReport {
        family,
        n,
        tau1,
        delta_actual,
        delta_budget: budget.delta_budget,
        gap,
        epsilon: TIGHTNESS_EPSILON,
        lambda,
        c,
        log2_delta_budget: budget.log2_delta_budget,
        t_epsilon: budget.t_epsilon,
    })
}

/// Exact stationary probabilities of the upper half of the circle, and the
/// finite-n values of the event probabilities that bound them.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergentAnchors {
    pub n: usize,
    /// `pi(j >= n/2)` for the ideal chain.
    pub ideal_upper_half: f64,
    /// `pi-hat(j >= n/2)` for the perturbed chain.
    pub perturbed_upper_half: f64,
    pub tv_gap: f64,
    /// `Pr(no reset in n/2 steps and some reset in n steps)` at reset rate `1/n`.
    pub ideal_event_probability: f64,
    /// `Pr(no reset in n/2 steps)` at reset rate `4/n`.
    pub perturbed_event_probability: f64,
}

pub fn convergent_anchors(n: usize) -> Result<ConvergentAnchors> {
    let pair = convergent_pair(n)?;
    let pi = stationary_distribution(&pair.ideal, STATIONARY_TOL)?;
    let pi_hat = stationary_distribution(&pair.perturbed, STATIONARY_TOL)?;
    let upper: Vec<usize> = (n / 2..n).collect();
    let nf = n as f64;
    let half = (n / 2) as i32;
    let stay = (1.0 - 1.0 / nf).powi(half);
    Ok(ConvergentAnchors {
        n,
        ideal_upper_half: pi.mass_of(&upper),
        perturbed_upper_half: pi_hat.mass_of(&upper),
        tv_gap: tv_distance(&pi, &pi_hat)?,
        ideal_event_probability: stay * (1.0 - stay),
        perturbed_event_probability: (1.0 - 4.0 / nf).powi(half),
    })
}
