//! Total variation, the parametric Prohorov distance `rho_lambda`, and Ky Fan
//! values of couplings, all exact on finite metric spaces.
//!
//! `rho_lambda(p, q)` is the least `eps` with `p(A) <= q(A^{lambda eps}) + eps`
//! for every set `A`. By the coupling characterisation it is also the least
//! `eps` for which some coupling puts mass at most `eps` on pairs farther
//! apart than `lambda eps`. The minimal such mass at a spatial threshold `t`
//! (the transportation deficiency) is one minus a maximum flow, and it is a
//! step function of `t` that only changes at pairwise distances. The distance
//! is therefore `min_k max(t_k / lambda, deficiency(t_k))` over those
//! distances, which [`prohorov_distance`] finds by bisection on `k`.
//!
//! [`prohorov_bruteforce`] evaluates the set condition directly over all
//! subsets and serves as the reference for the flow-based path.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::flow::{gated_transport, GatedPlan};
use crate::metric::{Coupling, Distribution, FiniteMetricSpace, JointMass};

/// Largest space accepted by [`prohorov_bruteforce`].
pub const BRUTEFORCE_CAP: usize = 20;

/// Relative slack applied to neighbourhood radii in the brute-force oracle so
/// that `lambda * (t / lambda)` rounding below `t` does not drop boundary points.
const RADIUS_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct ProhorovResult {
    pub value: f64,
    pub witness_coupling: Coupling,
    /// The distance threshold gating the optimal flow; the smallest one
    /// achieving `value`. Never exceeds `lambda * value`.
    pub critical_threshold: f64,
}

fn check_pair(p: &Distribution, q: &Distribution, space: Option<&FiniteMetricSpace>) -> Result<()> {
    if p.len() != q.len() {
        return invalid(format!(
            "distributions live on spaces of different sizes ({} vs {})",
            p.len(),
            q.len()
        ));
    }
    if let Some(s) = space {
        if s.len() != p.len() {
            return invalid(format!(
                "distributions have {} weights but the space has {} points",
                p.len(),
                s.len()
            ));
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    Ok(())
}

/// Half the l1 distance, i.e. `sup_A |p(A) - q(A)|`.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_pair(p, q, None)?;
    Ok(tv_unchecked(p.weights(), q.weights()))
}

pub(crate) fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Minimum over couplings of `Pr[d(X, Y) > threshold]`.
pub fn transportation_deficiency(
    p: &Distribution,
    q: &Distribution,
    space: &FiniteMetricSpace,
    threshold: f64,
) -> Result<f64> {
    check_pair(p, q, Some(space))?;
    if !(threshold >= 0.0) {
        return invalid(format!("threshold must be >= 0, got {threshold}"));
    }
    Ok(deficiency_of(&gated_transport(space, p, q, threshold)))
}

fn deficiency_of(plan: &GatedPlan) -> f64 {
    (1.0 - plan.routed).max(0.0)
}

/// Completes a gated partial plan to a full coupling by pairing the leftover
/// mass independently.
fn complete_plan(plan: GatedPlan, p: &Distribution, q: &Distribution) -> Result<Coupling> {
    let mut rows = vec![0.0; p.len()];
    let mut cols = vec![0.0; q.len()];
    for c in &plan.cells {
        rows[c.left] += c.mass;
        cols[c.right] += c.mass;
    }
    let left_rest: Vec<f64> = p.weights().iter().zip(&rows).map(|(w, r)| (w - r).max(0.0)).collect();
    let right_rest: Vec<f64> = q.weights().iter().zip(&cols).map(|(w, c)| (w - c).max(0.0)).collect();
    let total_left: f64 = left_rest.iter().sum();
    let total_right: f64 = right_rest.iter().sum();
    let mut cells = plan.cells;
    if total_left > 0.0 && total_right > 0.0 {
        for (i, &a) in left_rest.iter().enumerate().filter(|(_, a)| **a > 0.0) {
            for (j, &b) in right_rest.iter().enumerate().filter(|(_, b)| **b > 0.0) {
                cells.push(JointMass {
                    left: i,
                    right: j,
                    mass: a * b / total_right,
                });
            }
        }
    }
    Coupling::new(cells, p.clone(), q.clone())
}

/// Distinct distances up to `cap` between the supports of `p` and `q`, plus
/// zero, ascending.
fn support_thresholds(
    space: &FiniteMetricSpace,
    p: &Distribution,
    q: &Distribution,
    cap: f64,
) -> Vec<f64> {
    let left = p.support();
    let right = q.support();
    let mut ts = Vec::with_capacity(left.len() * right.len() + 1);
    ts.push(0.0);
    for &i in &left {
        for &j in &right {
            let d = space.dist(i, j);
            if d <= cap {
                ts.push(d);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Smallest double `e >= t / lambda` with `lambda * e >= t` in floating point,
/// so that the spatial slack `lambda * e` really covers distance `t`.
pub(crate) fn slack_for(t: f64, lambda: f64) -> f64 {
    let mut e = t / lambda;
    while lambda * e < t {
        e = e.next_up();
    }
    e
}

/// Exact `rho_lambda(p, q)` with an optimal coupling.
pub fn prohorov_distance(
    p: &Distribution,
    q: &Distribution,
    space: &FiniteMetricSpace,
    lambda: f64,
) -> Result<ProhorovResult> {
    check_pair(p, q, Some(space))?;
    check_lambda(lambda)?;

    if lambda == 0.0 {
        let plan = gated_transport(space, p, q, 0.0);
        let value = deficiency_of(&plan);
        return Ok(ProhorovResult {
            value,
            witness_coupling: complete_plan(plan, p, q)?,
            critical_threshold: 0.0,
        });
    }

    // A threshold above lambda yields a candidate above 1, and 1 is always
    // attainable, so only thresholds up to lambda matter.
    let ts = support_thresholds(space, p, q, lambda);
    let mut cache: HashMap<usize, GatedPlan> = HashMap::new();
    let mut deficiency = |k: usize| -> f64 {
        deficiency_of(
            cache
                .entry(k)
                .or_insert_with(|| gated_transport(space, p, q, ts[k])),
        )
    };

    // Smallest k with t_k / lambda >= deficiency(t_k).
    let last = ts.len() - 1;
    let (mut lo, mut hi) = (0usize, ts.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if slack_for(ts[mid], lambda) >= deficiency(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let best = if lo > last {
        (deficiency(last), last)
    } else {
        let k = lo;
        let mut best = (slack_for(ts[k], lambda), k);
        if k > 0 {
            let below = deficiency(k - 1);
            if below <= best.0 {
                best = (below, k - 1);
            }
        }
        best
    };
    let (value, k) = best;
    let plan = cache
        .remove(&k)
        .unwrap_or_else(|| gated_transport(space, p, q, ts[k]));
    Ok(ProhorovResult {
        value: value.min(1.0),
        witness_coupling: complete_plan(plan, p, q)?,
        critical_threshold: ts[k],
    })
}

/// `rho_lambda(p, q)` straight from the set condition, enumerating all `2^n`
/// subsets. Shares no code with the flow-based path.
pub fn prohorov_bruteforce(
    p: &Distribution,
    q: &Distribution,
    space: &FiniteMetricSpace,
    lambda: f64,
) -> Result<f64> {
    check_pair(p, q, Some(space))?;
    check_lambda(lambda)?;
    let n = space.len();
    if n > BRUTEFORCE_CAP {
        return Err(Error::SpaceTooLarge {
            size: n,
            cap: BRUTEFORCE_CAP,
        });
    }
    let oracle = SubsetOracle::new(space, p.weights(), q.weights());

    if lambda == 0.0 {
        return Ok(oracle.worst_excess(0.0));
    }

    let mut radii: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| space.dist(i, j))
        .collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let feasible = |eps: f64| oracle.worst_excess(lambda * eps) <= eps;

    // A^{lambda eps} only changes where lambda eps crosses a distance, so the
    // infimum is one of these candidates.
    let mut best = 1.0_f64;
    for &t in &radii {
        let cand = (t / lambda).max(oracle.worst_excess(t));
        if cand < best && feasible(cand) {
            best = cand;
        }
    }

    // Independent bisection on the monotone feasibility predicate.
    if !feasible(0.0) {
        let (mut lo, mut hi) = (0.0_f64, best);
        for _ in 0..200 {
            if hi - lo <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        best = best.min(hi);
    } else {
        best = 0.0;
    }
    Ok(best)
}

struct SubsetOracle<'a> {
    space: &'a FiniteMetricSpace,
    n: usize,
    p_mass: Vec<f64>,
    q_mass: Vec<f64>,
}

impl<'a> SubsetOracle<'a> {
    fn new(space: &'a FiniteMetricSpace, p: &[f64], q: &[f64]) -> Self {
        let n = space.len();
        let size = 1usize << n;
        let mut p_mass = vec![0.0; size];
        let mut q_mass = vec![0.0; size];
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            p_mass[mask] = p_mass[rest] + p[low];
            q_mass[mask] = q_mass[rest] + q[low];
        }
        Self {
            space,
            n,
            p_mass,
            q_mass,
        }
    }

    /// `max_A p(A) - q(A^radius)` over all subsets (the empty set gives 0).
    fn worst_excess(&self, radius: f64) -> f64 {
        let n = self.n;
        let slack = radius * (1.0 + RADIUS_RTOL);
        let near: Vec<usize> = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&y| self.space.dist(x, y) <= slack)
                    .fold(0usize, |m, y| m | 1 << y)
            })
            .collect();
        let size = 1usize << n;
        let mut blown = vec![0usize; size];
        let mut worst = 0.0_f64;
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            blown[mask] = blown[mask & (mask - 1)] | near[low];
            worst = worst.max(self.p_mass[mask] - self.q_mass[blown[mask]]);
        }
        worst
    }
}

/// `K_lambda` of a coupling: least `eps` with `Pr[d > lambda eps] <= eps`.
pub fn kyfan_value(c: &Coupling, space: &FiniteMetricSpace, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if c.left_marginal().len() != space.len() || c.right_marginal().len() != space.len() {
        return invalid("coupling and space sizes differ");
    }
    let mut pairs: Vec<(f64, f64)> = c
        .joint()
        .iter()
        .map(|cell| (space.dist(cell.left, cell.right), cell.mass))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();

    // Tail mass strictly beyond each breakpoint, starting from t = 0.
    let mut beyond_zero = total;
    let mut idx = 0;
    while idx < pairs.len() && pairs[idx].0 <= 0.0 {
        beyond_zero -= pairs[idx].1;
        idx += 1;
    }
    let beyond_zero = beyond_zero.max(0.0);
    if lambda == 0.0 {
        return Ok(beyond_zero.min(1.0));
    }
    let mut best = beyond_zero;
    let mut tail = beyond_zero;
    while idx < pairs.len() {
        let t = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == t {
            tail -= pairs[idx].1;
            idx += 1;
        }
        best = best.min(slack_for(t, lambda).max(tail.max(0.0)));
    }
    Ok(best.min(1.0))
}
