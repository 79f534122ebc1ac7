//! Finite Markov chains over metric spaces: t-step laws, stationary laws,
//! variation threshold time, kernel Lipschitz constants and the coupled
//! divergence process between an ideal chain and a perturbed one.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{Distribution, FiniteMetricSpace, Point};
use crate::prohorov::{prohorov_distance, tv_unchecked};

const ROW_TOL: f64 = 1e-10;

/// Above this many states the stationary law is found by power iteration
/// instead of a dense linear solve.
pub const DIRECT_SOLVE_MAX: usize = 2000;

/// Default threshold for the variation threshold time.
pub const TAU1_THRESHOLD: f64 = std::f64::consts::E.recip();

/// A row-stochastic kernel on a finite metric space, stored sparsely.
#[derive(Debug, Clone)]
pub struct FiniteMarkovChain {
    space: FiniteMetricSpace,
    rows: Vec<Vec<(usize, f64)>>,
}

impl FiniteMarkovChain {
    /// Builds from sparse rows; repeated targets within a row are merged.
    pub fn from_sparse(space: FiniteMetricSpace, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = space.len();
        if rows.len() != n {
            return invalid(format!("kernel has {} rows for {n} states", rows.len()));
        }
        let mut clean = Vec::with_capacity(n);
        for (x, row) in rows.into_iter().enumerate() {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            let mut sorted = row;
            sorted.sort_by_key(|e| e.0);
            for (y, w) in sorted {
                if y >= n {
                    return Err(Error::NotStochastic {
                        row: x,
                        reason: format!("target {y} out of range"),
                    });
                }
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::NotStochastic {
                        row: x,
                        reason: format!("entry {y} is {w}"),
                    });
                }
                match merged.last_mut() {
                    Some(last) if last.0 == y => last.1 += w,
                    _ => merged.push((y, w)),
                }
            }
            merged.retain(|e| e.1 > 0.0);
            let total: f64 = merged.iter().map(|e| e.1).sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(Error::NotStochastic {
                    row: x,
                    reason: format!("sums to {total}"),
                });
            }
            clean.push(merged);
        }
        Ok(Self { space, rows: clean })
    }

    pub fn from_dense(space: FiniteMetricSpace, kernel: Vec<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        if let Some((x, _)) = kernel.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::NotStochastic {
                row: x,
                reason: format!("has length {} for {n} states", kernel[x].len()),
            });
        }
        let rows = kernel
            .into_iter()
            .map(|r| r.into_iter().enumerate().filter(|e| e.1 != 0.0).collect())
            .collect();
        Self::from_sparse(space, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.space
    }

    pub fn sparse_row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    /// `P(x, .)` as a dense distribution.
    pub fn row(&self, x: usize) -> Result<Distribution> {
        self.check_state(x)?;
        let mut w = vec![0.0; self.len()];
        for &(y, p) in &self.rows[x] {
            w[y] = p;
        }
        Distribution::new(w)
    }

    pub fn dense_kernel(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|x| {
                let mut w = vec![0.0; self.len()];
                for &(y, p) in &self.rows[x] {
                    w[y] = p;
                }
                w
            })
            .collect()
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.len() {
            return invalid(format!("state {x} out of range for {} states", self.len()));
        }
        Ok(())
    }

    /// `mu P` for a row vector `mu`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (x, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                for &(y, p) in &self.rows[x] {
                    out[y] += m * p;
                }
            }
        }
        out
    }

    /// Strong connectivity of the transition graph plus aperiodicity.
    pub fn check_ergodic(&self) -> Result<()> {
        let n = self.len();
        let forward = reach(n, |x| self.rows[x].iter().map(|e| e.0).collect());
        if let Some(x) = forward.iter().position(|l| l.is_none()) {
            return Err(Error::NonErgodic(format!("state {x} is unreachable from state 0")));
        }
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, _) in row {
                reverse[y].push(x);
            }
        }
        let backward = reach(n, |x| reverse[x].clone());
        if let Some(x) = backward.iter().position(|l| l.is_none()) {
            return Err(Error::NonErgodic(format!("state 0 is unreachable from state {x}")));
        }
        // Period = gcd over edges of level(x) + 1 - level(y) for BFS levels.
        let mut g: usize = 0;
        for (x, row) in self.rows.iter().enumerate() {
            let lx = forward[x].unwrap_or_default();
            for &(y, _) in row {
                let ly = forward[y].unwrap_or_default();
                g = gcd(g, (lx + 1).abs_diff(ly));
            }
        }
        if g != 1 {
            return Err(Error::NonErgodic(format!("chain has period {g}")));
        }
        Ok(())
    }

    pub fn to_file_format(&self) -> ChainFile {
        ChainFile {
            states: self.space.points().to_vec(),
            kernel: self.dense_kernel(),
        }
    }

    pub fn from_file_format(file: ChainFile) -> Result<Self> {
        let space = FiniteMetricSpace::from_points(file.states)?;
        Self::from_dense(space, file.kernel)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_format(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file_format())?)?;
        Ok(())
    }
}

/// On-disk chain: labelled states with coordinates and a dense row-major kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub states: Vec<Point>,
    pub kernel: Vec<Vec<f64>>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reach(n: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<Option<usize>> {
    let mut level = vec![None; n];
    level[0] = Some(0);
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        let lx = level[x].unwrap_or_default();
        for y in next(x) {
            if level[y].is_none() {
                level[y] = Some(lx + 1);
                queue.push_back(y);
            }
        }
    }
    level
}

/// `P^t(x, .)` by repeated vector-matrix products.
pub fn t_step_distribution(chain: &FiniteMarkovChain, x: usize, t: usize) -> Result<Distribution> {
    chain.check_state(x)?;
    let mut mu = vec![0.0; chain.len()];
    mu[x] = 1.0;
    for _ in 0..t {
        mu = chain.push_forward(&mu);
    }
    Distribution::new(mu)
}

/// The stationary law of an ergodic chain, with `||pi P - pi||_1 <= tol`.
pub fn stationary_distribution(chain: &FiniteMarkovChain, tol: f64) -> Result<Distribution> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    chain.check_ergodic()?;
    let n = chain.len();
    let mut pi = if n <= DIRECT_SOLVE_MAX {
        direct_stationary(chain)?
    } else {
        vec![1.0 / n as f64; n]
    };
    // Power iteration: the main method for large chains, polishing for small ones.
    let max_iter = 1_000_000;
    for _ in 0..max_iter {
        let next = chain.push_forward(&pi);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            return Distribution::new(pi);
        }
        let total: f64 = next.iter().sum();
        pi = next.into_iter().map(|v| v / total).collect();
    }
    Err(Error::NonErgodic(format!(
        "power iteration did not reach residual {tol} in {max_iter} steps"
    )))
}

fn direct_stationary(chain: &FiniteMarkovChain) -> Result<Vec<f64>> {
    let n = chain.len();
    // Solve (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (x, row) in chain.rows.iter().enumerate() {
        for &(y, p) in row {
            a[(y, x)] += p;
        }
    }
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonErgodic("balance equations are singular".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// The variation threshold time and the max-pair TV at every step examined.
#[derive(Debug, Clone, Serialize)]
pub struct VariationThreshold {
    pub tau1: usize,
    pub threshold: f64,
    /// `profile[t]` is `max_{x,x'} ||P^t(x,.) - P^t(x',.)||_TV`.
    pub profile: Vec<f64>,
}

/// Smallest `t <= t_max` with every pair of t-step rows within `threshold` in TV.
pub fn variation_threshold_time(
    chain: &FiniteMarkovChain,
    t_max: usize,
    threshold: f64,
) -> Result<VariationThreshold> {
    if !(threshold > 0.0) {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }
    let n = chain.len();
    let mut rows = vec![0.0; n * n];
    for x in 0..n {
        rows[x * n + x] = 1.0;
    }
    let mut next = vec![0.0; n * n];
    let mut profile = Vec::new();
    let mut hint = None;
    for t in 0..=t_max {
        let (worst, pair) = max_pair_tv(&rows, n, hint);
        hint = Some(pair);
        profile.push(worst);
        if worst <= threshold {
            return Ok(VariationThreshold {
                tau1: t,
                threshold,
                profile,
            });
        }
        if t == t_max {
            break;
        }
        // P^{t+1}(x, .) = sum_y P(x, y) P^t(y, .)
        for x in 0..n {
            let out = &mut next[x * n..(x + 1) * n];
            out.iter_mut().for_each(|v| *v = 0.0);
            for &(y, p) in &chain.rows[x] {
                let src = &rows[y * n..(y + 1) * n];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += p * s;
                }
            }
        }
        std::mem::swap(&mut rows, &mut next);
    }
    Err(Error::HorizonExceeded {
        t_max,
        last: profile.last().copied().unwrap_or(f64::NAN),
        profile,
    })
}

/// Number of reference laws used to bound pairwise distances.
const TV_REFERENCES: usize = 8;

/// Exact `max_{x,y} TV(row x, row y)` over a dense `n x n` row block, with
/// the maximising pair.
///
/// Branch and bound: TV distances to a few reference laws (the mean row and
/// rows picked by farthest-point selection) bound every pair through the
/// triangle inequality, and only pairs whose bound beats the running maximum
/// are evaluated, each abandoned as soon as its partial sum shows it cannot
/// win. `hint` seeds the running maximum, typically with the previous step's
/// maximiser.
pub(crate) fn max_pair_tv(rows: &[f64], n: usize, hint: Option<(usize, usize)>) -> (f64, (usize, usize)) {
    if n < 2 {
        return (0.0, (0, 0));
    }
    let row = |x: usize| &rows[x * n..(x + 1) * n];
    let mut mean = vec![0.0; n];
    for x in 0..n {
        for (m, v) in mean.iter_mut().zip(row(x)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let totals: Vec<f64> = (0..n).map(|x| row(x).iter().sum()).collect();

    let mut best = 0.0_f64;
    let mut arg = (0, 1);
    let consider = |x: usize, y: usize, d: f64, best: &mut f64, arg: &mut (usize, usize)| {
        if d > *best {
            *best = d;
            *arg = (x.min(y), x.max(y));
        }
    };

    let to_mean: Vec<f64> = (0..n).map(|x| tv_unchecked(row(x), &mean)).collect();
    let mut refs: Vec<Vec<f64>> = vec![to_mean.clone()];
    // Farthest-point selection: each new reference maximises the distance to
    // the nearest earlier one.
    let mut nearest = to_mean.clone();
    for _ in 0..TV_REFERENCES.min(n) {
        let pick = (0..n).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b])).unwrap_or(0);
        let d: Vec<f64> = (0..n).map(|x| tv_unchecked(row(x), row(pick))).collect();
        for x in 0..n {
            consider(pick, x, d[x], &mut best, &mut arg);
            nearest[x] = nearest[x].min(d[x]);
        }
        refs.push(d);
    }
    if let Some((x, y)) = hint.filter(|&(x, y)| x < n && y < n && x != y) {
        consider(x, y, tv_unchecked(row(x), row(y)), &mut best, &mut arg);
    }
    if best >= 1.0 {
        return (best, arg);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| to_mean[b].total_cmp(&to_mean[a]));
    for (i, &x) in order.iter().enumerate() {
        if 2.0 * to_mean[x] <= best {
            break;
        }
        for &y in &order[i + 1..] {
            if to_mean[x] + to_mean[y] <= best {
                break;
            }
            let bound = refs.iter().map(|d| d[x] + d[y]).fold(1.0, f64::min);
            if bound <= best {
                continue;
            }
            if let Some(d) = tv_if_above(row(x), row(y), totals[x], totals[y], best) {
                consider(x, y, d, &mut best, &mut arg);
                if best >= 1.0 {
                    return (best, arg);
                }
            }
        }
    }
    (best, arg)
}

/// `TV(p, q)`, or `None` once the partial sums prove it is below `floor`.
fn tv_if_above(p: &[f64], q: &[f64], total_p: f64, total_q: f64, floor: f64) -> Option<f64> {
    const CHUNK: usize = 64;
    // Margin keeps the early exit safe against rounding in the running sums.
    const MARGIN: f64 = 1e-12;
    let (mut abs, mut seen_p, mut seen_q) = (0.0, 0.0, 0.0);
    for (cp, cq) in p.chunks(CHUNK).zip(q.chunks(CHUNK)) {
        for (a, b) in cp.iter().zip(cq) {
            abs += (a - b).abs();
            seen_p += a;
            seen_q += b;
        }
        // The unseen coordinates add at most half their combined mass.
        let upper = 0.5 * (abs + (total_p - seen_p).max(0.0) + (total_q - seen_q).max(0.0));
        if upper + MARGIN < floor {
            return None;
        }
    }
    Some(0.5 * abs)
}

/// Which state pairs a Lipschitz estimate ranges over.
#[derive(Debug, Clone)]
pub enum PairSelection {
    All,
    Listed(Vec<(usize, usize)>),
}

/// `max rho_lambda(P(x,.), P(x',.)) / d(x, x')` over the selected pairs.
pub fn kernel_lipschitz_constant(
    chain: &FiniteMarkovChain,
    lambda: f64,
    pairs: &PairSelection,
) -> Result<f64> {
    let n = chain.len();
    if n < 2 {
        return invalid("a Lipschitz constant needs at least two states");
    }
    let listed: Vec<(usize, usize)> = match pairs {
        PairSelection::All => (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect(),
        PairSelection::Listed(v) => v.clone(),
    };
    let mut worst = 0.0_f64;
    for (x, y) in listed {
        chain.check_state(x)?;
        chain.check_state(y)?;
        if x == y {
            continue;
        }
        let d = chain.space.dist(x, y);
        if d <= 0.0 {
            return invalid(format!("distinct states {x} and {y} are at distance zero"));
        }
        let rho = prohorov_distance(&chain.row(x)?, &chain.row(y)?, &chain.space, lambda)?.value;
        worst = worst.max(rho / d);
    }
    Ok(worst)
}

/// An ideal chain on `Omega` and a perturbed chain on a subspace of it.
#[derive(Debug, Clone)]
pub struct ChainPair {
    pub ideal: FiniteMarkovChain,
    pub perturbed: FiniteMarkovChain,
    /// `embedding[i]` is the ideal state that perturbed state `i` sits at.
    pub embedding: Vec<usize>,
}

impl ChainPair {
    pub fn new(
        ideal: FiniteMarkovChain,
        perturbed: FiniteMarkovChain,
        embedding: Vec<usize>,
    ) -> Result<Self> {
        if embedding.len() != perturbed.len() {
            return invalid("embedding must map every perturbed state");
        }
        let mut seen = vec![false; ideal.len()];
        for &e in &embedding {
            if e >= ideal.len() {
                return invalid(format!("embedding target {e} out of range"));
            }
            if std::mem::replace(&mut seen[e], true) {
                return invalid(format!("embedding is not injective at {e}"));
            }
        }
        let (hat, full) = (perturbed.space(), ideal.space());
        if hat.is_euclidean() && full.is_euclidean() {
            for (i, &e) in embedding.iter().enumerate() {
                if hat.points()[i].coords != full.points()[e].coords {
                    return invalid(format!("perturbed state {i} is not at the coordinates of {e}"));
                }
            }
        } else {
            for i in 0..embedding.len() {
                for j in 0..embedding.len() {
                    let (a, b) = (hat.dist(i, j), full.dist(embedding[i], embedding[j]));
                    if (a - b).abs() > 1e-12 * a.max(b).max(1.0) {
                        return invalid(format!("embedding distorts d({i},{j})"));
                    }
                }
            }
        }
        Ok(Self {
            ideal,
            perturbed,
            embedding,
        })
    }

    /// Both chains on the same space, perturbed state `i` identified with ideal state `i`.
    pub fn same_space(ideal: FiniteMarkovChain, perturbed: FiniteMarkovChain) -> Result<Self> {
        let embedding = (0..perturbed.len()).collect();
        Self::new(ideal, perturbed, embedding)
    }

    /// Pushes a law on the perturbed space onto the ideal space.
    pub fn embed(&self, mu: &[f64]) -> Result<Distribution> {
        let mut out = vec![0.0; self.ideal.len()];
        for (i, &m) in mu.iter().enumerate() {
            out[self.embedding[i]] += m;
        }
        Distribution::new(out)
    }

    /// `P-hat^t(x, .)` seen as a law on the ideal space.
    pub fn perturbed_t_step(&self, x: usize, t: usize) -> Result<Distribution> {
        let mu = t_step_distribution(&self.perturbed, x, t)?;
        self.embed(mu.weights())
    }
}

/// Samples of `D_i = d(X-hat_i, X_i)` from independent coupled runs.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceTrace {
    pub times: Vec<usize>,
    /// `distances[run][i]` is `D_i` on that run.
    pub distances: Vec<Vec<f64>>,
}

impl DivergenceTrace {
    pub fn runs(&self) -> usize {
        self.distances.len()
    }

    pub fn at(&self, time: usize) -> Vec<f64> {
        self.distances.iter().map(|r| r[time]).collect()
    }

    pub fn fraction_above(&self, time: usize, level: f64) -> f64 {
        let hits = self.distances.iter().filter(|r| r[time] > level).count();
        hits as f64 / self.runs() as f64
    }

    pub fn median(&self, time: usize) -> f64 {
        let mut v = self.at(time);
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    }
}

/// The RNG for one Monte Carlo run; independent of how runs are scheduled.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Cumulative cells of an optimal coupling in (perturbed state, ideal state) form.
type CouplingTable = Vec<(usize, usize, f64)>;

/// Runs the coupled process of the perturbed and ideal chains from `start`,
/// each step drawing the next pair from an optimal `rho_lambda` coupling of
/// `P-hat(x-hat, .)` and `P(x, .)`.
pub fn coupled_divergence_simulation(
    pair: &ChainPair,
    start: usize,
    steps: usize,
    runs: usize,
    lambda: f64,
    seed: u64,
) -> Result<DivergenceTrace> {
    pair.perturbed.check_state(start)?;
    if runs == 0 {
        return invalid("at least one run is required");
    }
    let mut back = HashMap::new();
    for (i, &e) in pair.embedding.iter().enumerate() {
        back.insert(e, i);
    }
    let mut cache: HashMap<(usize, usize), CouplingTable> = HashMap::new();
    let space = pair.ideal.space();
    let origin = pair.embedding[start];
    let mut distances = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = run_rng(seed, run as u64);
        let (mut hat, mut ideal) = (start, origin);
        let mut trace = Vec::with_capacity(steps + 1);
        trace.push(space.dist(pair.embedding[hat], ideal));
        for _ in 0..steps {
            if let Entry::Vacant(slot) = cache.entry((hat, ideal)) {
                let p = pair.embed(pair.perturbed.row(hat)?.weights())?;
                let q = pair.ideal.row(ideal)?;
                let w = prohorov_distance(&p, &q, space, lambda)?.witness_coupling;
                let mut acc = 0.0;
                let table: CouplingTable = w
                    .joint()
                    .iter()
                    .map(|c| {
                        acc += c.mass;
                        (back[&c.left], c.right, acc)
                    })
                    .collect();
                slot.insert(table);
            }
            let table = &cache[&(hat, ideal)];
            let total = table.last().map(|c| c.2).unwrap_or(1.0);
            let u = rng.random::<f64>() * total;
            let cell = table
                .iter()
                .find(|c| u < c.2)
                .or(table.last())
                .copied()
                .unwrap_or((hat, ideal, 1.0));
            hat = cell.0;
            ideal = cell.1;
            trace.push(space.dist(pair.embedding[hat], ideal));
        }
        distances.push(trace);
    }
    Ok(DivergenceTrace {
        times: (0..=steps).collect(),
        distances,
    })
}
