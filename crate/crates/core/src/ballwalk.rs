//! The lazy ball walk on a ball or an axis-aligned box: the four-step
//! uniform-ball sampler, the reflection coupling, and experiments injecting
//! sampling and rounding errors into the walk.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::regime::{delta_budget, RegimeReport};

/// Void restarts allowed in one call to [`sample_ball_uniform`].
pub const MAX_VOID_RESTARTS: usize = 64;

/// Label attached to every budget estimate.
pub const CONSTANTS_NOTE: &str =
    "tau1 and delta are order-of-magnitude estimates, up to unspecified constants supplied by the caller";

/// Caveat attached when the body has corners.
pub const CORNER_NOTE: &str =
    "box bodies have sharp corners; the mixing-time estimate assumes a body without them";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConvexBody {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ConvexBody {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return invalid("ball needs dimension >= 1");
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return invalid(format!("ball radius must be positive, got {radius}"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return invalid("ball center must be finite");
        }
        Ok(ConvexBody::Ball { center, radius })
    }

    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return invalid("box corners must share a dimension >= 1");
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return invalid(format!("box needs lo < hi in every coordinate (axis {k})"));
            }
        }
        Ok(ConvexBody::Box { lo, hi })
    }

    /// Parses `ball:R` (centred at the origin) or `box:lo,hi` (the cube
    /// `[lo, hi]^n`).
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("dimension must be >= 1");
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in body {spec:?}")))
        };
        if let Some(rest) = spec.strip_prefix("ball:") {
            Self::ball(vec![0.0; n], num(rest)?)
        } else if let Some(rest) = spec.strip_prefix("box:") {
            let Some((lo, hi)) = rest.split_once(',') else {
                return invalid(format!("box body must be box:lo,hi, got {spec:?}"));
            };
            Self::cuboid(vec![num(lo)?; n], vec![num(hi)?; n])
        } else {
            invalid(format!("body must be ball:R or box:lo,hi, got {spec:?}"))
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Box { lo, .. } => lo.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => 2.0 * radius,
            ConvexBody::Box { lo, hi } => norm_diff(lo, hi),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            ConvexBody::Ball { center, .. } => center.clone(),
            ConvexBody::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    /// Closed membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConvexBody::Ball { center, radius } => {
                let s: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                s <= radius * radius
            }
            ConvexBody::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
            }
        }
    }

    pub fn has_corners(&self) -> bool {
        matches!(self, ConvexBody::Box { .. })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.dimension(),
                found: x.len(),
            });
        }
        if !self.contains(x) {
            return invalid("state lies outside the body");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallWalkConfig {
    pub body: ConvexBody,
    /// Step radius.
    pub r: f64,
    /// Binary digits after the point kept by the shadow walk.
    pub precision_bits: Option<u32>,
}

impl BallWalkConfig {
    pub fn new(body: ConvexBody, r: f64, precision_bits: Option<u32>) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return invalid(format!("step radius must be positive, got {r}"));
        }
        if let Some(b) = precision_bits {
            if !(4..=1000).contains(&b) {
                return invalid(format!("precision_bits must lie in [4, 1000], got {b}"));
            }
        }
        Ok(Self {
            body,
            r,
            precision_bits,
        })
    }

    pub fn dimension(&self) -> usize {
        self.body.dimension()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    /// Every Gaussian is shifted up by the error, `U` by the uniform error
    /// (clamped to 1).
    DeterministicShift,
    /// Samples are rounded to a grid whose pitch is twice the error.
    Quantization,
}

impl std::str::FromStr for Injection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic-shift" | "shift" => Ok(Injection::DeterministicShift),
            "quantization" | "quantize" => Ok(Injection::Quantization),
            other => invalid(format!("unknown injection mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedSamplerConfig {
    pub gaussian_prohorov_error: f64,
    pub uniform_prohorov_error: f64,
    pub injection: Injection,
}

impl PerturbedSamplerConfig {
    pub fn new(gaussian: f64, uniform: f64, injection: Injection) -> Result<Self> {
        for (name, v) in [("gaussian error", gaussian), ("uniform error", uniform)] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(Self {
            gaussian_prohorov_error: gaussian,
            uniform_prohorov_error: uniform,
            injection,
        })
    }

    /// Tolerated deviation implied by the two sampler errors, which are
    /// `delta / n` and `delta^2` respectively.
    pub fn delta(&self, n: usize) -> f64 {
        (n as f64 * self.gaussian_prohorov_error).max(self.uniform_prohorov_error.sqrt())
    }

    fn perturb_gaussian(&self, phi: f64) -> f64 {
        let e = self.gaussian_prohorov_error;
        if e == 0.0 {
            return phi;
        }
        match self.injection {
            Injection::DeterministicShift => phi + e,
            Injection::Quantization => (phi / (2.0 * e)).round() * (2.0 * e),
        }
    }

    fn perturb_uniform(&self, u: f64) -> f64 {
        let e = self.uniform_prohorov_error;
        if e == 0.0 {
            return u;
        }
        match self.injection {
            Injection::DeterministicShift => (u + e).min(1.0),
            Injection::Quantization => ((u / (2.0 * e)).round() * (2.0 * e)).clamp(0.0, 1.0),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn void_radius(n: usize) -> f64 {
    0.5 * (n as f64).sqrt()
}

fn gaussians<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A uniform point of the closed ball `B_n(0, r)` by the four-step trial:
/// Gaussian direction, void below `sqrt(n)/2`, normalise, scale by `U^(1/n)`.
pub fn sample_ball_uniform<R: Rng + ?Sized>(n: usize, r: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("dimension must be >= 1");
    }
    if !(r > 0.0) || !r.is_finite() {
        return invalid(format!("radius must be positive, got {r}"));
    }
    for _ in 0..=MAX_VOID_RESTARTS {
        let phi = gaussians(n, rng);
        let big_r = norm(&phi);
        if big_r < void_radius(n) {
            continue;
        }
        let u: f64 = rng.random();
        let scale = r * u.powf(1.0 / n as f64) / big_r;
        return Ok(phi.into_iter().map(|p| p * scale).collect());
    }
    Err(Error::RestartLimit(MAX_VOID_RESTARTS))
}

/// One lazy step: propose uniformly in `B(x, r)`, stay put if outside the body.
pub fn ball_walk_step<R: Rng + ?Sized>(cfg: &BallWalkConfig, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    cfg.body.check_point(x)?;
    let w = sample_ball_uniform(x.len(), cfg.r, rng)?;
    let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + b).collect();
    Ok(if cfg.body.contains(&y) { y } else { x.to_vec() })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledStep {
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    /// The two proposals differ, i.e. the shared proposal missed `B(x', r)`.
    pub proposals_differ: bool,
}

/// Reflection of `y` in the hyperplane bisecting `x` and `x'`.
pub fn reflect(y: &[f64], x: &[f64], x_prime: &[f64]) -> Vec<f64> {
    let d = norm_diff(x, x_prime);
    if d == 0.0 {
        return y.to_vec();
    }
    let proj: f64 = (0..y.len())
        .map(|k| (y[k] - 0.5 * (x[k] + x_prime[k])) * (x[k] - x_prime[k]) / d)
        .sum();
    (0..y.len()).map(|k| y[k] - 2.0 * proj * (x[k] - x_prime[k]) / d).collect()
}

/// Coupled steps from `x` and `x'`: a shared proposal, reflected across the
/// bisecting hyperplane when it falls outside `B(x', r)`.
pub fn reflection_coupled_step<R: Rng + ?Sized>(
    cfg: &BallWalkConfig,
    x: &[f64],
    x_prime: &[f64],
    rng: &mut R,
) -> Result<CoupledStep> {
    cfg.body.check_point(x)?;
    cfg.body.check_point(x_prime)?;
    let w = sample_ball_uniform(x.len(), cfg.r, rng)?;
    let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + b).collect();
    let inside_partner = norm_diff(&y, x_prime) <= cfg.r;
    let y_prop = if inside_partner { y.clone() } else { reflect(&y, x, x_prime) };
    let accept = |p: Vec<f64>, home: &[f64]| if cfg.body.contains(&p) { p } else { home.to_vec() };
    Ok(CoupledStep {
        y: accept(y, x),
        y_prime: accept(y_prop, x_prime),
        proposals_differ: !inside_partner,
    })
}

/// `ln v_n(r)`, the log-volume of the `n`-ball of radius `r` (`v_0 = 1`).
pub fn ln_ball_volume(n: usize, r: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let h = 0.5 * n as f64;
    h * std::f64::consts::PI.ln() + n as f64 * r.ln() - ln_gamma(h + 1.0)
}

pub fn ball_volume(n: usize, r: f64) -> f64 {
    ln_ball_volume(n, r).exp()
}

/// `v_{n-1}(r) / v_n(r)`, the Lipschitz constant of the ball-walk kernel
/// obtained from the reflection coupling.
pub fn lipschitz_bound(n: usize, r: f64) -> Result<f64> {
    if n == 0 || !(r > 0.0) || !r.is_finite() {
        return invalid(format!("lipschitz_bound needs n >= 1 and r > 0, got n = {n}, r = {r}"));
    }
    if n == 1 {
        return Ok(0.5 / r);
    }
    Ok((ln_ball_volume(n - 1, r) - ln_ball_volume(n, r)).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct BallWalkBudget {
    pub n: usize,
    pub r: f64,
    pub diameter: f64,
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub lambda: f64,
    pub lambda_c: f64,
    pub tau1_constant: f64,
    pub delta_constant: f64,
    pub tau1_estimate: f64,
    pub delta_estimate: f64,
    /// Calculator budget for `(lambda, C, epsilon, ceil(tau1_estimate))`.
    pub regime: RegimeReport,
    pub note: String,
}

/// `(lambda, C)` with `lambda * C` evaluating to exactly 1/2: `C` is raised
/// by at most a few ulps (keeping it an upper bound) until some `lambda`
/// near `1/(2C)` hits 1/2 exactly.
fn half_inverse(c: f64) -> (f64, f64) {
    let mut c = c;
    for _ in 0..64 {
        let base = 0.5 / c;
        for lambda in [base, base.next_down(), base.next_up()] {
            if lambda * c == 0.5 {
                return (lambda, c);
            }
        }
        c = c.next_up();
    }
    (0.5 / c, c)
}

pub fn ballwalk_budgets(
    n: usize,
    r: f64,
    diameter: f64,
    epsilon: f64,
    tau1_constant: f64,
    delta_constant: f64,
) -> Result<BallWalkBudget> {
    if !(diameter > r) || !diameter.is_finite() {
        return invalid(format!("diameter must exceed the step radius (D = {diameter}, r = {r})"));
    }
    for (name, v) in [("tau1 constant", tau1_constant), ("delta constant", delta_constant)] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    let (lambda, c) = half_inverse(lipschitz_bound(n, r)?);
    let nf = n as f64;
    let core = diameter * diameter * nf * nf * (diameter / r).ln() / (r * r);
    let tau1_estimate = tau1_constant * core;
    let delta_estimate = delta_constant * epsilon / core;
    let tau1 = tau1_estimate.ceil().max(1.0);
    if tau1 > u64::MAX as f64 {
        return invalid("tau1 estimate overflows");
    }
    let regime = delta_budget(lambda, c, epsilon, tau1 as u64)?;
    Ok(BallWalkBudget {
        n,
        r,
        diameter,
        epsilon,
        c,
        lambda,
        lambda_c: lambda * c,
        tau1_constant,
        delta_constant,
        tau1_estimate,
        delta_estimate,
        regime,
        note: CONSTANTS_NOTE.to_string(),
    })
}

/// Divergences between the exact and the perturbed sampler in one coupled trial.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ErrorBudgetSample {
    pub phi_error: f64,
    pub s_error: f64,
    pub w_error: f64,
    pub y_error: f64,
    /// Exactly one of the two trials was declared void on some attempt.
    pub void_mismatch: bool,
    /// `U-hat < delta`: the coupling gives up on this trial.
    pub u_near_zero: bool,
    /// Exactly one of the two proposals was rejected.
    pub rejection_mismatch: bool,
    /// The proposal `W` lies within `eta = r delta / n` of the body boundary
    /// shell, i.e. in `K^eta \ K` or its inner counterpart.
    pub in_eta_shell: bool,
    pub attempts: usize,
}

/// Signed distance-like test for the shell `K^eta \ K`, used only for
/// accounting; exact for balls and boxes.
fn outside_distance(body: &ConvexBody, y: &[f64]) -> f64 {
    match body {
        ConvexBody::Ball { center, radius } => norm_diff(y, center) - radius,
        ConvexBody::Box { lo, hi } => {
            let out: f64 = y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| {
                    let e = (a - v).max(v - b).max(0.0);
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            if out > 0.0 {
                out
            } else {
                -y.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (a, b))| (v - a).min(b - v))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// One coupled run of the exact and perturbed samplers from `x`, both driven
/// by the same underlying draws, followed by the rejection rule.
pub fn perturbed_coupled_trial<R: Rng + ?Sized>(
    cfg: &BallWalkConfig,
    pcfg: &PerturbedSamplerConfig,
    x: &[f64],
    rng: &mut R,
) -> Result<ErrorBudgetSample> {
    cfg.body.check_point(x)?;
    let n = x.len();
    let nf = n as f64;
    let delta = pcfg.delta(n);
    let eta = cfg.r * delta / nf;
    let mut out = ErrorBudgetSample::default();
    for attempt in 1..=MAX_VOID_RESTARTS + 1 {
        let phi = gaussians(n, rng);
        let phi_hat: Vec<f64> = phi.iter().map(|&p| pcfg.perturb_gaussian(p)).collect();
        let (big_r, big_r_hat) = (norm(&phi), norm(&phi_hat));
        let (void, void_hat) = (big_r < void_radius(n), big_r_hat < void_radius(n));
        if void != void_hat {
            out.void_mismatch = true;
        }
        if void || void_hat {
            continue;
        }
        let u: f64 = rng.random();
        let u_hat = pcfg.perturb_uniform(u);
        let s: Vec<f64> = phi.iter().map(|p| cfg.r * p / big_r).collect();
        let s_hat: Vec<f64> = phi_hat.iter().map(|p| cfg.r * p / big_r_hat).collect();
        let (a, a_hat) = (u.powf(1.0 / nf), u_hat.powf(1.0 / nf));
        let w: Vec<f64> = s.iter().map(|v| a * v).collect();
        let w_hat: Vec<f64> = s_hat.iter().map(|v| a_hat * v).collect();
        let y_prop: Vec<f64> = x.iter().zip(&w).map(|(p, q)| p + q).collect();
        let y_prop_hat: Vec<f64> = x.iter().zip(&w_hat).map(|(p, q)| p + q).collect();
        let (acc, acc_hat) = (cfg.body.contains(&y_prop), cfg.body.contains(&y_prop_hat));
        let y = if acc { y_prop.clone() } else { x.to_vec() };
        let y_hat = if acc_hat { y_prop_hat } else { x.to_vec() };
        out.phi_error = norm_diff(&phi, &phi_hat);
        out.s_error = norm_diff(&s, &s_hat);
        out.w_error = norm_diff(&w, &w_hat);
        out.y_error = norm_diff(&y, &y_hat);
        out.u_near_zero = u_hat < delta;
        out.rejection_mismatch = acc != acc_hat;
        out.in_eta_shell = eta > 0.0 && outside_distance(&cfg.body, &y_prop).abs() <= eta;
        out.attempts = attempt;
        return Ok(out);
    }
    Err(Error::RestartLimit(MAX_VOID_RESTARTS))
}

/// Rounds every coordinate to the grid `2^-bits`.
pub fn round_to_bits(x: &[f64], bits: u32) -> Vec<f64> {
    let scale = 2f64.powi(bits as i32);
    x.iter().map(|v| (v * scale).round() / scale).collect()
}

/// Trajectories of the exact walk and its rounded shadow.
#[derive(Debug, Clone, Serialize)]
pub struct FinitePrecisionTrace {
    /// `distances[i] = |X_i - X-hat_i|`, `i = 0..=t`.
    pub distances: Vec<f64>,
    /// Size of the rounding applied to the shadow at each step `1..=t`.
    pub rounding: Vec<f64>,
    /// Accepted proposals of the exact walk.
    pub accepted: usize,
}

/// Runs the exact walk and a shadow walk rounded to `precision_bits` after
/// every step, both driven by the same proposals.
pub fn finite_precision_walk<R: Rng + ?Sized>(
    cfg: &BallWalkConfig,
    x: &[f64],
    t: usize,
    rng: &mut R,
) -> Result<FinitePrecisionTrace> {
    let Some(bits) = cfg.precision_bits else {
        return invalid("finite_precision_walk needs precision_bits");
    };
    cfg.body.check_point(x)?;
    let mut exact = x.to_vec();
    let mut shadow = round_to_bits(x, bits);
    if !cfg.body.contains(&shadow) {
        shadow = exact.clone();
    }
    let mut distances = Vec::with_capacity(t + 1);
    let mut rounding = Vec::with_capacity(t);
    let mut accepted = 0;
    distances.push(norm_diff(&exact, &shadow));
    for _ in 0..t {
        let w = sample_ball_uniform(x.len(), cfg.r, rng)?;
        let y: Vec<f64> = exact.iter().zip(&w).map(|(a, b)| a + b).collect();
        if cfg.body.contains(&y) {
            exact = y;
            accepted += 1;
        }
        let raw: Vec<f64> = shadow.iter().zip(&w).map(|(a, b)| a + b).collect();
        let rounded = round_to_bits(&raw, bits);
        rounding.push(norm_diff(&raw, &rounded));
        if cfg.body.contains(&rounded) {
            shadow = rounded;
        }
        distances.push(norm_diff(&exact, &shadow));
    }
    Ok(FinitePrecisionTrace {
        distances,
        rounding,
        accepted,
    })
}
