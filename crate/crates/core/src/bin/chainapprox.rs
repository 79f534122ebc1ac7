use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use chainapprox::ballwalk::{
    ballwalk_budgets, finite_precision_walk, perturbed_coupled_trial, BallWalkBudget, BallWalkConfig,
    ConvexBody, ErrorBudgetSample, Injection, PerturbedSamplerConfig, CORNER_NOTE,
};
use chainapprox::chain::{
    coupled_divergence_simulation, kernel_lipschitz_constant, run_rng, stationary_distribution,
    variation_threshold_time, ChainPair, FiniteMarkovChain, PairSelection, TAU1_THRESHOLD,
};
use chainapprox::counterexamples::{
    adjacent_pairs, convergent_anchors, verify_divergent_separation, verify_regime_tightness,
    ConvergentAnchors, Family, SeparationReport, TightnessReport,
};
use chainapprox::metric::{Distribution, FiniteMetricSpace, JointMass, Point};
use chainapprox::prohorov::{kyfan_value, prohorov_bruteforce, prohorov_distance, tv_distance};
use chainapprox::regime::{classify_regime, delta_budget, Regime, RegimeReport};
use chainapprox::report::{emit_report, render_report, Format, Record};
use chainapprox::{Error, Result};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "CHAINAPPROX_OUT_DIR";

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_HORIZON: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_NON_ERGODIC: u8 = 6;

#[derive(Parser)]
#[command(name = "chainapprox", version, about = "Prohorov distances and perturbation budgets for approximate Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parametric Prohorov distance between two laws on a finite metric space.
    Prohorov(ProhorovArgs),
    /// Total variation distance between two laws.
    Tv(PairArgs),
    /// Variation threshold time of a chain.
    Tau1(Tau1Args),
    /// Stationary distribution of an ergodic chain.
    Stationary(StationaryArgs),
    /// Lipschitz constant of a kernel in the parametric Prohorov metric.
    Lipschitz(LipschitzArgs),
    /// Horizon and admissible per-step error for given (lambda, C, epsilon, tau1).
    Regime(RegimeArgs),
    /// Builds and verifies one of the counterexample families.
    Counterexample(CounterexampleArgs),
    /// Coupled simulation of a perturbed and an ideal chain.
    DivergenceSim(DivergenceArgs),
    /// Exact and rounded lazy ball walks driven by the same proposals.
    Ballwalk(BallwalkArgs),
    /// Coupled exact/perturbed uniform-ball sampler trials.
    ErrorBudget(ErrorBudgetArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, default_value = "json")]
    format: Format,
    /// Output file; defaults to $CHAINAPPROX_OUT_DIR/<command>.<format>, or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// JSON file with `states`, optional `distances`, and laws `p`, `q`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ProhorovArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    lambda: f64,
    /// Also evaluate the subset-enumeration oracle (at most 20 points).
    #[arg(long)]
    bruteforce: bool,
}

#[derive(Args)]
struct ChainArgs {
    /// Chain JSON file (`states`, `kernel`).
    #[arg(long, conflicts_with = "family")]
    chain: Option<PathBuf>,
    /// Counterexample family to build instead of reading a file.
    #[arg(long, requires = "n")]
    family: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    /// Use the perturbed chain of the family.
    #[arg(long, requires = "family")]
    perturbed: bool,
}

#[derive(Args)]
struct Tau1Args {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 10_000)]
    t_max: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = TAU1_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct StationaryArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-12)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LipschitzArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    lambda: f64,
    /// `all` state pairs, or `adjacent` pairs of a family.
    #[arg(long, default_value = "all")]
    pairs: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RegimeArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long = "C", allow_negative_numbers = true)]
    c: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    tau1: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    n: usize,
    /// Horizon for the divergent separation check (needs t >= n).
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Directory to write the ideal and perturbed chains to as JSON.
    #[arg(long)]
    export_dir: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DivergenceArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Defaults to the family's lambda.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV with one row per (run, time) instead of per-time summaries.
    #[arg(long)]
    per_run: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long)]
    dimension: usize,
    #[arg(long, allow_negative_numbers = true)]
    radius: f64,
    /// `ball:R` or `box:lo,hi`.
    #[arg(long, default_value = "ball:1")]
    body: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    tau1_constant: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    delta_constant: f64,
}

#[derive(Args)]
struct BallwalkArgs {
    #[command(flatten)]
    walk: WalkArgs,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    precision_bits: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ErrorBudgetArgs {
    #[command(flatten)]
    walk: WalkArgs,
    /// Per-coordinate Gaussian error; defaults to delta / n.
    #[arg(long, allow_negative_numbers = true)]
    gaussian_error: Option<f64>,
    /// Uniform error; defaults to delta^2.
    #[arg(long, allow_negative_numbers = true)]
    uniform_error: Option<f64>,
    #[arg(long, default_value = "quantization")]
    injection: Injection,
    #[command(flatten)]
    output: OutputArgs,
}

fn default_path(command: &str, format: Format) -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(|d| Path::new(&d).join(format!("{command}.{format}")))
}

/// Writes the report to the chosen destination and prints a one-line summary.
fn deliver<T: Record>(records: &[T], output: &OutputArgs, command: &str, summary: &str) -> Result<()> {
    match output.out.clone().or_else(|| default_path(command, output.format)) {
        Some(path) => {
            emit_report(records, output.format, &path)?;
            println!("{summary} -> {}", path.display());
        }
        None => {
            print!("{}", render_report(records, output.format)?);
            eprintln!("{summary}");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct PairFile {
    states: Vec<Point>,
    #[serde(default)]
    distances: Option<Vec<Vec<f64>>>,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn load_pair(path: &Path) -> Result<(FiniteMetricSpace, Distribution, Distribution)> {
    let file: PairFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let space = match file.distances {
        Some(m) => FiniteMetricSpace::from_matrix(file.states, m)?,
        None => FiniteMetricSpace::from_points(file.states)?,
    };
    for (name, law) in [("p", &file.p), ("q", &file.q)] {
        if law.len() != space.len() {
            return Err(Error::InvalidArgument(format!(
                "{name} has {} weights but the space has {} points",
                law.len(),
                space.len()
            )));
        }
    }
    Ok((space, Distribution::new(file.p)?, Distribution::new(file.q)?))
}

fn load_chain(args: &ChainArgs) -> Result<FiniteMarkovChain> {
    match (&args.chain, args.family, args.n) {
        (Some(path), _, _) => FiniteMarkovChain::load_json(path),
        (None, Some(family), Some(n)) => {
            let pair = family.pair(n)?;
            Ok(if args.perturbed { pair.perturbed } else { pair.ideal })
        }
        _ => Err(Error::InvalidArgument("give either --chain or --family with --n".into())),
    }
}

#[derive(Serialize)]
struct ProhorovRow {
    lambda: f64,
    value: f64,
    critical_threshold: f64,
    tv: f64,
    kyfan_of_witness: f64,
    bruteforce: Option<f64>,
    witness: Vec<JointMass>,
}

impl Record for ProhorovRow {
    fn columns() -> &'static [&'static str] {
        &["lambda", "value", "critical_threshold", "tv", "kyfan_of_witness", "bruteforce"]
    }
}

fn cmd_prohorov(args: &ProhorovArgs) -> Result<()> {
    let (space, p, q) = load_pair(&args.pair.input)?;
    let result = prohorov_distance(&p, &q, &space, args.lambda)?;
    let bruteforce = if args.bruteforce {
        Some(prohorov_bruteforce(&p, &q, &space, args.lambda)?)
    } else {
        None
    };
    let row = ProhorovRow {
        lambda: args.lambda,
        value: result.value,
        critical_threshold: result.critical_threshold,
        tv: tv_distance(&p, &q)?,
        kyfan_of_witness: kyfan_value(&result.witness_coupling, &space, args.lambda)?,
        bruteforce,
        witness: result.witness_coupling.joint().to_vec(),
    };
    let summary = format!("rho_{} = {}", args.lambda, row.value);
    deliver(&[row], &args.pair.output, "prohorov", &summary)
}

#[derive(Serialize)]
struct TvRow {
    tv: f64,
}

impl Record for TvRow {
    fn columns() -> &'static [&'static str] {
        &["tv"]
    }
}

fn cmd_tv(args: &PairArgs) -> Result<()> {
    let (_, p, q) = load_pair(&args.input)?;
    let row = TvRow { tv: tv_distance(&p, &q)? };
    let summary = format!("tv = {}", row.tv);
    deliver(&[row], &args.output, "tv", &summary)
}

#[derive(Serialize)]
struct Tau1Row {
    states: usize,
    tau1: usize,
    threshold: f64,
    profile: Vec<f64>,
}

impl Record for Tau1Row {
    fn columns() -> &'static [&'static str] {
        &["states", "tau1", "threshold", "profile"]
    }
}

fn cmd_tau1(args: &Tau1Args) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let v = variation_threshold_time(&chain, args.t_max, args.threshold)?;
    let row = Tau1Row {
        states: chain.len(),
        tau1: v.tau1,
        threshold: v.threshold,
        profile: v.profile,
    };
    let summary = format!("tau1 = {} over {} states", row.tau1, row.states);
    deliver(&[row], &args.output, "tau1", &summary)
}

#[derive(Serialize)]
struct StationaryRow {
    state: usize,
    label: String,
    probability: f64,
}

impl Record for StationaryRow {
    fn columns() -> &'static [&'static str] {
        &["state", "label", "probability"]
    }
}

fn cmd_stationary(args: &StationaryArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let pi = stationary_distribution(&chain, args.tol)?;
    let next = chain.push_forward(pi.weights());
    let residual: f64 = next.iter().zip(pi.weights()).map(|(a, b)| (a - b).abs()).sum();
    let rows: Vec<StationaryRow> = pi
        .weights()
        .iter()
        .enumerate()
        .map(|(state, &probability)| StationaryRow {
            state,
            label: chain.space().points()[state].label.clone(),
            probability,
        })
        .collect();
    let summary = format!("stationary law over {} states, |pi P - pi|_1 = {residual:e}", rows.len());
    deliver(&rows, &args.output, "stationary", &summary)
}

#[derive(Serialize)]
struct LipschitzRow {
    lambda: f64,
    pairs: String,
    #[serde(rename = "C")]
    c: f64,
    regime: Regime,
}

impl Record for LipschitzRow {
    fn columns() -> &'static [&'static str] {
        &["lambda", "pairs", "C", "regime"]
    }
}

fn cmd_lipschitz(args: &LipschitzArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let selection = match args.pairs.as_str() {
        "all" => PairSelection::All,
        "adjacent" => match (args.chain.family, args.chain.n) {
            (Some(f), Some(n)) => PairSelection::Listed(adjacent_pairs(f, n)),
            _ => return Err(Error::InvalidArgument("--pairs adjacent needs --family and --n".into())),
        },
        other => return Err(Error::InvalidArgument(format!("--pairs must be all or adjacent, got {other:?}"))),
    };
    let c = kernel_lipschitz_constant(&chain, args.lambda, &selection)?;
    let row = LipschitzRow {
        lambda: args.lambda,
        pairs: args.pairs.clone(),
        c,
        regime: classify_regime(args.lambda, c)?,
    };
    let summary = format!("C = {} ({} regime at lambda = {})", row.c, row.regime, row.lambda);
    deliver(&[row], &args.output, "lipschitz", &summary)
}

fn cmd_regime(args: &RegimeArgs) -> Result<()> {
    let report: RegimeReport = delta_budget(args.lambda, args.c, args.epsilon, args.tau1)?;
    let summary = format!(
        "{} regime: t_epsilon = {}, delta = {:e} (log2 {:.4})",
        report.regime, report.t_epsilon, report.delta_budget, report.log2_delta_budget
    );
    deliver(&[report], &args.output, "regime", &summary)
}

#[derive(Serialize)]
struct CounterexampleReport {
    tightness: TightnessReport,
    separation: Option<SeparationReport>,
    anchors: Option<ConvergentAnchors>,
}

impl Record for CounterexampleReport {
    fn columns() -> &'static [&'static str] {
        &[
            "tightness.family",
            "tightness.n",
            "tightness.tau1",
            "tightness.delta_actual",
            "tightness.delta_budget",
            "tightness.gap",
            "tightness.epsilon",
        ]
    }
}

fn cmd_counterexample(args: &CounterexampleArgs) -> Result<()> {
    args.family.check_n(args.n)?;
    if let Some(dir) = &args.export_dir {
        let pair = args.family.pair(args.n)?;
        std::fs::create_dir_all(dir)?;
        pair.ideal.save_json(dir.join(format!("{}_{}_ideal.json", args.family, args.n)))?;
        pair.perturbed
            .save_json(dir.join(format!("{}_{}_perturbed.json", args.family, args.n)))?;
    }
    let tightness = verify_regime_tightness(args.family, args.n)?;
    let separation = match (args.family, args.t) {
        (Family::Divergent, Some(t)) => Some(verify_divergent_separation(args.n, t, args.start)?),
        (_, Some(_)) => return Err(Error::InvalidArgument("--t applies to the divergent family only".into())),
        _ => None,
    };
    let anchors = match args.family {
        Family::Convergent => Some(convergent_anchors(args.n)?),
        _ => None,
    };
    let mut summary = format!(
        "{} n={}: tau1 = {}, delta_actual = {:e}, budget = {:e}, gap = {}",
        tightness.family, tightness.n, tightness.tau1, tightness.delta_actual, tightness.delta_budget, tightness.gap
    );
    if let Some(s) = &separation {
        summary.push_str(&format!(", rho_1(P-hat^{}(x,.), pi) = {}", s.t, s.rho_to_stationary));
    }
    let report = CounterexampleReport {
        tightness,
        separation,
        anchors,
    };
    match args.output.format {
        Format::Csv => deliver(&[report.tightness], &args.output, "counterexample", &summary),
        Format::Json => deliver(&[report], &args.output, "counterexample", &summary),
    }
}

#[derive(Serialize)]
struct DivergenceRow {
    time: usize,
    mean: f64,
    median: f64,
    max: f64,
    fraction_positive: f64,
}

impl Record for DivergenceRow {
    fn columns() -> &'static [&'static str] {
        &["time", "mean", "median", "max", "fraction_positive"]
    }
}

#[derive(Serialize)]
struct DivergenceSample {
    run: usize,
    time: usize,
    distance: f64,
}

impl Record for DivergenceSample {
    fn columns() -> &'static [&'static str] {
        &["run", "time", "distance"]
    }
}

#[derive(Serialize)]
struct DivergenceSummary {
    family: Family,
    n: usize,
    steps: usize,
    runs: usize,
    lambda: f64,
    seed: u64,
    /// `max_x rho_lambda(P-hat(x,.), P(x,.))`.
    delta: f64,
    rows: Vec<DivergenceRow>,
}

impl Record for DivergenceSummary {
    fn columns() -> &'static [&'static str] {
        &["family", "n", "steps", "runs", "lambda", "seed", "delta"]
    }
}

fn max_row_distance(pair: &ChainPair, lambda: f64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for x in 0..pair.perturbed.len() {
        let hat = pair.embed(pair.perturbed.row(x)?.weights())?;
        let ideal = pair.ideal.row(pair.embedding[x])?;
        worst = worst.max(prohorov_distance(&hat, &ideal, pair.ideal.space(), lambda)?.value);
    }
    Ok(worst)
}

fn cmd_divergence(args: &DivergenceArgs) -> Result<()> {
    let pair = args.family.pair(args.n)?;
    let lambda = args.lambda.unwrap_or(args.family.lambda());
    let trace = coupled_divergence_simulation(&pair, args.start, args.steps, args.runs, lambda, args.seed)?;
    let rows: Vec<DivergenceRow> = trace
        .times
        .iter()
        .map(|&time| {
            let samples = trace.at(time);
            DivergenceRow {
                time,
                mean: samples.iter().sum::<f64>() / samples.len() as f64,
                median: trace.median(time),
                max: samples.iter().copied().fold(0.0, f64::max),
                fraction_positive: trace.fraction_above(time, 0.0),
            }
        })
        .collect();
    let last = rows.last().map(|r| (r.median, r.fraction_positive)).unwrap_or_default();
    let summary = format!(
        "{} runs x {} steps: final median D = {}, Pr[D > 0] = {}",
        args.runs, args.steps, last.0, last.1
    );
    if args.per_run && args.output.format == Format::Csv {
        let samples: Vec<DivergenceSample> = trace
            .distances
            .iter()
            .enumerate()
            .flat_map(|(run, path)| {
                path.iter()
                    .enumerate()
                    .map(move |(time, &distance)| DivergenceSample { run, time, distance })
            })
            .collect();
        return deliver(&samples, &args.output, "divergence-sim", &summary);
    }
    match args.output.format {
        Format::Csv => deliver(&rows, &args.output, "divergence-sim", &summary),
        Format::Json => {
            let report = DivergenceSummary {
                family: args.family,
                n: args.n,
                steps: args.steps,
                runs: args.runs,
                lambda,
                seed: args.seed,
                delta: max_row_distance(&pair, lambda)?,
                rows,
            };
            deliver(&[report], &args.output, "divergence-sim", &summary)
        }
    }
}

fn walk_setup(walk: &WalkArgs, precision_bits: Option<u32>) -> Result<(BallWalkConfig, Option<BallWalkBudget>, Vec<String>)> {
    let body = ConvexBody::parse(&walk.body, walk.dimension)?;
    let mut notes = Vec::new();
    if body.has_corners() {
        notes.push(CORNER_NOTE.to_string());
    }
    let diameter = body.diameter();
    let budget = if diameter > walk.radius {
        Some(ballwalk_budgets(
            walk.dimension,
            walk.radius,
            diameter,
            walk.epsilon,
            walk.tau1_constant,
            walk.delta_constant,
        )?)
    } else {
        notes.push("step radius is at least the diameter; no budget estimate".to_string());
        None
    };
    if walk.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    Ok((BallWalkConfig::new(body, walk.radius, precision_bits)?, budget, notes))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[derive(Serialize)]
struct WalkRow {
    step: usize,
    median_distance: f64,
    max_distance: f64,
    median_rounding: f64,
}

impl Record for WalkRow {
    fn columns() -> &'static [&'static str] {
        &["step", "median_distance", "max_distance", "median_rounding"]
    }
}

#[derive(Serialize)]
struct WalkSummary {
    dimension: usize,
    radius: f64,
    body: ConvexBody,
    steps: usize,
    trials: usize,
    seed: u64,
    precision_bits: u32,
    acceptance_rate: f64,
    budget: Option<BallWalkBudget>,
    notes: Vec<String>,
    rows: Vec<WalkRow>,
}

impl Record for WalkSummary {
    fn columns() -> &'static [&'static str] {
        &["dimension", "radius", "steps", "trials", "seed", "precision_bits", "acceptance_rate"]
    }
}

fn cmd_ballwalk(args: &BallwalkArgs) -> Result<()> {
    let walk = &args.walk;
    let (cfg, budget, notes) = walk_setup(walk, Some(args.precision_bits))?;
    let start = cfg.body.center();
    let mut traces = Vec::with_capacity(walk.trials);
    for trial in 0..walk.trials {
        let mut rng = run_rng(walk.seed, trial as u64);
        traces.push(finite_precision_walk(&cfg, &start, args.steps, &mut rng)?);
    }
    let rows: Vec<WalkRow> = (0..=args.steps)
        .map(|step| {
            let d: Vec<f64> = traces.iter().map(|t| t.distances[step]).collect();
            let rounding = if step == 0 {
                0.0
            } else {
                median(traces.iter().map(|t| t.rounding[step - 1]).collect())
            };
            WalkRow {
                step,
                max_distance: d.iter().copied().fold(0.0, f64::max),
                median_distance: median(d),
                median_rounding: rounding,
            }
        })
        .collect();
    let accepted: usize = traces.iter().map(|t| t.accepted).sum();
    let acceptance_rate = accepted as f64 / (walk.trials * args.steps).max(1) as f64;
    let summary = format!(
        "{} trials x {} steps at {} bits: final median distance {:e}, acceptance {:.4}",
        walk.trials,
        args.steps,
        args.precision_bits,
        rows.last().map(|r| r.median_distance).unwrap_or(0.0),
        acceptance_rate
    );
    match args.output.format {
        Format::Csv => deliver(&rows, &args.output, "ballwalk", &summary),
        Format::Json => {
            let report = WalkSummary {
                dimension: walk.dimension,
                radius: walk.radius,
                body: cfg.body.clone(),
                steps: args.steps,
                trials: walk.trials,
                seed: walk.seed,
                precision_bits: args.precision_bits,
                acceptance_rate,
                budget,
                notes,
                rows,
            };
            deliver(&[report], &args.output, "ballwalk", &summary)
        }
    }
}

#[derive(Serialize)]
struct ErrorBudgetSummary {
    dimension: usize,
    radius: f64,
    body: ConvexBody,
    trials: usize,
    seed: u64,
    sampler: PerturbedSamplerConfig,
    delta: f64,
    eta: f64,
    void_mismatch_rate: f64,
    u_near_zero_rate: f64,
    rejection_mismatch_rate: f64,
    eta_shell_rate: f64,
    /// Trials where any of the discrete failure events occurred.
    failure_rate: f64,
    median_s_error: f64,
    max_y_error_without_failure: f64,
    budget: Option<BallWalkBudget>,
    notes: Vec<String>,
}

impl Record for ErrorBudgetSummary {
    fn columns() -> &'static [&'static str] {
        &[
            "dimension",
            "radius",
            "trials",
            "seed",
            "delta",
            "eta",
            "void_mismatch_rate",
            "u_near_zero_rate",
            "rejection_mismatch_rate",
            "eta_shell_rate",
            "failure_rate",
            "median_s_error",
            "max_y_error_without_failure",
        ]
    }
}

fn cmd_error_budget(args: &ErrorBudgetArgs) -> Result<()> {
    let walk = &args.walk;
    let (cfg, budget, notes) = walk_setup(walk, None)?;
    let n = walk.dimension;
    let target = budget.as_ref().map(|b| b.delta_estimate);
    let pick = |given: Option<f64>, derived: Option<f64>, name: &str| -> Result<f64> {
        given
            .or(derived)
            .ok_or_else(|| Error::InvalidArgument(format!("--{name} is required when no budget estimate exists")))
    };
    let gaussian = pick(args.gaussian_error, target.map(|d| d / n as f64), "gaussian-error")?;
    let uniform = pick(args.uniform_error, target.map(|d| d * d), "uniform-error")?;
    let pcfg = PerturbedSamplerConfig::new(gaussian, uniform, args.injection)?;
    let start = cfg.body.center();
    let mut samples: Vec<ErrorBudgetSample> = Vec::with_capacity(walk.trials);
    for trial in 0..walk.trials {
        let mut rng = run_rng(walk.seed, trial as u64);
        samples.push(perturbed_coupled_trial(&cfg, &pcfg, &start, &mut rng)?);
    }
    let rate = |f: fn(&ErrorBudgetSample) -> bool| samples.iter().filter(|s| f(s)).count() as f64 / samples.len() as f64;
    let failed = |s: &ErrorBudgetSample| s.void_mismatch || s.u_near_zero || s.rejection_mismatch;
    let delta = pcfg.delta(n);
    let report = ErrorBudgetSummary {
        dimension: n,
        radius: walk.radius,
        body: cfg.body.clone(),
        trials: walk.trials,
        seed: walk.seed,
        delta,
        eta: walk.radius * delta / n as f64,
        void_mismatch_rate: rate(|s| s.void_mismatch),
        u_near_zero_rate: rate(|s| s.u_near_zero),
        rejection_mismatch_rate: rate(|s| s.rejection_mismatch),
        eta_shell_rate: rate(|s| s.in_eta_shell),
        failure_rate: rate(|s| s.void_mismatch || s.u_near_zero || s.rejection_mismatch),
        median_s_error: median(samples.iter().map(|s| s.s_error).collect()),
        max_y_error_without_failure: samples
            .iter()
            .filter(|s| !failed(s))
            .map(|s| s.y_error)
            .fold(0.0, f64::max),
        sampler: pcfg,
        budget,
        notes,
    };
    let summary = format!(
        "{} trials, delta = {:e}: failure rate {}, median |S - S-hat| = {:e}",
        walk.trials, report.delta, report.failure_rate, report.median_s_error
    );
    match args.output.format {
        Format::Csv => deliver(&samples, &args.output, "error-budget", &summary),
        Format::Json => deliver(&[report], &args.output, "error-budget", &summary),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prohorov(a) => cmd_prohorov(a),
        Command::Tv(a) => cmd_tv(a),
        Command::Tau1(a) => cmd_tau1(a),
        Command::Stationary(a) => cmd_stationary(a),
        Command::Lipschitz(a) => cmd_lipschitz(a),
        Command::Regime(a) => cmd_regime(a),
        Command::Counterexample(a) => cmd_counterexample(a),
        Command::DivergenceSim(a) => cmd_divergence(a),
        Command::Ballwalk(a) => cmd_ballwalk(a),
        Command::ErrorBudget(a) => cmd_error_budget(a),
    }
}

fn error_object(err: &Error) -> (u8, serde_json::Value) {
    let (code, kind) = match err {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::NotAMetric(_)
        | Error::NotStochastic { .. }
        | Error::SpaceTooLarge { .. } => (EXIT_INVALID, "invalid_parameters"),
        Error::HorizonExceeded { .. } => (EXIT_HORIZON, "horizon_exceeded"),
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => (EXIT_IO, "io"),
        Error::NonErgodic(_) => (EXIT_NON_ERGODIC, "non_ergodic"),
        Error::RestartLimit(_) => (EXIT_OTHER, "restart_limit"),
    };
    let mut obj = json!({ "error": kind, "message": err.to_string(), "exit_code": code });
    if let Error::HorizonExceeded { t_max, last, profile } = err {
        obj["t_max"] = json!(t_max);
        obj["last"] = json!(last);
        obj["profile"] = json!(profile);
    }
    (code, obj)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let obj = json!({ "error": "usage", "message": e.to_string().trim_end(), "exit_code": EXIT_USAGE });
            eprintln!("{obj}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, obj) = error_object(&err);
            eprintln!("{obj}");
            ExitCode::from(code)
        }
    }
}
