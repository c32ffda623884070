//! Experiment runner: flat `key=value` configs, CSV/SVG output, figure
//! reproduction, rate classification, oracle verification and the property
//! suite. The binary in `main.rs` is a thin argument parser over this module.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::analysis::{
    d_angle, d_l2, deviation_report_states, faithfulness_checks, fit_rate, fit_rate_excess, good_region_grid,
    gradient_lemma_checks, grid, identity_checks, map_lemma_checks, map_property_scan, Check, DeviationReport,
    FitMode, RateFit,
};
use crate::error::{Error, Result};
use crate::iterates::{run_trajectory, AlgorithmKind, AlgorithmSpec, TrajectoryRecord};
use crate::models::{
    directional_init, norm_matched_init, random_sphere_init, sample_batch, state_init, GroundTruth, ModelKind,
    ModelSpec,
};
use crate::oracle::{gordon_from_oracle, verify_assumptions, OmegaSpec, Order};
use crate::rng::{stream, Purpose};
use crate::state_evolution::{
    closed_form_moments, gordon_expanded_fo, gordon_expanded_ho, iterate_se, population, SeOperator, StatePoint,
};

/// Full-precision scientific notation used in every output file.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

// ---------------------------------------------------------------------------
// Config.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Directional { alpha0: f64 },
    State { alpha: f64, beta: f64 },
    Sphere { scale: f64 },
    NormMatched,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L2,
    Angle,
}

impl Metric {
    pub fn eval(self, s: StatePoint) -> f64 {
        match self {
            Metric::L2 => d_l2(s),
            Metric::Angle => d_angle(s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "d_l2",
            Metric::Angle => "d_angle",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "d_l2" | "l2" => Ok(Metric::L2),
            "d_angle" | "angle" => Ok(Metric::Angle),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    Raw,
    Excess,
    /// Raw, falling back to excess when too few pre-floor points remain.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub alg: AlgorithmSpec,
    pub init: InitScheme,
    pub iterations: usize,
    pub trials: usize,
    pub gordon: bool,
    pub population: bool,
    pub oracle_samples: usize,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_svg: bool,
    pub oracle_states: usize,
    pub oracle_sigmas: Vec<f64>,
    pub oracle_kappa: f64,
    pub classify_metric: Metric,
    pub classify_start: StatePoint,
    pub classify_iterations: usize,
    pub classify_mode: RateMode,
}

const KEYS: &[&str] = &[
    "model.kind",
    "model.sigma",
    "model.d",
    "model.n",
    "algorithm.kind",
    "algorithm.eta",
    "init.scheme",
    "init.alpha0",
    "init.beta0",
    "init.scale",
    "run.T",
    "run.trials",
    "run.seed",
    "predict.gordon",
    "predict.population",
    "predict.oracle_samples",
    "output.directory",
    "output.formats",
    "oracle.states",
    "oracle.sigmas",
    "oracle.kappa",
    "classify.metric",
    "classify.alpha0",
    "classify.beta0",
    "classify.iterations",
    "classify.mode",
];

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match m.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| Error::Config(format!("cannot parse `{key}` = `{v}`"))),
    }
}

fn get_bool(m: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool> {
    match m.get(key).map(|s| s.to_ascii_lowercase()) {
        None => Ok(default),
        Some(v) if v == "true" || v == "1" || v == "yes" => Ok(true),
        Some(v) if v == "false" || v == "0" || v == "no" => Ok(false),
        Some(v) => Err(Error::Config(format!("cannot parse `{key}` = `{v}` as bool"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let m = parse_kv(text)?;
        let kind = ModelKind::parse(m.get("model.kind").map_or("phase_retrieval", String::as_str))?;
        let model = ModelSpec::new(
            kind,
            get(&m, "model.sigma", 0.0)?,
            get(&m, "model.d", 100usize)?,
            get(&m, "model.n", 2000usize)?,
            get(&m, "run.seed", 0u64)?,
        )?;
        let default_alg = match kind {
            ModelKind::PhaseRetrieval => "am_pr",
            ModelKind::MixtureOfRegressions => "am_mlr",
        };
        let alg_kind = AlgorithmKind::parse(m.get("algorithm.kind").map_or(default_alg, String::as_str))?;
        let eta = match m.get("algorithm.eta") {
            None => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Config(format!("cannot parse algorithm.eta `{v}`")))?),
        };
        let alg = AlgorithmSpec::new(alg_kind, eta)?;
        if alg.kind.model() != kind {
            return Err(Error::Config(format!("algorithm {} does not apply to model {}", alg_kind.name(), kind.name())));
        }
        let init = match m.get("init.scheme").map_or("directional", String::as_str) {
            "directional" => {
                let alpha0 = get(&m, "init.alpha0", 0.5)?;
                if !(0.0..=1.0).contains(&alpha0) {
                    return Err(Error::Config(format!("init.alpha0 must lie in [0, 1], got {alpha0}")));
                }
                InitScheme::Directional { alpha0 }
            }
            "state" => {
                let alpha = get(&m, "init.alpha0", 0.9)?;
                let beta = get(&m, "init.beta0", 0.1)?;
                StatePoint::new(alpha, beta)?;
                InitScheme::State { alpha, beta }
            }
            "sphere" => {
                let scale = get(&m, "init.scale", 1.0)?;
                if !(scale > 0.0) {
                    return Err(Error::Config(format!("init.scale must be positive, got {scale}")));
                }
                InitScheme::Sphere { scale }
            }
            "norm_matched" => InitScheme::NormMatched,
            "truth" => InitScheme::Truth,
            other => return Err(Error::Config(format!("unknown init.scheme `{other}`"))),
        };
        let iterations = get(&m, "run.T", 10usize)?;
        let trials = get(&m, "run.trials", 10usize)?;
        if trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        let gordon = get_bool(&m, "predict.gordon", true)?;
        if gordon && !alg.kind.is_first_order() && !(model.kappa() > 1.0) {
            return Err(Error::Config(format!("Gordon prediction needs n/d > 1, got {}", model.kappa())));
        }
        let formats = m.get("output.formats").map_or("csv,svg", String::as_str).to_ascii_lowercase();
        let oracle_sigmas = m
            .get("oracle.sigmas")
            .map_or("0,0.1,0.5", String::as_str)
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("cannot parse oracle.sigmas entry `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let oracle_kappa = get(&m, "oracle.kappa", 20.0)?;
        if !(oracle_kappa > 1.0) {
            return Err(Error::Config(format!("oracle.kappa must exceed 1, got {oracle_kappa}")));
        }
        let oracle_samples = get(&m, "predict.oracle_samples", 1_000_000usize)?;
        if oracle_samples < 10_000 {
            return Err(Error::Config(format!("predict.oracle_samples must be at least 10^4, got {oracle_samples}")));
        }
        let classify_start = StatePoint::new(get(&m, "classify.alpha0", 0.9)?, get(&m, "classify.beta0", 0.1)?)?;
        let classify_mode = match m.get("classify.mode").map_or("auto", String::as_str) {
            "raw" => RateMode::Raw,
            "excess" => RateMode::Excess,
            "auto" => RateMode::Auto,
            other => return Err(Error::Config(format!("unknown classify.mode `{other}`"))),
        };
        Ok(Self {
            model,
            alg,
            init,
            iterations,
            trials,
            gordon,
            population: get_bool(&m, "predict.population", true)?,
            oracle_samples,
            out_dir: PathBuf::from(m.get("output.directory").map_or("out", String::as_str)),
            write_csv: formats.contains("csv"),
            write_svg: formats.contains("svg"),
            oracle_states: get(&m, "oracle.states", 20usize)?,
            oracle_sigmas,
            oracle_kappa,
            classify_metric: Metric::parse(m.get("classify.metric").map_or("d_l2", String::as_str))?,
            classify_start,
            classify_iterations: get(&m, "classify.iterations", 30usize)?,
            classify_mode,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self
    }

    pub fn with_out_dir(mut self, dir: PathBuf) -> Self {
        self.out_dir = dir;
        self
    }
}

// ---------------------------------------------------------------------------
// Simulation.

/// Ground truth and shared initial iterate for a seed.
pub fn truth_and_init(spec: &ModelSpec, init: InitScheme) -> Result<(GroundTruth, DVector<f64>)> {
    let truth = GroundTruth::random(spec.d, &mut stream(spec.seed, 0, 0, Purpose::Truth))?;
    let mut rng = stream(spec.seed, 0, 0, Purpose::Init);
    let theta0 = match init {
        InitScheme::Directional { alpha0 } => directional_init(&truth, alpha0, &mut rng)?,
        InitScheme::State { alpha, beta } => state_init(&truth, alpha, beta, &mut rng)?,
        InitScheme::Sphere { scale } => random_sphere_init(spec.d, scale, &mut rng)?,
        InitScheme::NormMatched => {
            let b = sample_batch(spec, &truth, &mut rng);
            norm_matched_init(&b, &mut rng)
        }
        InitScheme::Truth => truth.theta_star().clone(),
    };
    Ok((truth, theta0))
}

/// Run `trials` independent trajectories from a common start, in parallel.
pub fn run_trials(
    spec: &ModelSpec,
    alg: &AlgorithmSpec,
    truth: &GroundTruth,
    theta0: &DVector<f64>,
    iterations: usize,
    trials: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..trials as u64).into_par_iter().map(|k| run_trajectory(spec, alg, truth, theta0.clone(), iterations, k)).collect()
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trials: Vec<TrajectoryRecord>,
    pub initial: StatePoint,
    pub gordon: Option<Vec<StatePoint>>,
    pub population: Option<Vec<StatePoint>>,
    pub report: Option<DeviationReport>,
}

pub fn simulate(cfg: &RunConfig) -> Result<SimulationOutput> {
    let (truth, theta0) = truth_and_init(&cfg.model, cfg.init)?;
    let initial = crate::iterates::state_of(&theta0, &truth);
    let eta = cfg.alg.eta_or_default();
    let gordon = if cfg.gordon {
        Some(iterate_se(&SeOperator::gordon(cfg.alg.kind, cfg.model.sigma, cfg.model.kappa(), eta), initial, cfg.iterations)?)
    } else {
        None
    };
    let population = if cfg.population {
        Some(iterate_se(&SeOperator::population(cfg.alg.kind, cfg.model.sigma, eta), initial, cfg.iterations)?)
    } else {
        None
    };
    let trials = if cfg.iterations == 0 {
        (0..cfg.trials as u64)
            .map(|k| TrajectoryRecord {
                entries: vec![crate::iterates::TrajectoryEntry {
                    theta: theta0.clone(),
                    state: initial,
                    d_l2: d_l2(initial),
                    d_angle: d_angle(initial),
                }],
                seed: cfg.model.seed,
                trial: k,
                model: cfg.model,
                alg: cfg.alg,
                iterations: 0,
                step_seconds: vec![],
            })
            .collect()
    } else {
        run_trials(&cfg.model, &cfg.alg, &truth, &theta0, cfg.iterations, cfg.trials)?
    };
    let report = match &gordon {
        Some(g) => Some(crate::analysis::deviation_report(&trials, g)?),
        None => None,
    };
    Ok(SimulationOutput { trials, initial, gordon, population, report })
}

pub fn trajectories_csv(trials: &[TrajectoryRecord]) -> String {
    let mut s = String::from("trial,iter,alpha,beta,d_l2,d_angle\n");
    for tr in trials {
        for (t, e) in tr.entries.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                tr.trial,
                t,
                fmt_num(e.state.alpha),
                fmt_num(e.state.beta),
                fmt_num(e.d_l2),
                fmt_num(e.d_angle)
            );
        }
    }
    s
}

pub fn predictions_csv(len: usize, gordon: Option<&[StatePoint]>, pop: Option<&[StatePoint]>) -> String {
    let mut s = String::from("iter,alpha_gor,beta_gor,alpha_pop,beta_pop,d_l2_gor,d_l2_pop\n");
    let nan = StatePoint { alpha: f64::NAN, beta: f64::NAN };
    for t in 0..len {
        let g = gordon.map_or(nan, |g| g[t]);
        let p = pop.map_or(nan, |p| p[t]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t,
            fmt_num(g.alpha),
            fmt_num(g.beta),
            fmt_num(p.alpha),
            fmt_num(p.beta),
            fmt_num(if g.alpha.is_nan() { f64::NAN } else { d_l2(g) }),
            fmt_num(if p.alpha.is_nan() { f64::NAN } else { d_l2(p) })
        );
    }
    s
}

fn json_fit(f: &Result<RateFit>) -> String {
    match f {
        Ok(f) => format!(
            "{{\"lambda\": {}, \"coefficient\": {}, \"floor\": {}, \"r_squared\": {}, \"pairs\": {}, \"mode\": \"{}\"}}",
            fmt_num(f.exponent_lambda),
            fmt_num(f.coefficient),
            fmt_num(f.floor),
            fmt_num(f.r_squared),
            f.pairs,
            if f.mode == FitMode::Raw { "raw" } else { "excess" }
        ),
        Err(e) => format!("{{\"error\": \"{e}\"}}"),
    }
}

fn summary_json(cfg: &RunConfig, out: &SimulationOutput) -> String {
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"model\": \"{}\",", cfg.model.kind.name());
    let _ = writeln!(s, "  \"algorithm\": \"{}\",", cfg.alg.kind.name());
    let _ = writeln!(s, "  \"eta\": {},", fmt_num(cfg.alg.eta_or_default()));
    let _ = writeln!(s, "  \"eta_advisory\": {},", cfg.alg.kind.is_first_order() && cfg.alg.eta_or_default() > 0.5);
    let _ = writeln!(s, "  \"sigma\": {},", fmt_num(cfg.model.sigma));
    let _ = writeln!(s, "  \"d\": {},\n  \"n\": {},\n  \"kappa\": {},", cfg.model.d, cfg.model.n, fmt_num(cfg.model.kappa()));
    let _ = writeln!(s, "  \"seed\": {},\n  \"trials\": {},\n  \"iterations\": {},", cfg.model.seed, cfg.trials, cfg.iterations);
    if let Some(r) = &out.report {
        let _ = writeln!(
            s,
            "  \"mean_max_deviation\": {{\"alpha\": {}, \"beta\": {}, \"d_l2\": {}, \"d_angle\": {}}},",
            fmt_num(r.mean_max(0)),
            fmt_num(r.mean_max(1)),
            fmt_num(r.mean_max(2)),
            fmt_num(r.mean_max(3))
        );
        let _ = writeln!(s, "  \"gordon_inside_envelope_d_l2\": {},", fmt_num(r.inside_envelope_fraction(2)));
    }
    let metric = |v: &[StatePoint]| v.iter().map(|&s| d_l2(s)).collect::<Vec<_>>();
    if let Some(g) = &out.gordon {
        let _ = writeln!(s, "  \"rate_gordon_d_l2\": {},", json_fit(&fit_rate(&metric(g), 2.0)));
    }
    if let Some(p) = &out.population {
        let _ = writeln!(s, "  \"rate_population_d_l2\": {},", json_fit(&fit_rate(&metric(p), 2.0)));
    }
    let k = out.trials.len() as f64;
    let len = out.trials[0].entries.len();
    let mean: Vec<f64> = (0..len).map(|t| out.trials.iter().map(|tr| tr.entries[t].d_l2).sum::<f64>() / k).collect();
    let _ = writeln!(s, "  \"rate_empirical_mean_d_l2\": {}", json_fit(&fit_rate(&mean, 2.0)));
    s.push_str("}\n");
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// `simulate`: writes trajectories.csv, predictions.csv and summary.json.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationOutput> {
    let out = simulate(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("trajectories.csv"), &trajectories_csv(&out.trials))?;
    write(
        &cfg.out_dir.join("predictions.csv"),
        &predictions_csv(cfg.iterations + 1, out.gordon.as_deref(), out.population.as_deref()),
    )?;
    write(&cfg.out_dir.join("summary.json"), &summary_json(cfg, &out))?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Oracle verification.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub algorithm: AlgorithmKind,
    pub state: StatePoint,
    pub sigma: f64,
    pub quantity: &'static str,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub retried: bool,
}

impl OracleRow {
    pub fn passes(&self) -> bool {
        (self.mc_estimate - self.closed_form).abs() <= 4.0 * self.stderr
    }
}

fn z(est: f64, cf: f64, se: f64) -> f64 {
    if se > 0.0 {
        (est - cf) / se
    } else if est == cf {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compare closed-form moments and expanded Gordon triples (and the 2-D β)
/// with the oracle for one algorithm, state and noise level.
pub fn oracle_rows(
    alg: AlgorithmKind,
    state: StatePoint,
    sigma: f64,
    kappa: f64,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<OracleRow>> {
    let spec = OmegaSpec { weight: alg.weight(), model: alg.model(), sigma, state };
    let (order, cf) = if alg.is_first_order() {
        (Order::FirstOrder, gordon_expanded_fo(state, alg.weight(), alg.model(), sigma, kappa, eta)?)
    } else {
        (Order::HigherOrder, gordon_expanded_ho(state, alg.weight(), alg.model(), sigma, kappa)?)
    };
    let og = gordon_from_oracle(&spec, kappa, order, eta, samples, seed)?;
    let mk = |quantity, closed_form, mc_estimate, stderr| OracleRow {
        algorithm: alg,
        state,
        sigma,
        quantity,
        closed_form,
        mc_estimate,
        stderr,
        z_score: z(mc_estimate, closed_form, stderr),
        retried: false,
    };
    let m = closed_form_moments(alg.weight(), alg.model(), state, sigma)?;
    let (est, se) = (og.estimate.moments, og.estimate.stderr);
    Ok(vec![
        mk("E[omega^2]", m.e_omega2, est.e_omega2, se[0]),
        mk("E[z1*omega]", m.e_z1_omega, est.e_z1_omega, se[1]),
        mk("E[z2*omega]", m.e_z2_omega, est.e_z2_omega, se[2]),
        mk("alpha", cf.alpha, og.state.alpha, og.stderr[0]),
        mk("mu", cf.mu, og.state.mu, og.stderr[1]),
        mk("nu", cf.nu, og.state.nu, og.stderr[2]),
        mk("beta", cf.beta(), og.beta, og.beta_stderr),
    ])
}

/// Deterministic pseudo-random states for the sweep: α ∈ [0.05, 1.2],
/// β ∈ [0.05, 1.2].
pub fn sweep_states(count: usize, seed: u64) -> Vec<StatePoint> {
    use rand::Rng;
    let mut rng = stream(seed, 0, 0, Purpose::Grid);
    (0..count)
        .map(|_| StatePoint { alpha: rng.random_range(0.05..1.2), beta: rng.random_range(0.05..1.2) })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OracleSweep {
    pub rows: Vec<OracleRow>,
}

impl OracleSweep {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passes()).count()
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("algorithm,alpha,beta,sigma,quantity,closed_form,mc_estimate,stderr,z_score,retried\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.algorithm.name(),
                fmt_num(r.state.alpha),
                fmt_num(r.state.beta),
                fmt_num(r.sigma),
                r.quantity,
                fmt_num(r.closed_form),
                fmt_num(r.mc_estimate),
                fmt_num(r.stderr),
                fmt_num(r.z_score),
                r.retried
            );
        }
        s
    }
}

/// States × σ × algorithms sweep with one retry (fresh seed) per failing
/// cell.
pub fn oracle_sweep(states: &[StatePoint], sigmas: &[f64], kappa: f64, samples: usize, seed: u64) -> Result<OracleSweep> {
    let mut cells = Vec::new();
    for &alg in &AlgorithmKind::ALL {
        for &sg in sigmas {
            for &st in states {
                cells.push((alg, sg, st));
            }
        }
    }
    let results: Vec<Vec<OracleRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(alg, sg, st))| {
            let cell_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let rows = oracle_rows(alg, st, sg, kappa, 0.5, samples, cell_seed)?;
            if rows.iter().all(OracleRow::passes) {
                return Ok(rows);
            }
            let mut retry = oracle_rows(alg, st, sg, kappa, 0.5, samples, cell_seed ^ 0xA5A5_5A5A_DEAD_BEEF)?;
            for r in &mut retry {
                r.retried = true;
            }
            Ok(retry)
        })
        .collect::<Result<_>>()?;
    Ok(OracleSweep { rows: results.into_iter().flatten().collect() })
}

/// `verify-oracle`: writes oracle.csv; the sweep passes iff no row fails.
pub fn cmd_verify_oracle(cfg: &RunConfig) -> Result<OracleSweep> {
    let states = sweep_states(cfg.oracle_states, cfg.model.seed);
    let sweep = oracle_sweep(&states, &cfg.oracle_sigmas, cfg.oracle_kappa, cfg.oracle_samples, cfg.model.seed)?;
    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("oracle.csv"), &sweep.csv())?;
    Ok(sweep)
}

// ---------------------------------------------------------------------------
// Rate classification.

/// Fit an error sequence according to `mode`.
pub fn fit_with_mode(errors: &[f64], mode: RateMode) -> Result<RateFit> {
    match mode {
        RateMode::Raw => fit_rate(errors, 2.0),
        RateMode::Excess => fit_rate_excess(errors, 1),
        RateMode::Auto => match fit_rate(errors, 2.0) {
            Err(Error::InsufficientTrajectory { .. }) => fit_rate_excess(errors, 1),
            other => other,
        },
    }
}

/// Fit the rate of a deterministic recursion started at `start`.
pub fn classify_recursion(op: &SeOperator, start: StatePoint, iterations: usize, metric: Metric, mode: RateMode) -> Result<RateFit> {
    let states = iterate_se(op, start, iterations)?;
    let errors: Vec<f64> = states.iter().map(|&s| metric.eval(s)).collect();
    fit_with_mode(&errors, mode)
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub source: String,
    pub fit: Result<RateFit>,
}

pub fn rates_csv(alg: AlgorithmKind, metric: Metric, rows: &[RateRow]) -> String {
    let mut s = String::from("source,algorithm,metric,mode,lambda,coefficient,floor,r_squared,pairs,window_start,window_end,label\n");
    for r in rows {
        match &r.fit {
            Ok(f) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.source,
                    alg.name(),
                    metric.name(),
                    if f.mode == FitMode::Raw { "raw" } else { "excess" },
                    fmt_num(f.exponent_lambda),
                    fmt_num(f.coefficient),
                    fmt_num(f.floor),
                    fmt_num(f.r_squared),
                    f.pairs,
                    f.window.0,
                    f.window.1,
                    f.label().map_or("unlabeled".to_string(), |l| format!("{l:?}").to_lowercase())
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},{},{},none,nan,nan,nan,nan,0,0,0,\"{e}\"", r.source, alg.name(), metric.name());
            }
        }
    }
    s
}

/// `classify-rate`: Gordon and population recursions from the configured
/// start, plus the empirical mean over trials; writes rates.csv.
pub fn cmd_classify_rate(cfg: &RunConfig) -> Result<Vec<RateRow>> {
    let eta = cfg.alg.eta_or_default();
    let kappa = cfg.model.kappa();
    let (metric, mode, start, t) = (cfg.classify_metric, cfg.classify_mode, cfg.classify_start, cfg.classify_iterations);
    let mut rows = vec![
        RateRow {
            source: "gordon".into(),
            fit: classify_recursion(&SeOperator::gordon(cfg.alg.kind, cfg.model.sigma, kappa, eta), start, t, metric, mode),
        },
        RateRow {
            source: "population".into(),
            fit: classify_recursion(&SeOperator::population(cfg.alg.kind, cfg.model.sigma, eta), start, t, metric, mode),
        },
    ];
    if cfg.trials > 0 && cfg.iterations > 0 {
        let init = InitScheme::State { alpha: start.alpha, beta: start.beta };
        let (truth, theta0) = truth_and_init(&cfg.model, init)?;
        let trials = run_trials(&cfg.model, &cfg.alg, &truth, &theta0, cfg.iterations, cfg.trials)?;
        let k = trials.len() as f64;
        let mean: Vec<f64> = (0..=cfg.iterations)
            .map(|i| trials.iter().map(|tr| metric.eval(tr.entries[i].state)).sum::<f64>() / k)
            .collect();
        rows.push(RateRow { source: "empirical_mean".into(), fit: fit_with_mode(&mean, mode) });
    }
    ensure_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("rates.csv"), &rates_csv(cfg.alg.kind, metric, &rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Property suite.

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub group: &'static str,
    pub name: String,
    pub passed: bool,
    /// Worst margin (inequalities) or max abs difference (identities).
    pub value: f64,
    pub evaluated: usize,
}

fn scan_rows(group: &'static str, points: &[StatePoint], checks: &[Check<'_>]) -> Result<Vec<SuiteRow>> {
    Ok(map_property_scan(points, checks)?
        .into_iter()
        .map(|r| SuiteRow { group, name: r.name, passed: r.passed, value: r.worst_margin, evaluated: r.evaluated })
        .collect())
}

/// Broad grid used by the map inequalities: the square [0, 2]² plus a dense
/// patch around the good region.
pub fn lemma_points() -> Vec<StatePoint> {
    let mut pts = grid((0.0, 2.0), (0.0, 2.0), 61);
    pts.extend(grid((0.4, 1.5), (0.0, 0.4), 45));
    pts.extend(good_region_grid(40));
    pts
}

/// Points for the gradient inequalities: α ∈ [1/2, 3/2], 10⁻⁴ ≤ β ≤ α/4.
pub fn gradient_points() -> Vec<StatePoint> {
    let mut pts = Vec::new();
    for i in 0..41 {
        let alpha = 0.5 + i as f64 / 40.0;
        for j in 0..41 {
            let beta = 1e-4 + (alpha / 4.0 - 1e-4) * j as f64 / 40.0;
            pts.push(StatePoint { alpha, beta });
        }
    }
    pts.extend(grid((0.05, 2.0), (1e-4, 2.0), 25));
    pts
}

/// Every grid property, identity and assumption check. `extra` injects
/// additional checks (used for negative controls).
pub fn property_suite(extra: Vec<Check<'static>>) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    let id_points = grid((0.0, 1.5), (0.0, 1.5), 32);
    for r in identity_checks(&id_points, &[0.0, 0.05, 0.1, 0.5], 20.0) {
        rows.push(SuiteRow { group: "identity", passed: r.passed(1e-12), value: r.max_abs_diff, name: r.name, evaluated: id_points.len() });
    }
    let mut pop_diff: f64 = 0.0;
    let mut exact = true;
    for alg in AlgorithmKind::ALL {
        for &s in &id_points {
            let p = population(alg, s, 0.1, 0.5)?;
            let g = SeOperator::gordon(alg, 0.1, 1e9, 0.5).apply(s)?;
            let z = SeOperator::gordon(alg, 0.1, f64::INFINITY, 0.5).apply(s)?;
            pop_diff = pop_diff.max((p.alpha - g.alpha).abs()).max((p.beta - g.beta).abs());
            exact &= p == z;
        }
    }
    rows.push(SuiteRow { group: "identity", name: "gordon(kappa=1e9) ~ population".into(), passed: pop_diff <= 1e-4, value: pop_diff, evaluated: id_points.len() * 4 });
    rows.push(SuiteRow { group: "identity", name: "gordon(kappa=inf) == population".into(), passed: exact, value: if exact { 0.0 } else { 1.0 }, evaluated: id_points.len() * 4 });
    rows.extend(scan_rows("faithfulness", &good_region_grid(100), &faithfulness_checks(0.01, 500.0))?);
    let lp = lemma_points();
    rows.extend(scan_rows("map_lemma", &lp, &map_lemma_checks(1000.0))?);
    rows.extend(scan_rows("gradient_lemma", &gradient_points(), &gradient_lemma_checks(1000.0))?);
    // (label, spec, lower bound on the residual variance)
    for (name, spec, bound) in [
        (
            "assumption: am_pr residual variance >= sigma^2",
            OmegaSpec { weight: AlgorithmKind::AmPr.weight(), model: ModelKind::PhaseRetrieval, sigma: 0.2, state: StatePoint { alpha: 0.8, beta: 0.3 } },
            0.04,
        ),
        (
            "assumption: am_mlr residual variance > 0",
            OmegaSpec { weight: AlgorithmKind::AmMlr.weight(), model: ModelKind::MixtureOfRegressions, sigma: 0.2, state: StatePoint { alpha: 0.8, beta: 0.3 } },
            0.0,
        ),
    ] {
        let r = verify_assumptions(&spec, 400_000, 17)?;
        let v = r.residual_variance;
        let se = r.residual_variance_stderr;
        let passed = if bound > 0.0 { v >= bound - 4.0 * se } else { v > 4.0 * se } && r.tail_ratio < 3.0;
        let value = v - bound;
        rows.push(SuiteRow { group: "assumption", name: name.into(), passed, value, evaluated: r.samples });
    }
    if !extra.is_empty() {
        rows.extend(scan_rows("injected", &lp, &extra)?);
    }
    Ok(rows)
}

pub fn suite_csv(rows: &[SuiteRow]) -> String {
    let mut s = String::from("group,check,passed,value,evaluated\n");
    for r in rows {
        let _ = writeln!(s, "{},\"{}\",{},{},{}", r.group, r.name, r.passed, fmt_num(r.value), r.evaluated);
    }
    s
}

// ---------------------------------------------------------------------------
// Figures.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Native,
    Desk,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Scale::Native),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Config(format!("unknown scale `{other}` (native|desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub id: &'static str,
    pub title: &'static str,
    pub model: ModelKind,
    pub algs: Vec<AlgorithmSpec>,
    pub sigma: f64,
    pub d: usize,
    pub n: usize,
    pub init: InitScheme,
    pub iterations: usize,
    pub trials: usize,
    pub show_gordon: bool,
    pub show_population: bool,
    pub metric: Metric,
}

pub const FIGURE_IDS: [&str; 11] = ["1", "2", "3a", "3b", "4", "6", "7a", "7b", "8", "9a", "9b"];

pub fn figure_spec(id: &str, scale: Scale) -> Result<FigureSpec> {
    use AlgorithmKind::*;
    let pr = || vec![AlgorithmSpec::default_for(AmPr), AlgorithmSpec::default_for(GdPr)];
    let mlr = || vec![AlgorithmSpec::default_for(AmMlr), AlgorithmSpec::default_for(SubgradMlr)];
    let dir = |a| InitScheme::Directional { alpha0: a };
    let sphere = InitScheme::Sphere { scale: 1.0 };
    #[rustfmt::skip]
    let (sid, title, model, algs, sigma, d, kappa, init, t, trials, gor, pop, metric) = match id {
        "1"  => ("1", "PR from alpha0=0.2 with population prediction", ModelKind::PhaseRetrieval, pr(), 1e-8, 600, 20.0, dir(0.2), 17, 100, false, true, Metric::L2),
        "2"  => ("2", "PR from alpha0=0.2 with Gordon prediction", ModelKind::PhaseRetrieval, pr(), 1e-8, 600, 20.0, dir(0.2), 17, 100, true, false, Metric::L2),
        "3a" => ("3a", "MLR, sigma=0.05, kappa=20", ModelKind::MixtureOfRegressions, mlr(), 0.05, 500, 20.0, dir(0.5), 12, 20, true, false, Metric::Angle),
        "3b" => ("3b", "MLR, sigma=0.25, kappa=100", ModelKind::MixtureOfRegressions, mlr(), 0.25, 500, 100.0, dir(0.5), 12, 20, true, false, Metric::Angle),
        "4"  => ("4", "Subgradient descent for PR with eta=0.95", ModelKind::PhaseRetrieval,
                 vec![AlgorithmSpec::new(GdPr, Some(0.95))?], 0.0, 250, 10.0, dir(0.6), 140, 10, true, true, Metric::L2),
        "6"  => ("6", "Global convergence, PR", ModelKind::PhaseRetrieval, pr(), 1e-6, 800, 100.0, sphere, 12, 12, true, false, Metric::L2),
        "7a" => ("7a", "Local PR, sigma=1e-10, kappa=20", ModelKind::PhaseRetrieval, pr(), 1e-10, 500, 20.0, dir(0.8), 12, 100, true, false, Metric::L2),
        "7b" => ("7b", "Local PR, sigma=1e-6, kappa=100", ModelKind::PhaseRetrieval, pr(), 1e-6, 500, 100.0, dir(0.8), 12, 100, true, false, Metric::L2),
        "8"  => ("8", "Global convergence, MLR", ModelKind::MixtureOfRegressions, mlr(), 1e-6, 800, 100.0, sphere, 12, 12, true, false, Metric::Angle),
        "9a" => ("9a", "Local MLR, sigma=1e-6, kappa=20", ModelKind::MixtureOfRegressions, mlr(), 1e-6, 500, 20.0, dir(0.8), 12, 100, true, false, Metric::Angle),
        "9b" => ("9b", "Local MLR, sigma=1e-2, kappa=6", ModelKind::MixtureOfRegressions, mlr(), 1e-2, 500, 6.0, dir(0.8), 12, 100, true, false, Metric::Angle),
        other => return Err(Error::UnknownFigure(other.to_string())),
    };
    let d = match scale {
        Scale::Native => d,
        Scale::Desk => d / 4,
    };
    let n = (kappa * d as f64).round() as usize;
    Ok(FigureSpec { id: sid, title, model, algs, sigma, d, n, init, iterations: t, trials, show_gordon: gor, show_population: pop, metric })
}

#[derive(Debug, Clone)]
pub struct FigureSeries {
    pub alg: AlgorithmSpec,
    pub gordon: Vec<StatePoint>,
    pub population: Vec<StatePoint>,
    pub report: DeviationReport,
    /// Per-iteration standard error of the trial mean, per metric.
    pub stderr: Vec<[f64; 4]>,
}

#[derive(Debug, Clone)]
pub struct FigureData {
    pub spec: FigureSpec,
    pub series: Vec<FigureSeries>,
}

fn metric_index(m: Metric) -> usize {
    match m {
        Metric::L2 => 2,
        Metric::Angle => 3,
    }
}

pub fn run_figure(spec: &FigureSpec, seed: u64) -> Result<FigureData> {
    let model = ModelSpec::new(spec.model, spec.sigma, spec.d, spec.n, seed)?;
    let (truth, theta0) = truth_and_init(&model, spec.init)?;
    let s0 = crate::iterates::state_of(&theta0, &truth);
    let mut series = Vec::new();
    for (i, alg) in spec.algs.iter().enumerate() {
        // each algorithm gets its own batch streams
        let m = ModelSpec { seed: seed.wrapping_add(1 + i as u64), ..model };
        let trials = run_trials(&m, alg, &truth, &theta0, spec.iterations, spec.trials)?;
        let eta = alg.eta_or_default();
        let gordon = iterate_se(&SeOperator::gordon(alg.kind, spec.sigma, model.kappa(), eta), s0, spec.iterations)?;
        let population = iterate_se(&SeOperator::population(alg.kind, spec.sigma, eta), s0, spec.iterations)?;
        let states: Vec<Vec<StatePoint>> = trials.iter().map(|t| t.states()).collect();
        let report = deviation_report_states(&states, &gordon)?;
        let k = states.len() as f64;
        let stderr = (0..=spec.iterations)
            .map(|t| {
                std::array::from_fn(|m| {
                    if k < 2.0 {
                        return 0.0;
                    }
                    let vals: Vec<f64> = states
                        .iter()
                        .map(|tr| [tr[t].alpha.abs(), tr[t].beta, d_l2(tr[t]), d_angle(tr[t])][m])
                        .collect();
                    let mean = vals.iter().sum::<f64>() / k;
                    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
                })
            })
            .collect();
        series.push(FigureSeries { alg: *alg, gordon, population, report, stderr });
    }
    Ok(FigureData { spec: spec.clone(), series })
}

pub fn figure_csv(fig: &FigureData) -> String {
    let mut s = String::from(
        "figure,algorithm,eta,iter,metric,emp_mean,emp_min,emp_max,emp_band_lo,emp_band_hi,gordon,population\n",
    );
    for ser in &fig.series {
        for (m, metric) in [(2usize, Metric::L2), (3usize, Metric::Angle)] {
            for t in 0..ser.gordon.len() {
                let mean = ser.report.mean[t][m];
                let (lo, hi) = ser.report.envelope[t][m];
                let se = ser.stderr[t][m];
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    fig.spec.id,
                    ser.alg.kind.name(),
                    fmt_num(ser.alg.eta_or_default()),
                    t,
                    metric.name(),
                    fmt_num(mean),
                    fmt_num(lo),
                    fmt_num(hi),
                    fmt_num(mean - 2.0 * se),
                    fmt_num(mean + 2.0 * se),
                    fmt_num(metric.eval(ser.gordon[t])),
                    fmt_num(metric.eval(ser.population[t]))
                );
            }
        }
    }
    s
}

const COLORS: [(&str, &str); 2] = [("#6a3d9a", "#e31a1c"), ("#1f78b4", "#ff7f00")];

/// Static log-scale plot of the figure's primary metric.
pub fn figure_svg(fig: &FigureData) -> String {
    let (w, h) = (720.0, 460.0);
    let (l, r, t, b) = (70.0, 200.0, 40.0, 50.0);
    let m = metric_index(fig.spec.metric);
    let floor = 1e-18;
    let clamp = |v: f64| v.max(floor).log10();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ser in &fig.series {
        for t in 0..ser.gordon.len() {
            let mut vals = vec![ser.report.envelope[t][m].0, ser.report.envelope[t][m].1];
            if fig.spec.show_gordon {
                vals.push(fig.spec.metric.eval(ser.gordon[t]));
            }
            if fig.spec.show_population {
                vals.push(fig.spec.metric.eval(ser.population[t]));
            }
            for v in vals {
                lo = lo.min(clamp(v));
                hi = hi.max(clamp(v));
            }
        }
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let tmax = fig.spec.iterations.max(1) as f64;
    let px = |i: usize| l + (w - l - r) * i as f64 / tmax;
    let py = |v: f64| t + (h - t - b) * (hi - clamp(v)) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"22\" font-size=\"13\">Figure {}: {}</text>", l, fig.spec.id, fig.spec.title);
    let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>", h - b, w - r, h - b);
    let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{}\" stroke=\"black\"/>", h - b);
    let step = ((hi - lo) / 8.0).ceil().max(1.0);
    let mut e = lo;
    while e <= hi + 1e-9 {
        let y = py(10f64.powf(e));
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>", l, w - r);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">1e{}</text>", l - 6.0, y + 4.0, e as i64);
        e += step;
    }
    let xstep = (tmax / 10.0).ceil().max(1.0) as usize;
    for i in (0..=fig.spec.iterations).step_by(xstep) {
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{i}</text>", px(i), h - b + 16.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>", (l + w - r) / 2.0, h - 10.0);
    let _ = writeln!(s, "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>", (t + h - b) / 2.0, (t + h - b) / 2.0, fig.spec.metric.name());
    let mut legend = Vec::new();
    for (k, ser) in fig.series.iter().enumerate() {
        let (emp, pred) = COLORS[k % COLORS.len()];
        let len = ser.gordon.len();
        let mut poly = String::new();
        for i in 0..len {
            let _ = write!(poly, "{:.2},{:.2} ", px(i), py(ser.report.envelope[i][m].1));
        }
        for i in (0..len).rev() {
            let _ = write!(poly, "{:.2},{:.2} ", px(i), py(ser.report.envelope[i][m].0));
        }
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"{emp}\" fill-opacity=\"0.18\" stroke=\"none\"/>", poly.trim_end());
        let line = |vals: Vec<f64>| vals.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v))).collect::<Vec<_>>().join(" ");
        let mean: Vec<f64> = (0..len).map(|i| ser.report.mean[i][m]).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{emp}\" stroke-width=\"1.5\"/>", line(mean));
        legend.push((emp, "", format!("empirical {} (mean, min/max)", ser.alg.kind.name())));
        if fig.spec.show_gordon {
            let g: Vec<f64> = ser.gordon.iter().map(|&x| fig.spec.metric.eval(x)).collect();
            let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{pred}\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>", line(g));
            legend.push((pred, "6 3", format!("Gordon {}", ser.alg.kind.name())));
        }
        if fig.spec.show_population {
            let p: Vec<f64> = ser.population.iter().map(|&x| fig.spec.metric.eval(x)).collect();
            let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" stroke-dasharray=\"2 3\"/>", line(p));
            legend.push(("black", "2 3", format!("population {}", ser.alg.kind.name())));
        }
    }
    for (i, (color, dash, label)) in legend.iter().enumerate() {
        let y = t + 10.0 + 18.0 * i as f64;
        let x = w - r + 10.0;
        let _ = writeln!(s, "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\" stroke-dasharray=\"{dash}\"/>", x + 22.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{label}</text>", x + 28.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// `reproduce-figure`: writes figure_<id>.csv and figure_<id>.svg.
pub fn cmd_reproduce_figure(id: &str, scale: Scale, seed: u64, out_dir: &Path) -> Result<FigureData> {
    let spec = figure_spec(id, scale)?;
    let fig = run_figure(&spec, seed)?;
    ensure_dir(out_dir)?;
    write(&out_dir.join(format!("figure_{}.csv", spec.id)), &figure_csv(&fig))?;
    write(&out_dir.join(format!("figure_{}.svg", spec.id)), &figure_svg(&fig))?;
    Ok(fig)
}

/// Thread count from the flag, else `GORDONSE_THREADS`, else rayon's default.
pub fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("GORDONSE_THREADS").ok().and_then(|v| v.trim().parse().ok())).filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing_and_validation() {
        let cfg = RunConfig::parse(
            "# comment\nmodel.kind=phase_retrieval\nmodel.sigma=0.1\nmodel.d=20\nmodel.n=200\nalgorithm.kind=gd_pr\nalgorithm.eta=0.25\nrun.T=3\n",
        )
        .unwrap();
        assert_eq!(cfg.model.d, 20);
        assert_eq!(cfg.alg.eta, Some(0.25));
        assert!(RunConfig::parse("model.bogus=1").is_err());
        assert!(RunConfig::parse("model.d=0").is_err());
        assert!(RunConfig::parse("model.sigma=-1").is_err());
        assert!(RunConfig::parse("algorithm.kind=am_mlr").is_err());
        assert!(RunConfig::parse("model.d=10\nmodel.d=11").is_err());
        assert!(RunConfig::parse("model.d=100\nmodel.n=50").is_err());
        assert!(RunConfig::parse("init.alpha0=1.5").is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn unknown_figure_lists_ids() {
        let e = figure_spec("5", Scale::Desk).unwrap_err();
        assert!(e.to_string().contains("3a") && e.to_string().contains("9b"));
        for id in FIGURE_IDS {
            let s = figure_spec(id, Scale::Desk).unwrap();
            let nat = figure_spec(id, Scale::Native).unwrap();
            assert_eq!(s.d, nat.d / 4);
            assert!((s.n as f64 / s.d as f64 - nat.n as f64 / nat.d as f64).abs() < 0.05);
        }
    }

    #[test]
    fn thread_flag_precedence() {
        assert_eq!(thread_count(Some(3)), Some(3));
    }
}
