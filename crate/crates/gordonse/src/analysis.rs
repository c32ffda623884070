//! Metrics, good-region membership, rate fitting, deviation statistics and
//! grid scans of map inequalities.

use crate::error::{Error, Result};
use crate::iterates::{AlgorithmKind, TrajectoryRecord};
use crate::state_evolution::{
    ab_shorthand, big_g_mlr, big_g_pr, f_mlr, f_pr, p_mlr, population, small_g_mlr, small_g_pr, SeOperator,
    StatePoint,
};

/// `sqrt((1 − |α|)² + β²)`: distance to the nearer of `±θ*`.
pub fn d_l2(s: StatePoint) -> f64 {
    (1.0 - s.alpha.abs()).hypot(s.beta)
}

/// `atan(β/|α|) ∈ [0, π/2]`, with `π/2` at `α = 0`.
pub fn d_angle(s: StatePoint) -> f64 {
    s.beta.atan2(s.alpha.abs())
}

/// `0.55 ≤ α ≤ 1.05` and `α/β ≥ 5` (β = 0 counts as inside).
pub fn in_good_region(s: StatePoint) -> bool {
    (0.55..=1.05).contains(&s.alpha) && (s.beta == 0.0 || s.alpha >= 5.0 * s.beta)
}

// ---------------------------------------------------------------------------
// Rate fitting.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Regress `log d_{t+1}` on `log d_t` for errors above `guard · floor`.
    Raw,
    /// Regress on the excess `d_t − floor`; for recursions that converge
    /// linearly to a nonzero plateau.
    Excess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateClass {
    Linear,
    Superlinear,
    Sublinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub exponent_lambda: f64,
    pub coefficient: f64,
    pub floor: f64,
    /// Half-open iteration range `[start, end)` of the errors used.
    pub window: (usize, usize),
    pub pairs: usize,
    pub r_squared: f64,
    pub mode: FitMode,
}

impl RateFit {
    /// Classification, only when the fit is good (R² ≥ 0.98).
    pub fn label(&self) -> Option<RateClass> {
        if !(self.r_squared >= 0.98) {
            return None;
        }
        Some(if (self.exponent_lambda - 1.0).abs() <= 0.1 {
            RateClass::Linear
        } else if self.exponent_lambda > 1.0 {
            RateClass::Superlinear
        } else {
            RateClass::Sublinear
        })
    }
}

/// Plateau value: median of the last three errors when they agree to 5%,
/// else 0.
pub fn detect_floor(errors: &[f64]) -> f64 {
    if errors.len() < 3 {
        return 0.0;
    }
    let mut last = [errors[errors.len() - 3], errors[errors.len() - 2], errors[errors.len() - 1]];
    last.sort_by(f64::total_cmp);
    let hi = last[2];
    if hi > 0.0 && (hi - last[0]) / hi < 0.05 {
        last[1]
    } else {
        0.0
    }
}

fn regress(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some((slope, intercept, r2))
}

fn fit_on(values: &[f64], usable: &[bool], floor: f64, mode: FitMode) -> Result<RateFit> {
    let count = usable.iter().filter(|&&u| u).count();
    if count < 4 {
        return Err(Error::InsufficientTrajectory { usable: count });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut start, mut end) = (usize::MAX, 0);
    for t in 0..values.len().saturating_sub(1) {
        if usable[t] && usable[t + 1] {
            xs.push(values[t].ln());
            ys.push(values[t + 1].ln());
            start = start.min(t);
            end = end.max(t + 2);
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientTrajectory { usable: xs.len() + 1 });
    }
    let (slope, intercept, r2) = regress(&xs, &ys).ok_or(Error::InsufficientTrajectory { usable: count })?;
    Ok(RateFit {
        exponent_lambda: slope,
        coefficient: intercept.exp(),
        floor,
        window: (start, end),
        pairs: xs.len(),
        r_squared: r2,
        mode,
    })
}

/// Fit `d_{t+1} ≈ c·d_t^λ` on the pre-floor part of an error sequence.
/// Errors at or below `floor_guard · floor` are excluded.
pub fn fit_rate(errors: &[f64], floor_guard: f64) -> Result<RateFit> {
    let floor = detect_floor(errors);
    let usable: Vec<bool> = errors.iter().map(|&d| d > 0.0 && d.is_finite() && d > floor_guard * floor).collect();
    fit_on(errors, &usable, floor, FitMode::Raw)
}

/// Fit on the excess over the detected plateau, `e_t = d_t − floor`,
/// skipping the first `transient` iterations. Excesses below `1e-9·floor`
/// are dominated by rounding and dropped.
pub fn fit_rate_excess(errors: &[f64], transient: usize) -> Result<RateFit> {
    let floor = detect_floor(errors);
    let excess: Vec<f64> = errors.iter().map(|&d| d - floor).collect();
    let cut = 1e-9 * floor;
    let usable: Vec<bool> =
        excess.iter().enumerate().map(|(t, &e)| t >= transient && e.is_finite() && e > cut && e > 0.0).collect();
    fit_on(&excess, &usable, floor, FitMode::Excess)
}

// ---------------------------------------------------------------------------
// Deviation reports.

/// Index of each metric in a deviation row.
pub const METRICS: [&str; 4] = ["alpha", "beta", "d_l2", "d_angle"];

fn metric_row(s: StatePoint) -> [f64; 4] {
    [s.alpha.abs(), s.beta, d_l2(s), d_angle(s)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// `per_iteration[trial][t][m]` = |empirical − predicted| in metric `m`
    /// (|α|, β, d_ℓ2, d_∠).
    pub per_iteration: Vec<Vec<[f64; 4]>>,
    /// Max over iterations, per trial and metric.
    pub per_trial_max: Vec<[f64; 4]>,
    pub trials: usize,
    /// Per-iteration `(min, max)` of each metric across trials.
    pub envelope: Vec<[(f64, f64); 4]>,
    /// Per-iteration mean of each metric across trials.
    pub mean: Vec<[f64; 4]>,
    /// The prediction's metric values.
    pub predicted: Vec<[f64; 4]>,
}

impl DeviationReport {
    /// Mean across trials of the per-trial max deviation.
    pub fn mean_max(&self, metric: usize) -> f64 {
        self.per_trial_max.iter().map(|r| r[metric]).sum::<f64>() / self.trials as f64
    }

    pub fn max_max(&self, metric: usize) -> f64 {
        self.per_trial_max.iter().map(|r| r[metric]).fold(0.0, f64::max)
    }

    /// Fraction of iterations at which the prediction lies inside the
    /// empirical min/max envelope.
    pub fn inside_envelope_fraction(&self, metric: usize) -> f64 {
        let inside = self
            .predicted
            .iter()
            .zip(&self.envelope)
            .filter(|(p, e)| e[metric].0 <= p[metric] && p[metric] <= e[metric].1)
            .count();
        inside as f64 / self.predicted.len() as f64
    }
}

/// Compare state sequences against a prediction of the same length.
pub fn deviation_report_states(trials: &[Vec<StatePoint>], prediction: &[StatePoint]) -> Result<DeviationReport> {
    if trials.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, got: 0 });
    }
    for tr in trials {
        if tr.len() != prediction.len() {
            return Err(Error::LengthMismatch { expected: prediction.len(), got: tr.len() });
        }
    }
    let predicted: Vec<[f64; 4]> = prediction.iter().map(|&s| metric_row(s)).collect();
    let rows: Vec<Vec<[f64; 4]>> = trials.iter().map(|tr| tr.iter().map(|&s| metric_row(s)).collect()).collect();
    let per_iteration: Vec<Vec<[f64; 4]>> = rows
        .iter()
        .map(|tr| tr.iter().zip(&predicted).map(|(e, p)| std::array::from_fn(|m| (e[m] - p[m]).abs())).collect())
        .collect();
    let per_trial_max = per_iteration
        .iter()
        .map(|tr: &Vec<[f64; 4]>| std::array::from_fn(|m| tr.iter().map(|r| r[m]).fold(0.0, f64::max)))
        .collect();
    let t_len = prediction.len();
    let k = trials.len() as f64;
    let envelope = (0..t_len)
        .map(|t| {
            std::array::from_fn(|m| {
                rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), tr| (lo.min(tr[t][m]), hi.max(tr[t][m])))
            })
        })
        .collect();
    let mean = (0..t_len).map(|t| std::array::from_fn(|m| rows.iter().map(|tr| tr[t][m]).sum::<f64>() / k)).collect();
    Ok(DeviationReport { per_iteration, per_trial_max, trials: trials.len(), envelope, mean, predicted })
}

pub fn deviation_report(trials: &[TrajectoryRecord], prediction: &[StatePoint]) -> Result<DeviationReport> {
    let states: Vec<Vec<StatePoint>> = trials.iter().map(|t| t.states()).collect();
    deviation_report_states(&states, prediction)
}

// ---------------------------------------------------------------------------
// Inequality scans.

/// A named inequality. `eval` returns `None` outside the check's domain and
/// otherwise a margin that is nonnegative when the inequality holds.
pub struct Check<'a> {
    pub name: String,
    pub tolerance: f64,
    pub eval: Box<dyn Fn(StatePoint) -> Option<f64> + Sync + 'a>,
}

impl<'a> Check<'a> {
    pub fn new(name: impl Into<String>, tolerance: f64, eval: impl Fn(StatePoint) -> Option<f64> + Sync + 'a) -> Self {
        Self { name: name.into(), tolerance, eval: Box::new(eval) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub name: String,
    pub passed: bool,
    /// Smallest margin seen; negative values are violations.
    pub worst_margin: f64,
    pub worst_state: Option<StatePoint>,
    pub evaluated: usize,
}

/// Evaluate each check at every point in its domain. A check with no
/// points in its domain fails.
pub fn map_property_scan(points: &[StatePoint], checks: &[Check<'_>]) -> Result<Vec<ScanResult>> {
    if checks.is_empty() {
        return Err(Error::param("checks", "need at least one check"));
    }
    Ok(checks
        .iter()
        .map(|c| {
            let mut worst = f64::INFINITY;
            let mut at = None;
            let mut n = 0;
            for &p in points {
                if let Some(m) = (c.eval)(p) {
                    n += 1;
                    let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
                    if m < worst {
                        worst = m;
                        at = Some(p);
                    }
                }
            }
            ScanResult { name: c.name.clone(), passed: n > 0 && worst >= -c.tolerance, worst_margin: worst, worst_state: at, evaluated: n }
        })
        .collect())
}

/// Uniform `m × m` grid over `[a0, a1] × [b0, b1]`.
pub fn grid(a: (f64, f64), b: (f64, f64), m: usize) -> Vec<StatePoint> {
    let lin = |lo: f64, hi: f64, i: usize| if m == 1 { lo } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 };
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(StatePoint { alpha: lin(a.0, a.1, i), beta: lin(b.0, b.1, j) });
        }
    }
    out
}

/// `m × m` grid covering the good region: α uniform on [0.55, 1.05] and
/// β uniform on [0, α/5].
pub fn good_region_grid(m: usize) -> Vec<StatePoint> {
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let alpha = 0.55 + 0.5 * i as f64 / (m - 1) as f64;
        for j in 0..m {
            out.push(StatePoint { alpha, beta: alpha / 5.0 * j as f64 / (m - 1) as f64 });
        }
    }
    out
}

/// Checks that every Gordon map sends the good region into itself.
pub fn faithfulness_checks(sigma: f64, kappa: f64) -> Vec<Check<'static>> {
    AlgorithmKind::ALL
        .iter()
        .map(|&alg| {
            let op = SeOperator::gordon(alg, sigma, kappa, 0.5);
            Check::new(format!("faithful/{}", alg.name()), 0.0, move |s| {
                let t = op.apply(s).ok()?;
                Some(
                    (t.alpha - 0.55)
                        .min(1.05 - t.alpha)
                        .min(if t.beta == 0.0 { f64::INFINITY } else { t.alpha - 5.0 * t.beta }),
                )
            })
        })
        .collect()
}

const MAP_TOL: f64 = 1e-12;
/// Central-difference step and slack for gradient checks.
pub const FD_STEP: f64 = 1e-5;
pub const FD_SLACK: f64 = 1e-3;

fn grad_l1(f: impl Fn(StatePoint) -> f64, s: StatePoint) -> f64 {
    let h = FD_STEP;
    let da = (f(StatePoint { alpha: s.alpha + h, ..s }) - f(StatePoint { alpha: s.alpha - h, ..s })) / (2.0 * h);
    let db = (f(StatePoint { beta: s.beta + h, ..s }) - f(StatePoint { beta: s.beta - h, ..s })) / (2.0 * h);
    da.abs() + db.abs()
}

fn rho_of(s: StatePoint) -> f64 {
    s.rho()
}

/// The map inequalities (a)–(g) for alternating-minimization and
/// subgradient maps. `kappa_large` plays the role of "κ ≥ C".
pub fn map_lemma_checks(kappa_large: f64) -> Vec<Check<'static>> {
    let sigmas_small = [0.0, 0.05, 0.1, 0.25, 0.5];
    let sigmas_all = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
    let k = kappa_large;
    let mut v: Vec<Check<'static>> = Vec::new();
    v.push(Check::new("map(a) bounds on F0", MAP_TOL, |s| {
        let f0 = f_mlr(s, 0.0);
        let phi = s.phi();
        Some((f0 - (1.0 - 4.0 * phi.powi(3) / (3.0 * std::f64::consts::PI)).max(0.0)).min(1.0 - f0))
    }));
    v.push(Check::new("map(a) 1-F0 >= 2/5 phi^3 for rho <= 1/5", MAP_TOL, |s| {
        (rho_of(s) <= 0.2).then(|| 1.0 - f_mlr(s, 0.0) - 0.4 * s.phi().powi(3))
    }));
    v.push(Check::new("map(b) F0 >= 1.06 alpha for rho >= 2, beta <= 1", MAP_TOL, |s| {
        (rho_of(s) >= 2.0 && s.beta <= 1.0).then(|| f_mlr(s, 0.0) - 1.06 * s.alpha)
    }));
    v.push(Check::new("map(c) F_sigma nondecreasing in sigma and bounded", MAP_TOL, move |s| {
        let mut m = f64::INFINITY;
        for w in sigmas_all.windows(2) {
            m = m.min(f_mlr(s, w[1]) - f_mlr(s, w[0]));
        }
        for &sg in &sigmas_all {
            m = m.min(1.0 + 2.0 * sg.powi(3) / (3.0 * std::f64::consts::PI) - f_mlr(s, sg));
        }
        Some(m)
    }));
    v.push(Check::new("map(d) sqrt((1-F^2)+/(k-1)) <= G_sigma <= 0.8", MAP_TOL, move |s| {
        let mut m = f64::INFINITY;
        for &sg in &sigmas_small {
            let g = big_g_mlr(s, sg, k);
            let lo = ((1.0 - f_mlr(s, sg).powi(2)).max(0.0) / (k - 1.0)).sqrt();
            m = m.min(g - lo).min(0.8 - g);
        }
        Some(m)
    }));
    v.push(Check::new("map(e) G0^2 <= phi^3/10 on good region", MAP_TOL, move |s| {
        in_good_region(s).then(|| s.phi().powi(3) / 10.0 - big_g_mlr(s, 0.0, k).powi(2))
    }));
    v.push(Check::new("map(f) sandwich of g_sigma^2", MAP_TOL, move |s| {
        let mut m = f64::INFINITY;
        for &kk in &[5.0, 20.0, k] {
            for &sg in &sigmas_all {
                let gg = big_g_mlr(s, sg, kk).powi(2);
                let sm = small_g_mlr(s, sg, kk).powi(2);
                let f = f_mlr(s, sg);
                let pb = p_mlr(s, sg);
                let upper = gg
                    + 2.0 / kk * ((1.0 - s.alpha).powi(2) + s.beta.powi(2))
                    + 2.0 / kk * pb * pb
                    + 2.0 / kk * (1.0 - f).powi(2);
                m = m.min(sm - (kk - 1.0) / kk * gg).min(upper - sm);
            }
        }
        Some(m)
    }));
    v.push(Check::new("map(g) two-sided bound on G_sigma/F_sigma for rho <= 2", MAP_TOL, move |s| {
        if rho_of(s) > 2.0 {
            return None;
        }
        let mut m = f64::INFINITY;
        for &sg in &sigmas_small {
            let ratio = big_g_mlr(s, sg, k) / f_mlr(s, sg);
            let pb = p_mlr(s, sg);
            let lower = (pb * pb * (k - 2.0) / (k - 1.0) + sg * sg / (2.0 * (k - 1.0))).sqrt()
                / (1.0 + 2.0 * sg.powi(3) / (3.0 * std::f64::consts::PI));
            let upper = 0.8 * rho_of(s) + 2.0 * sg / (k - 1.0).sqrt();
            m = m.min(ratio - lower).min(upper - ratio);
        }
        Some(m)
    }));
    v
}

fn local_domain(s: StatePoint) -> bool {
    s.alpha >= 0.5 && rho_of(s) <= 0.25 && s.beta >= FD_STEP
}

/// The gradient inequalities (a)–(d), by central differences.
pub fn gradient_lemma_checks(kappa_large: f64) -> Vec<Check<'static>> {
    let sigmas = [0.0, 0.1, 0.25, 0.5];
    let k = kappa_large;
    vec![
        Check::new("grad(a) |grad F_sigma|_1 <= 0.5", FD_SLACK, move |s| {
            local_domain(s).then(|| sigmas.iter().map(|&sg| 0.5 - grad_l1(|t| f_mlr(t, sg), s)).fold(f64::INFINITY, f64::min))
        }),
        Check::new("grad(b) |grad G_sigma|_1 <= 0.98", FD_SLACK, move |s| {
            local_domain(s)
                .then(|| sigmas.iter().map(|&sg| 0.98 - grad_l1(|t| big_g_mlr(t, sg, k), s)).fold(f64::INFINITY, f64::min))
        }),
        Check::new("grad(c) noise shrinks |grad G|_1 and |grad g|_1", FD_SLACK, move |s| {
            (s.beta >= FD_STEP && s.alpha >= FD_STEP).then(|| {
                let mut m = f64::INFINITY;
                for &kk in &[20.0, k] {
                    let g0 = grad_l1(|t| big_g_mlr(t, 0.0, kk), s);
                    let s0 = grad_l1(|t| small_g_mlr(t, 0.0, kk), s);
                    for &sg in &[0.1, 0.5, 1.0] {
                        m = m.min(g0 - grad_l1(|t| big_g_pr(t, sg, kk), s));
                        m = m.min(s0 - grad_l1(|t| small_g_pr(t, sg, kk), s));
                    }
                }
                m
            })
        }),
        Check::new("grad(d) |grad g_sigma|_1 <= |grad G_sigma|_1 + (3 + |grad F_sigma|_1)/sqrt(k)", FD_SLACK, move |s| {
            local_domain(s).then(|| {
                let mut m = f64::INFINITY;
                for &kk in &[100.0, k] {
                    for &sg in &sigmas {
                        let lhs = grad_l1(|t| small_g_mlr(t, sg, kk), s);
                        let rhs = grad_l1(|t| big_g_mlr(t, sg, kk), s) + (3.0 + grad_l1(|t| f_mlr(t, sg), s)) / kk.sqrt();
                        m = m.min(rhs - lhs);
                    }
                }
                m
            })
        }),
    ]
}

/// A named exact identity and its largest absolute discrepancy.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResult {
    pub name: String,
    pub max_abs_diff: f64,
}

impl IdentityResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_abs_diff <= tol
    }
}

fn max_diff(points: &[StatePoint], f: impl Fn(StatePoint) -> f64) -> f64 {
    points.iter().map(|&s| f(s).abs()).fold(0.0, f64::max)
}

/// Algebraic identities between the maps, evaluated on `points`.
pub fn identity_checks(points: &[StatePoint], sigmas: &[f64], kappa: f64) -> Vec<IdentityResult> {
    use crate::models::{ModelKind, WeightFunction};
    use crate::state_evolution::{gordon_expanded_fo, gordon_expanded_ho};
    let mut out = Vec::new();
    let worst = |f: &dyn Fn(StatePoint, f64) -> f64| sigmas.iter().map(|&sg| max_diff(points, |s| f(s, sg))).fold(0.0, f64::max);
    let half_step = |ho: AlgorithmKind, fo: AlgorithmKind| {
        worst(&|s, sg| {
            let a = population(ho, s, sg, 0.5).unwrap();
            let b = population(fo, s, sg, 0.5).unwrap();
            (a.alpha - b.alpha).abs().max((a.beta - b.beta).abs())
        })
    };
    out.push(IdentityResult { name: "half-step population coincidence (PR)".into(), max_abs_diff: half_step(AlgorithmKind::AmPr, AlgorithmKind::GdPr) });
    out.push(IdentityResult {
        name: "half-step population coincidence (MLR)".into(),
        max_abs_diff: half_step(AlgorithmKind::AmMlr, AlgorithmKind::SubgradMlr),
    });
    for (pr, mlr) in [(AlgorithmKind::AmPr, AlgorithmKind::AmMlr), (AlgorithmKind::GdPr, AlgorithmKind::SubgradMlr)] {
        let d = max_diff(points, |s| {
            let a = SeOperator::gordon(pr, 0.0, kappa, 0.5).apply(s).unwrap();
            let b = SeOperator::gordon(mlr, 0.0, kappa, 0.5).apply(s).unwrap();
            (a.alpha - b.alpha).abs().max((a.beta - b.beta).abs())
        });
        out.push(IdentityResult { name: format!("noiseless {} = {}", pr.name(), mlr.name()), max_abs_diff: d });
    }
    out.push(IdentityResult { name: "F = F_0".into(), max_abs_diff: max_diff(points, |s| f_pr(s) - f_mlr(s, 0.0)) });
    out.push(IdentityResult {
        name: "G^2 = G_0^2 + sigma^2/(k-1)".into(),
        max_abs_diff: worst(&|s, sg| big_g_pr(s, sg, kappa).powi(2) - big_g_mlr(s, 0.0, kappa).powi(2) - sg * sg / (kappa - 1.0)),
    });
    out.push(IdentityResult {
        name: "g^2 = g_0^2 + sigma^2/k".into(),
        max_abs_diff: worst(&|s, sg| small_g_pr(s, sg, kappa).powi(2) - small_g_mlr(s, 0.0, kappa).powi(2) - sg * sg / kappa),
    });
    out.push(IdentityResult {
        name: "g_sigma^2 = (k-1)/k G_sigma^2 + ((rho B)^2 + (alpha-F)^2 + (beta-rho B)^2)/k".into(),
        max_abs_diff: worst(&|s, sg| {
            let f = f_mlr(s, sg);
            let pb = p_mlr(s, sg);
            small_g_mlr(s, sg, kappa).powi(2)
                - (kappa - 1.0) / kappa * big_g_mlr(s, sg, kappa).powi(2)
                - (pb * pb + (s.alpha - f).powi(2) + (s.beta - pb).powi(2)) / kappa
        }),
    });
    out.push(IdentityResult {
        name: "rho B_sigma(rho) angle form = literal".into(),
        max_abs_diff: worst(&|s, sg| {
            if s.alpha == 0.0 {
                return 0.0;
            }
            let (_, b) = ab_shorthand(s.rho(), sg);
            p_mlr(s, sg) - s.rho() * b
        }),
    });
    for alg in AlgorithmKind::ALL {
        let d = worst(&|s, sg| {
            let e = if alg.is_first_order() {
                gordon_expanded_fo(s, alg.weight(), alg.model(), sg, kappa, 0.5).unwrap()
            } else {
                gordon_expanded_ho(s, alg.weight(), alg.model(), sg, kappa).unwrap()
            };
            let g = SeOperator::gordon(alg, sg, kappa, 0.5).apply(s).unwrap();
            (e.alpha - g.alpha).abs().max((e.beta() - g.beta).abs())
        });
        out.push(IdentityResult { name: format!("expanded reconstruction {}", alg.name()), max_abs_diff: d });
    }
    let _ = (ModelKind::PhaseRetrieval, WeightFunction::AmPr);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(a: f64, b: f64) -> StatePoint {
        StatePoint { alpha: a, beta: b }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(d_l2(sp(1.0, 0.0)), 0.0);
        assert_eq!(d_l2(sp(-1.0, 0.0)), 0.0);
        assert!((d_l2(sp(0.55, 0.1)) - 0.46098).abs() < 5e-6);
        assert!((d_angle(sp(1.0, 1.0)) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(d_angle(sp(-3.0, 0.0)), 0.0);
        assert_eq!(d_angle(sp(0.0, 1.0)), std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn metric_invariances() {
        for s in grid((0.0, 1.5), (0.0, 1.5), 20) {
            let m = sp(-s.alpha, s.beta);
            assert_eq!(d_l2(s), d_l2(m));
            assert_eq!(d_angle(s), d_angle(m));
            assert!(d_angle(s).sin() <= d_l2(s) + 1e-15);
        }
    }

    #[test]
    fn good_region_examples() {
        assert!(in_good_region(sp(0.55, 0.11)));
        assert!(!in_good_region(sp(1.06, 0.1)));
        assert!(!in_good_region(sp(0.9, 0.2)));
        assert!(in_good_region(sp(0.9, 0.0)));
    }

    #[test]
    fn synthetic_rates() {
        let mut e = vec![0.5];
        for _ in 0..4 {
            let l = *e.last().unwrap();
            e.push(l * l);
        }
        let f = fit_rate(&e, 2.0).unwrap();
        assert!((f.exponent_lambda - 2.0).abs() < 1e-6);
        for (c, lam) in [(0.5, 1.0), (0.7, 1.5), (1.3, 2.0)] {
            let mut e = vec![0.3];
            for _ in 0..6 {
                let l: f64 = *e.last().unwrap();
                e.push(c * l.powf(lam));
            }
            let f = fit_rate(&e, 2.0).unwrap();
            assert!((f.exponent_lambda - lam).abs() < 1e-6 && (f.coefficient - c).abs() < 1e-6, "{f:?}");
            assert_eq!(f.label(), Some(if lam == 1.0 { RateClass::Linear } else { RateClass::Superlinear }));
        }
    }

    #[test]
    fn floor_detection_and_exclusion() {
        let e = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1.01e-6, 1.0e-6, 0.99e-6];
        assert_eq!(detect_floor(&e), 1e-6);
        let f = fit_rate(&e, 2.0).unwrap();
        assert_eq!(f.window, (0, 5));
        assert!((f.exponent_lambda - 1.0).abs() < 1e-9);
        assert!(matches!(fit_rate(&[0.5, 0.1, 0.1, 0.1], 2.0), Err(Error::InsufficientTrajectory { .. })));
        // geometric approach to a nonzero plateau
        let e: Vec<f64> = (0..40).map(|t| 0.01 + 0.2 * 0.3f64.powi(t)).collect();
        let f = fit_rate_excess(&e, 1).unwrap();
        assert!((f.exponent_lambda - 1.0).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn deviation_examples() {
        let pred = vec![sp(0.5, 0.5), sp(0.8, 0.2)];
        let r = deviation_report_states(&[pred.clone(), pred.clone()], &pred).unwrap();
        assert_eq!(r.mean_max(2), 0.0);
        assert_eq!(r.inside_envelope_fraction(2), 1.0);
        let other = vec![sp(0.5, 0.5), sp(0.8, 0.3)];
        let r = deviation_report_states(&[other], &pred).unwrap();
        assert!((r.per_trial_max[0][1] - 0.1).abs() < 1e-15);
        for t in 0..2 {
            for m in 0..4 {
                let (lo, hi) = r.envelope[t][m];
                assert!(lo <= r.mean[t][m] && r.mean[t][m] <= hi);
            }
        }
        assert!(deviation_report_states(&[vec![sp(1.0, 0.0)]], &pred).is_err());
    }

    #[test]
    fn negative_control_fails() {
        let checks = vec![Check::new("F <= 1 with F = 2", 0.0, |_s| Some(1.0 - 2.0))];
        let r = map_property_scan(&grid((0.1, 1.0), (0.0, 1.0), 5), &checks).unwrap();
        assert!(!r[0].passed);
        assert_eq!(r[0].worst_margin, -1.0);
        assert!(map_property_scan(&[], &[]).is_err());
    }

    #[test]
    fn map_lemma_a_passes() {
        let pts = grid((0.0, 2.0), (0.0, 2.0), 32);
        let r = map_property_scan(&pts, &map_lemma_checks(1000.0)[..1]).unwrap();
        assert!(r[0].passed, "{r:?}");
    }
}
