//! Empirical one-step operators and the sample-splitting runner.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::analysis::{d_angle, d_l2};
use crate::error::{Error, Result};
use crate::models::{sample_batch, Batch, GroundTruth, ModelKind, ModelSpec, WeightFunction};
use crate::rng::{stream, Purpose};
use crate::state_evolution::StatePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    AmPr,
    GdPr,
    AmMlr,
    SubgradMlr,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] =
        [AlgorithmKind::AmPr, AlgorithmKind::GdPr, AlgorithmKind::AmMlr, AlgorithmKind::SubgradMlr];

    pub fn weight(self) -> WeightFunction {
        match self {
            AlgorithmKind::AmPr => WeightFunction::AmPr,
            AlgorithmKind::GdPr => WeightFunction::GdPr,
            AlgorithmKind::AmMlr => WeightFunction::AmMlr,
            AlgorithmKind::SubgradMlr => WeightFunction::SubgradMlr,
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            AlgorithmKind::AmPr | AlgorithmKind::GdPr => ModelKind::PhaseRetrieval,
            AlgorithmKind::AmMlr | AlgorithmKind::SubgradMlr => ModelKind::MixtureOfRegressions,
        }
    }

    pub fn is_first_order(self) -> bool {
        matches!(self, AlgorithmKind::GdPr | AlgorithmKind::SubgradMlr)
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::AmPr => "am_pr",
            AlgorithmKind::GdPr => "gd_pr",
            AlgorithmKind::AmMlr => "am_mlr",
            AlgorithmKind::SubgradMlr => "subgrad_mlr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "am_pr" => Ok(AlgorithmKind::AmPr),
            "gd_pr" => Ok(AlgorithmKind::GdPr),
            "am_mlr" => Ok(AlgorithmKind::AmMlr),
            "subgrad_mlr" | "subgrad_am_mlr" | "gd_mlr" => Ok(AlgorithmKind::SubgradMlr),
            other => Err(Error::param("algorithm.kind", format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Algorithm plus stepsize; `eta` is `Some` exactly for first-order kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub eta: Option<f64>,
}

impl AlgorithmSpec {
    pub const DEFAULT_ETA: f64 = 0.5;

    pub fn new(kind: AlgorithmKind, eta: Option<f64>) -> Result<Self> {
        if !kind.is_first_order() {
            if eta.is_some() {
                return Err(Error::param("eta", format!("{} takes no stepsize", kind.name())));
            }
            return Ok(Self { kind, eta: None });
        }
        let eta = eta.unwrap_or(Self::DEFAULT_ETA);
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::param("eta", format!("must be positive, got {eta}")));
        }
        Ok(Self { kind, eta: Some(eta) })
    }

    pub fn default_for(kind: AlgorithmKind) -> Self {
        Self::new(kind, None).expect("default stepsize is valid")
    }

    /// Stepsize, or 1/2 for higher-order kinds (where it is unused).
    pub fn eta_or_default(&self) -> f64 {
        self.eta.unwrap_or(Self::DEFAULT_ETA)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub theta: DVector<f64>,
    pub state: StatePoint,
    pub d_l2: f64,
    pub d_angle: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub entries: Vec<TrajectoryEntry>,
    pub seed: u64,
    pub trial: u64,
    pub model: ModelSpec,
    pub alg: AlgorithmSpec,
    pub iterations: usize,
    /// Wall-clock seconds per step; excluded from equality and output files.
    pub step_seconds: Vec<f64>,
}

impl PartialEq for TrajectoryRecord {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.seed == other.seed
            && self.trial == other.trial
            && self.model == other.model
            && self.alg == other.alg
            && self.iterations == other.iterations
    }
}

impl TrajectoryRecord {
    pub fn states(&self) -> Vec<StatePoint> {
        self.entries.iter().map(|e| e.state).collect()
    }
}

/// `(<θ, θ*>, ‖θ − <θ, θ*>θ*‖)`.
pub fn state_of(theta: &DVector<f64>, truth: &GroundTruth) -> StatePoint {
    let ts = truth.theta_star();
    let alpha = theta.dot(ts);
    let beta = (theta - ts * alpha).norm();
    StatePoint { alpha, beta }
}

fn weights(theta: &DVector<f64>, batch: &Batch, w: WeightFunction) -> DVector<f64> {
    let xt = &batch.x * theta;
    DVector::from_fn(xt.len(), |i, _| w.eval(xt[i], batch.y[i]))
}

/// Least-squares regression of `ω(<xᵢ, θ>, yᵢ)` on `X`, solved by Householder QR.
pub fn step_higher_order(theta: &DVector<f64>, batch: &Batch, w: WeightFunction) -> Result<DVector<f64>> {
    let (n, d) = batch.x.shape();
    if n < d {
        return Err(Error::RankDeficient { rows: n, cols: d, condition: f64::INFINITY });
    }
    let mut rhs = weights(theta, batch, w);
    let qr = batch.x.clone().qr();
    let r = qr.r();
    let diag = r.diagonal().abs();
    let (lo, hi) = (diag.min(), diag.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(lo > hi * (n as f64) * f64::EPSILON) {
        return Err(Error::RankDeficient { rows: n, cols: d, condition });
    }
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, d).into_owned();
    r.solve_upper_triangular(&top).ok_or(Error::RankDeficient { rows: n, cols: d, condition })
}

/// `θ − (2η/n) Σ ω(<xᵢ, θ>, yᵢ) xᵢ`.
pub fn step_first_order(theta: &DVector<f64>, batch: &Batch, w: WeightFunction, eta: f64) -> DVector<f64> {
    let om = weights(theta, batch, w);
    let g = batch.x.tr_mul(&om);
    theta - g * (2.0 * eta / batch.n() as f64)
}

/// One step of `alg` on `batch`.
pub fn step(theta: &DVector<f64>, batch: &Batch, alg: &AlgorithmSpec) -> Result<DVector<f64>> {
    let w = alg.kind.weight();
    if alg.kind.is_first_order() {
        Ok(step_first_order(theta, batch, w, alg.eta_or_default()))
    } else {
        step_higher_order(theta, batch, w)
    }
}

fn entry(theta: DVector<f64>, truth: &GroundTruth) -> TrajectoryEntry {
    let state = state_of(&theta, truth);
    TrajectoryEntry { d_l2: d_l2(state), d_angle: d_angle(state), state, theta }
}

/// Run `t` steps with a fresh batch per step. Batch `k` is drawn from the
/// stream keyed by `(spec.seed, trial, k)`.
pub fn run_trajectory(
    spec: &ModelSpec,
    alg: &AlgorithmSpec,
    truth: &GroundTruth,
    theta0: DVector<f64>,
    t: usize,
    trial: u64,
) -> Result<TrajectoryRecord> {
    if t == 0 {
        return Err(Error::param("T", "need at least one iteration"));
    }
    if alg.kind.model() != spec.kind {
        return Err(Error::param("algorithm.kind", format!("{} does not match model {}", alg.kind.name(), spec.kind.name())));
    }
    if theta0.len() != truth.d() || truth.d() != spec.d {
        return Err(Error::LengthMismatch { expected: spec.d, got: theta0.len() });
    }
    let mut entries = Vec::with_capacity(t + 1);
    let mut step_seconds = Vec::with_capacity(t);
    entries.push(entry(theta0, truth));
    for k in 0..t {
        let start = Instant::now();
        let mut rng = stream(spec.seed, trial, k as u64, Purpose::Batch);
        let batch = sample_batch(spec, truth, &mut rng);
        let next = step(&entries[k].theta, &batch, alg).map_err(|e| e.at_iteration(k + 1))?;
        entries.push(entry(next, truth));
        step_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(TrajectoryRecord { entries, seed: spec.seed, trial, model: *spec, alg: *alg, iterations: t, step_seconds })
}

/// Squared-loss least squares via the normal equations; used only to check
/// that the QR solve and the √-loss minimizer agree.
#[doc(hidden)]
pub fn normal_equation_step(theta: &DVector<f64>, batch: &Batch, w: WeightFunction) -> Option<DVector<f64>> {
    let om = weights(theta, batch, w);
    let gram: DMatrix<f64> = batch.x.tr_mul(&batch.x);
    gram.cholesky().map(|c| c.solve(&batch.x.tr_mul(&om)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{directional_init, state_init};

    fn truth(d: usize, seed: u64) -> GroundTruth {
        GroundTruth::random(d, &mut stream(seed, 0, 0, Purpose::Truth)).unwrap()
    }

    #[test]
    fn state_of_examples() {
        let t = GroundTruth::e1(3);
        let ts = t.theta_star().clone();
        assert_eq!(state_of(&ts, &t), StatePoint { alpha: 1.0, beta: 0.0 });
        assert_eq!(state_of(&-ts.clone(), &t), StatePoint { alpha: -1.0, beta: 0.0 });
        let th = DVector::from_vec(vec![0.3, 0.4, 0.0]);
        let s = state_of(&th, &t);
        assert!((s.alpha - 0.3).abs() < 1e-15 && (s.beta - 0.4).abs() < 1e-15);
    }

    #[test]
    fn fixed_points_noiseless() {
        let tr = truth(20, 1);
        for kind in AlgorithmKind::ALL {
            let spec = ModelSpec::new(kind.model(), 0.0, 20, 200, 3).unwrap();
            let batch = sample_batch(&spec, &tr, &mut stream(3, 0, 0, Purpose::Batch));
            let out = step(tr.theta_star(), &batch, &AlgorithmSpec::default_for(kind)).unwrap();
            assert!((&out - tr.theta_star()).amax() < 1e-10, "{kind:?}");
            if kind.is_first_order() {
                assert_eq!(&out, tr.theta_star());
            }
        }
    }

    #[test]
    fn sign_equivariance() {
        let tr = truth(10, 2);
        for kind in AlgorithmKind::ALL {
            let spec = ModelSpec::new(kind.model(), 0.1, 10, 80, 4).unwrap();
            let batch = sample_batch(&spec, &tr, &mut stream(4, 0, 0, Purpose::Batch));
            let th = state_init(&tr, 0.4, 0.7, &mut stream(4, 0, 0, Purpose::Init)).unwrap();
            let alg = AlgorithmSpec::default_for(kind);
            let p = step(&th, &batch, &alg).unwrap();
            let m = step(&-th.clone(), &batch, &alg).unwrap();
            assert!((p + m).amax() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn qr_agrees_with_squared_loss_minimizer() {
        let tr = truth(15, 5);
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 0.2, 15, 300, 0).unwrap();
        let batch = sample_batch(&spec, &tr, &mut stream(0, 0, 0, Purpose::Batch));
        let th = state_init(&tr, 0.5, 0.5, &mut stream(0, 0, 0, Purpose::Init)).unwrap();
        let a = step_higher_order(&th, &batch, WeightFunction::AmPr).unwrap();
        let b = normal_equation_step(&th, &batch, WeightFunction::AmPr).unwrap();
        assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let tr = truth(10, 6);
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 0.0, 10, 5, 0).unwrap();
        let batch = sample_batch(&spec, &tr, &mut stream(0, 0, 0, Purpose::Batch));
        let e = step_higher_order(tr.theta_star(), &batch, WeightFunction::AmPr).unwrap_err();
        assert!(matches!(e, Error::RankDeficient { rows: 5, cols: 10, .. }));
        let mut x = DMatrix::from_fn(20, 3, |i, j| (i * 3 + j) as f64);
        x.set_column(2, &x.column(0).clone_owned());
        let batch = Batch { x, y: DVector::from_element(20, 1.0), q: None };
        let e = step_higher_order(&DVector::from_element(3, 1.0), &batch, WeightFunction::AmPr).unwrap_err();
        match e {
            Error::RankDeficient { condition, .. } => assert!(condition > 1e12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn runner_shapes_replay_and_errors() {
        let tr = truth(12, 7);
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 12, 60, 9).unwrap();
        let alg = AlgorithmSpec::default_for(AlgorithmKind::AmPr);
        let th0 = directional_init(&tr, 0.5, &mut stream(9, 0, 0, Purpose::Init)).unwrap();
        assert!(run_trajectory(&spec, &alg, &tr, th0.clone(), 0, 0).is_err());
        let r1 = run_trajectory(&spec, &alg, &tr, th0.clone(), 1, 0).unwrap();
        assert_eq!(r1.entries.len(), 2);
        let a = run_trajectory(&spec, &alg, &tr, th0.clone(), 5, 3).unwrap();
        let b = run_trajectory(&spec, &alg, &tr, th0.clone(), 5, 3).unwrap();
        assert_eq!(a, b);
        for e in &a.entries {
            let s = state_of(&e.theta, &tr);
            assert!((s.alpha - e.state.alpha).abs() < 1e-10 && (s.beta - e.state.beta).abs() < 1e-10);
            assert!(e.state.beta >= 0.0);
        }
        let bad = AlgorithmSpec::default_for(AlgorithmKind::AmMlr);
        assert!(run_trajectory(&spec, &bad, &tr, th0, 2, 0).is_err());
        let small = ModelSpec { n: 4, ..spec };
        let e = run_trajectory(&small, &alg, &tr, tr.theta_star().clone(), 3, 0).unwrap_err();
        assert!(matches!(e, Error::AtIteration { iteration: 1, .. }));
    }

    #[test]
    fn truth_is_fixed_for_all_runs() {
        let tr = truth(10, 8);
        for kind in AlgorithmKind::ALL {
            let spec = ModelSpec::new(kind.model(), 0.0, 10, 100, 1).unwrap();
            let r = run_trajectory(&spec, &AlgorithmSpec::default_for(kind), &tr, tr.theta_star().clone(), 4, 0).unwrap();
            for e in &r.entries {
                assert!(e.d_l2 < 1e-10, "{kind:?} {}", e.d_l2);
            }
        }
    }

    #[test]
    fn d_l2_matches_distance_to_truth_set() {
        let tr = truth(30, 9);
        for (i, (a, b)) in [(0.7, 0.4), (-0.3, 1.1), (0.0, 0.5), (1.2, 0.0)].into_iter().enumerate() {
            let th = state_init(&tr, a, b, &mut stream(9, i as u64, 0, Purpose::Init)).unwrap();
            let e = state_of(&th, &tr);
            let direct = (&th - tr.theta_star()).norm().min((&th + tr.theta_star()).norm());
            assert!((d_l2(e) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn algorithm_spec_rules() {
        assert!(AlgorithmSpec::new(AlgorithmKind::AmPr, Some(0.3)).is_err());
        assert_eq!(AlgorithmSpec::default_for(AlgorithmKind::GdPr).eta, Some(0.5));
        assert!(AlgorithmSpec::new(AlgorithmKind::GdPr, Some(0.0)).is_err());
        assert_eq!(AlgorithmSpec::new(AlgorithmKind::GdPr, Some(0.95)).unwrap().eta, Some(0.95));
        for k in AlgorithmKind::ALL {
            assert_eq!(AlgorithmKind::parse(k.name()).unwrap(), k);
        }
    }
}
