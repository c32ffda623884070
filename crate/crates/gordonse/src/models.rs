//! Synthetic data for the two observation models, the four weight
//! functions, and initialization schemes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Observation model: `y = |<x, θ*>| + ε` or `y = q·<x, θ*> + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    PhaseRetrieval,
    MixtureOfRegressions,
}

impl ModelKind {
    /// Noiseless link `f(t; q)`.
    #[inline]
    pub fn link(self, t: f64, q: f64) -> f64 {
        match self {
            ModelKind::PhaseRetrieval => t.abs(),
            ModelKind::MixtureOfRegressions => q * t,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PhaseRetrieval => "phase_retrieval",
            ModelKind::MixtureOfRegressions => "mixture_of_regressions",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phase_retrieval" | "pr" => Ok(ModelKind::PhaseRetrieval),
            "mixture_of_regressions" | "mlr" | "mixture" => Ok(ModelKind::MixtureOfRegressions),
            other => Err(Error::param("model.kind", format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub sigma: f64,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, sigma: f64, d: usize, n: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "must be at least 1"));
        }
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", format!("must be finite and nonnegative, got {sigma}")));
        }
        Ok(Self { kind, sigma, d, n, seed })
    }

    /// Per-iteration oversampling ratio n/d.
    pub fn kappa(&self) -> f64 {
        self.n as f64 / self.d as f64
    }
}

/// Unit-norm ground truth θ*.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta_star: DVector<f64>,
}

impl GroundTruth {
    pub fn new(theta_star: DVector<f64>) -> Result<Self> {
        let norm = theta_star.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::param("theta_star", format!("norm must be 1, got {norm}")));
        }
        Ok(Self { theta_star })
    }

    /// Uniform draw from the unit sphere.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        let u = random_sphere_init(d, 1.0, rng)?;
        Ok(Self { theta_star: u })
    }

    /// First standard basis vector; convenient for tests.
    pub fn e1(d: usize) -> Self {
        let mut v = DVector::zeros(d);
        v[0] = 1.0;
        Self { theta_star: v }
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn d(&self) -> usize {
        self.theta_star.len()
    }
}

/// One batch of fresh observations.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Latent ±1 labels (mixtures only); never read by the algorithms.
    pub q: Option<Vec<f64>>,
}

impl Batch {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Sign with `sign(0) = 1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Weight function ω(x, y) defining one step of an update.
#[derive(Debug, Clone, Copy)]
pub enum WeightFunction {
    /// sign(x)·y
    AmPr,
    /// x − sign(x)·y
    GdPr,
    /// sign(xy)·y
    AmMlr,
    /// x − sign(xy)·y
    SubgradMlr,
    /// Arbitrary weight; only the oracle can evaluate its Gordon update.
    Custom(fn(f64, f64) -> f64),
}

impl PartialEq for WeightFunction {
    fn eq(&self, other: &Self) -> bool {
        use WeightFunction::*;
        match (self, other) {
            (AmPr, AmPr) | (GdPr, GdPr) | (AmMlr, AmMlr) | (SubgradMlr, SubgradMlr) => true,
            (Custom(a), Custom(b)) => std::ptr::fn_addr_eq(*a, *b),
            _ => false,
        }
    }
}

impl WeightFunction {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            WeightFunction::AmPr => sign(x) * y,
            WeightFunction::GdPr => x - sign(x) * y,
            WeightFunction::AmMlr => sign(x * y) * y,
            WeightFunction::SubgradMlr => x - sign(x * y) * y,
            WeightFunction::Custom(f) => f(x, y),
        }
    }

    /// The higher-order counterpart of a first-order weight and vice versa
    /// (ω_FO = x − ω_HO). `None` for custom weights.
    pub fn dual(&self) -> Option<WeightFunction> {
        match self {
            WeightFunction::AmPr => Some(WeightFunction::GdPr),
            WeightFunction::GdPr => Some(WeightFunction::AmPr),
            WeightFunction::AmMlr => Some(WeightFunction::SubgradMlr),
            WeightFunction::SubgradMlr => Some(WeightFunction::AmMlr),
            WeightFunction::Custom(_) => None,
        }
    }
}

/// Draw a fresh batch of `spec.n` observations.
pub fn sample_batch<R: Rng + ?Sized>(spec: &ModelSpec, truth: &GroundTruth, rng: &mut R) -> Batch {
    let (n, d) = (spec.n, truth.d());
    let x = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    let t = &x * truth.theta_star();
    let q: Option<Vec<f64>> = match spec.kind {
        ModelKind::PhaseRetrieval => None,
        ModelKind::MixtureOfRegressions => {
            Some((0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        }
    };
    let y = DVector::from_fn(n, |i, _| {
        let qi = q.as_ref().map_or(1.0, |q| q[i]);
        let eps: f64 = StandardNormal.sample(rng);
        spec.kind.link(t[i], qi) + spec.sigma * eps
    });
    Batch { x, y, q }
}

fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));
        let norm = g.norm();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// `scale·u` with `u` uniform on the unit sphere in ℝ^d.
pub fn random_sphere_init<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param("scale", format!("must be positive, got {scale}")));
    }
    Ok(unit_sphere(d, rng) * scale)
}

/// `sqrt(mean y²)·u` with `u` uniform on the sphere.
pub fn norm_matched_init<R: Rng + ?Sized>(batch: &Batch, rng: &mut R) -> DVector<f64> {
    let d = batch.x.ncols();
    let scale = (batch.y.norm_squared() / batch.n().max(1) as f64).sqrt();
    unit_sphere(d, rng) * scale
}

/// `α₀·θ* + sqrt(1−α₀²)·v` with `v` a random unit vector orthogonal to θ*.
pub fn directional_init<R: Rng + ?Sized>(truth: &GroundTruth, alpha0: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&alpha0) {
        return Err(Error::param("alpha0", format!("must lie in [0, 1], got {alpha0}")));
    }
    state_init(truth, alpha0, (1.0 - alpha0 * alpha0).sqrt(), rng)
}

/// Iterate with prescribed state `(alpha, beta)`; the perpendicular
/// direction is uniform on the orthogonal complement of θ*.
pub fn state_init<R: Rng + ?Sized>(truth: &GroundTruth, alpha: f64, beta: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::param("beta", format!("must be nonnegative, got {beta}")));
    }
    let ts = truth.theta_star();
    if ts.len() < 2 {
        return if beta == 0.0 {
            Ok(ts * alpha)
        } else {
            Err(Error::param("d", "need d >= 2 for a nonzero perpendicular component"))
        };
    }
    let v = loop {
        let g = DVector::<f64>::from_fn(ts.len(), |_, _| StandardNormal.sample(rng));
        let p = &g - ts * ts.dot(&g);
        let norm = p.norm();
        if norm > 1e-8 {
            break p / norm;
        }
    };
    Ok(ts * alpha + v * beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn rng() -> rand_chacha::ChaCha8Rng {
        stream(11, 0, 0, Purpose::Grid)
    }

    #[test]
    fn noiseless_links() {
        let truth = GroundTruth::e1(3);
        let pr = ModelSpec::new(ModelKind::PhaseRetrieval, 0.0, 3, 50, 0).unwrap();
        let b = sample_batch(&pr, &truth, &mut rng());
        for i in 0..50 {
            assert_eq!(b.y[i], b.x[(i, 0)].abs());
        }
        let mlr = ModelSpec { kind: ModelKind::MixtureOfRegressions, ..pr };
        let b = sample_batch(&mlr, &truth, &mut rng());
        let q = b.q.as_ref().unwrap();
        for i in 0..50 {
            assert_eq!(b.y[i], q[i] * b.x[(i, 0)]);
            assert_eq!(b.y[i].abs(), b.x[(i, 0)].abs());
        }
        assert!(q.iter().any(|&v| v < 0.0) && q.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn batch_dims_figure_one() {
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 1e-8, 600, 12000, 0).unwrap();
        let truth = GroundTruth::random(600, &mut rng()).unwrap();
        let b = sample_batch(&spec, &truth, &mut rng());
        assert_eq!(b.x.shape(), (12000, 600));
        assert_eq!(b.y.len(), 12000);
        assert!(b.q.is_none());
    }

    #[test]
    fn covariates_look_gaussian() {
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 8, 20000, 0).unwrap();
        let truth = GroundTruth::e1(8);
        let b = sample_batch(&spec, &truth, &mut rng());
        let n = b.n() as f64;
        for j in 0..8 {
            let c = b.x.column(j);
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 5.0 / n.sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "var {var}");
        }
    }

    #[test]
    fn weight_relation_and_sign_convention() {
        let grid: Vec<f64> = (0..100).map(|i| -3.0 + 6.0 * i as f64 / 99.0).collect();
        for &x in &grid {
            for &y in &grid {
                for w in [WeightFunction::AmPr, WeightFunction::AmMlr] {
                    let fo = w.dual().unwrap();
                    assert_eq!(fo.eval(x, y), x - w.eval(x, y));
                }
            }
        }
        assert_eq!(WeightFunction::AmPr.eval(0.0, 2.5), 2.5);
        assert_eq!(WeightFunction::AmMlr.eval(0.0, 2.5), 2.5);
        assert_eq!(sign(0.0), 1.0);
    }

    #[test]
    fn sphere_init_norms_and_errors() {
        let u = random_sphere_init(3, 1.0, &mut rng()).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-14);
        let u = random_sphere_init(2, 0.5, &mut rng()).unwrap();
        assert!((u.norm() - 0.5).abs() < 1e-14);
        assert!(random_sphere_init(3, 0.0, &mut rng()).is_err());
        assert!(random_sphere_init(3, -1.0, &mut rng()).is_err());
    }

    #[test]
    fn sphere_init_angle_lower_bound() {
        // P{α/β ≥ (50√d)⁻¹} ≥ 0.95 for a uniform initialization.
        let d = 130;
        let truth = GroundTruth::e1(d);
        let mut r = rng();
        let thresh = 1.0 / (50.0 * (d as f64).sqrt());
        let hits = (0..10_000)
            .filter(|_| {
                let th = random_sphere_init(d, 1.0, &mut r).unwrap();
                let a = th.dot(truth.theta_star()).abs();
                let b = (th.norm_squared() - a * a).max(0.0).sqrt();
                a / b >= thresh
            })
            .count();
        assert!(hits >= 9_500, "{hits}");
    }

    #[test]
    fn norm_matched_scales() {
        let b = Batch { x: DMatrix::from_element(5, 4, 1.0), y: DVector::zeros(5), q: None };
        assert_eq!(norm_matched_init(&b, &mut rng()).norm(), 0.0);
        let b = Batch { x: DMatrix::from_element(5, 4, 1.0), y: DVector::from_element(5, 1.0), q: None };
        assert!((norm_matched_init(&b, &mut rng()).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn norm_matched_concentrates() {
        let spec = ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 200, 4000, 0).unwrap();
        let truth = GroundTruth::random(200, &mut rng()).unwrap();
        let mut total = 0.0;
        for k in 0..100 {
            let mut r = stream(5, k, 0, Purpose::Batch);
            let b = sample_batch(&spec, &truth, &mut r);
            total += norm_matched_init(&b, &mut r).norm_squared();
        }
        assert!((total / 100.0 - 1.01).abs() < 0.05);
    }

    #[test]
    fn directional_states() {
        let truth = GroundTruth::random(50, &mut rng()).unwrap();
        let ts = truth.theta_star();
        let t = directional_init(&truth, 1.0, &mut rng()).unwrap();
        assert!((t - ts).norm() < 1e-15);
        for (a0, b0) in [(0.2, 0.979796), (0.8, 0.6)] {
            let t = directional_init(&truth, a0, &mut rng()).unwrap();
            let a = t.dot(ts);
            let b = (&t - ts * a).norm();
            assert!((a - a0).abs() < 1e-12);
            assert!((b - b0).abs() < 1e-6);
        }
        assert!(directional_init(&truth, 1.1, &mut rng()).is_err());
        assert!(directional_init(&truth, -0.1, &mut rng()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(ModelKind::PhaseRetrieval, -0.1, 3, 3, 0).is_err());
        assert!(ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 0, 3, 0).is_err());
        assert!(ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 3, 0, 0).is_err());
        let s = ModelSpec::new(ModelKind::PhaseRetrieval, 0.1, 4, 10, 0).unwrap();
        assert_eq!(s.kappa(), 2.5);
        assert!(GroundTruth::new(DVector::from_vec(vec![1.0, 1.0])).is_err());
    }
}
