//! Finite-n minimizers of the scalarized auxiliary loss
//! `L̄ₙ(ξ) = ‖Aξ − ω‖/√n − <vₙ, ξ>`, an independent finite-sample predictor
//! of the expanded state.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::oracle::OmegaSpec;
use crate::rng::{stream, Purpose};
use crate::state_evolution::{ExpandedState, StatePoint};

#[derive(Debug, Clone)]
pub struct AoInstance {
    /// `n × 3` matrix `[z₁ | z₂ | γₙ]`.
    pub a: DMatrix<f64>,
    pub omega: DVector<f64>,
    /// `[0, 0, ‖P⊥γ_d‖/√n]`.
    pub v: Vector3<f64>,
    pub d: usize,
}

impl AoInstance {
    pub fn new(a: DMatrix<f64>, omega: DVector<f64>, v: Vector3<f64>, d: usize) -> Result<Self> {
        if a.ncols() != 3 {
            return Err(Error::LengthMismatch { expected: 3, got: a.ncols() });
        }
        if a.nrows() != omega.len() {
            return Err(Error::LengthMismatch { expected: a.nrows(), got: omega.len() });
        }
        Ok(Self { a, omega, v, d })
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// `‖P⊥γ_d‖`, recovered from `vₙ`.
    pub fn gamma_d_perp_norm(&self) -> f64 {
        self.v[2] * (self.n() as f64).sqrt()
    }

    /// Random instance for the weight/model/state in `spec`. `γ_d` is
    /// projected off a two-dimensional subspace, so `‖P⊥γ_d‖² ~ χ²_{d−2}`.
    pub fn sample<R: Rng + ?Sized>(spec: &OmegaSpec, n: usize, d: usize, rng: &mut R) -> Result<Self> {
        if n < 3 || d < 3 {
            return Err(Error::param("n, d", "need n >= 3 and d >= 3"));
        }
        let (al, be) = (spec.state.alpha, spec.state.beta);
        let mut a = DMatrix::<f64>::zeros(n, 3);
        let mut omega = DVector::<f64>::zeros(n);
        for i in 0..n {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let g: f64 = StandardNormal.sample(rng);
            let z3: f64 = StandardNormal.sample(rng);
            let q = match spec.model {
                ModelKind::PhaseRetrieval => 1.0,
                ModelKind::MixtureOfRegressions => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let y = spec.model.link(z1, q) + spec.sigma * z3;
            a[(i, 0)] = z1;
            a[(i, 1)] = z2;
            a[(i, 2)] = g;
            omega[i] = spec.weight.eval(al * z1 + be * z2, y);
        }
        let perp2: f64 = (2..d).map(|_| StandardNormal.sample(rng)).map(|x: f64| x * x).sum();
        let v = Vector3::new(0.0, 0.0, perp2.sqrt() / (n as f64).sqrt());
        Ok(Self { a, omega, v, d })
    }

    /// `sample` on the stream keyed by `(seed, trial)`.
    pub fn sample_keyed(spec: &OmegaSpec, n: usize, d: usize, seed: u64, trial: u64) -> Result<Self> {
        Self::sample(spec, n, d, &mut stream(seed, trial, 0, Purpose::AoInstance))
    }

    /// `L̄ₙ(ξ)` without the positive part.
    pub fn loss(&self, xi: &Vector3<f64>) -> f64 {
        let r = &self.a * xi - &self.omega;
        r.norm() / (self.n() as f64).sqrt() - self.v.dot(xi)
    }

    fn gram(&self) -> Matrix3<f64> {
        let g = self.a.tr_mul(&self.a);
        Matrix3::from_fn(|i, j| g[(i, j)])
    }

    fn at(&self, x: &DVector<f64>) -> Vector3<f64> {
        let g = self.a.tr_mul(x);
        Vector3::new(g[0], g[1], g[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoSolution {
    pub xi: ExpandedState,
    pub tau: f64,
    pub loss: f64,
    /// The loss before clipping at zero was negative.
    pub negative_loss: bool,
}

fn to_vec(x: &ExpandedState) -> Vector3<f64> {
    Vector3::new(x.alpha, x.mu, x.nu)
}

fn from_vec(x: &Vector3<f64>) -> ExpandedState {
    ExpandedState { alpha: x[0], mu: x[1], nu: x[2] }
}

/// Closed-form minimizer `(ξₙ, τₙ)` of the higher-order scalarized loss.
pub fn ho_minimizer(inst: &AoInstance) -> Result<AoSolution> {
    let n = inst.n() as f64;
    let chol = inst.gram().cholesky().ok_or(Error::RankDeficient { rows: inst.n(), cols: 3, condition: f64::INFINITY })?;
    let ls = chol.solve(&inst.at(&inst.omega));
    let resid = &inst.omega - &inst.a * ls;
    let rn = resid.norm();
    if rn <= 1e-12 * inst.omega.norm().max(1.0) {
        return Err(Error::OmegaInSpan { residual: rn });
    }
    let giv = chol.solve(&inst.v);
    let radicand = 1.0 - n * inst.v.dot(&giv);
    if !(radicand > 0.0) {
        return Err(Error::KappaTooSmall { radicand });
    }
    let tau = rn / n.sqrt() / radicand.sqrt();
    let xi = ls + giv * (tau * n);
    let loss = inst.loss(&xi);
    Ok(AoSolution { xi: from_vec(&xi), tau, loss, negative_loss: loss < 0.0 })
}

/// First-order minimizers in closed form.
pub fn fo_minimizer(inst: &AoInstance, state_sharp: StatePoint, eta: f64) -> ExpandedState {
    let n = inst.n() as f64;
    let c = 2.0 * eta / n;
    let p = inst.at(&inst.omega);
    ExpandedState {
        alpha: state_sharp.alpha - c * p[0],
        mu: state_sharp.beta - c * p[1],
        nu: c * (p[2] + inst.gamma_d_perp_norm() * inst.omega.norm()),
    }
}

/// Gradient and Hessian of `L̄ₙ` at `ξ`.
fn derivatives(inst: &AoInstance, gram: &Matrix3<f64>, xi: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let sn = (inst.n() as f64).sqrt();
    let r = &inst.a * xi - &inst.omega;
    let rn = r.norm();
    let atr = inst.at(&r);
    let loss = rn / sn - inst.v.dot(xi);
    let grad = atr / (sn * rn) - inst.v;
    let hess = (gram - atr * atr.transpose() / (rn * rn)) / (sn * rn);
    (loss, grad, hess)
}

fn projected_grad(xi: &Vector3<f64>, g: &Vector3<f64>) -> Vector3<f64> {
    let mut p = *g;
    if xi[2] <= 0.0 && g[2] > 0.0 {
        p[2] = 0.0;
    }
    p
}

/// Direct minimization of `L̄ₙ` over `ℝ² × [0, ∞)` by projected, damped
/// Newton iterations from the origin.
pub fn numeric_3var_check(inst: &AoInstance) -> Result<ExpandedState> {
    const MAX_ITER: usize = 500;
    let gram = inst.gram();
    let mut xi = Vector3::zeros();
    let mut last_pg = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let (f, g, h) = derivatives(inst, &gram, &xi);
        let pg = projected_grad(&xi, &g);
        last_pg = pg.norm();
        if last_pg <= 1e-9 {
            return Ok(from_vec(&xi));
        }
        let fix_nu = xi[2] <= 0.0 && g[2] > 0.0;
        let mut hh = h;
        let mut gg = g;
        if fix_nu {
            for k in 0..3 {
                hh[(2, k)] = 0.0;
                hh[(k, 2)] = 0.0;
            }
            hh[(2, 2)] = 1.0;
            gg[2] = 0.0;
        }
        let mut damping = 0.0;
        let dir = loop {
            let m = hh + Matrix3::identity() * damping;
            if let Some(c) = m.cholesky() {
                break -c.solve(&gg);
            }
            damping = if damping == 0.0 { 1e-10 * hh.norm().max(1.0) } else { damping * 10.0 };
        };
        // Armijo backtracking along the projected path.
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand = xi + dir * t;
            cand[2] = cand[2].max(0.0);
            let fc = inst.loss(&cand);
            if fc <= f + 1e-4 * g.dot(&(cand - xi)) {
                xi = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Newton step no longer decreases at machine precision; accept
            // the point if the gradient is already tiny.
            if last_pg <= 1e-7 {
                return Ok(from_vec(&xi));
            }
            break;
        }
    }
    Err(Error::NotConverged { iterations: MAX_ITER, grad_norm: last_pg })
}

/// Minimum eigenvalue of the Hessian of `L̄ₙ` at `ξ`.
pub fn hessian_min_eigenvalue(inst: &AoInstance, xi: &ExpandedState) -> f64 {
    let (_, _, h) = derivatives(inst, &inst.gram(), &to_vec(xi));
    h.symmetric_eigenvalues().min()
}

/// `τ^gor = sqrt(κ/(κ−1) · (E[Ω²] − E[Z₁Ω]² − E[Z₂Ω]²))`.
pub fn tau_gordon(residual_variance: f64, kappa: f64) -> f64 {
    (kappa / (kappa - 1.0) * residual_variance).sqrt()
}
