//! Monte-Carlo estimates of the Ω-expectations behind every Gordon update.
//!
//! `Ω = ω(α♯Z₁ + β♯Z₂, f(Z₁; Q) + σZ₃)` with `Z₁, Z₂, Z₃` i.i.d. standard
//! normal and `Q` a Rademacher latent. Samples are drawn in fixed-size shards,
//! each from its own keyed stream, and reduced in shard order, so estimates
//! are bit-identical regardless of thread count.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ModelKind, WeightFunction};
use crate::rng::{stream, Purpose};
use crate::state_evolution::{expanded_fo_from_moments, ExpandedState, OmegaMoments, StatePoint};

const SHARD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSpec {
    pub weight: WeightFunction,
    pub model: ModelKind,
    pub sigma: f64,
    pub state: StatePoint,
}

/// Sample means of `(Ω², Z₁Ω, Z₂Ω)` with the covariance of those means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub moments: OmegaMoments,
    /// Standard errors of `(E[Ω²], E[Z₁Ω], E[Z₂Ω])`.
    pub stderr: [f64; 3],
    /// Covariance matrix of the three mean estimates.
    pub cov: [[f64; 3]; 3],
    pub samples: usize,
}

impl OracleEstimate {
    /// Delta-method standard error of a smooth function with the given
    /// gradient in `(E[Ω²], E[Z₁Ω], E[Z₂Ω])`.
    pub fn delta_stderr(&self, grad: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += grad[i] * self.cov[i][j] * grad[j];
            }
        }
        v.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: usize,
    s: [f64; 3],
    ss: [[f64; 3]; 3],
    max_abs: f64,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        for i in 0..3 {
            self.s[i] += o.s[i];
            for j in 0..3 {
                self.ss[i][j] += o.ss[i][j];
            }
        }
        self.max_abs = self.max_abs.max(o.max_abs);
    }
}

fn shard<R: Rng + ?Sized>(spec: &OmegaSpec, count: usize, rng: &mut R) -> Sums {
    let mut acc = Sums { n: count, ..Default::default() };
    let (a, b) = (spec.state.alpha, spec.state.beta);
    for _ in 0..count {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
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
        let om = spec.weight.eval(a * z1 + b * z2, y);
        let v = [om * om, z1 * om, z2 * om];
        for i in 0..3 {
            acc.s[i] += v[i];
            for j in i..3 {
                acc.ss[i][j] += v[i] * v[j];
            }
        }
        acc.max_abs = acc.max_abs.max(om.abs());
    }
    for i in 0..3 {
        for j in 0..i {
            acc.ss[i][j] = acc.ss[j][i];
        }
    }
    acc
}

fn accumulate(spec: &OmegaSpec, samples: usize, seed: u64) -> Result<Sums> {
    if samples < 10_000 {
        return Err(Error::param("samples", format!("need at least 10^4, got {samples}")));
    }
    if !(spec.sigma >= 0.0) {
        return Err(Error::param("sigma", "must be nonnegative"));
    }
    let shards = samples.div_ceil(SHARD);
    let parts: Vec<Sums> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let count = if k + 1 == shards { samples - k * SHARD } else { SHARD };
            shard(spec, count, &mut stream(seed, k as u64, 0, Purpose::Oracle))
        })
        .collect();
    let mut total = Sums::default();
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

fn finish(t: &Sums) -> OracleEstimate {
    let n = t.n as f64;
    let mean = [t.s[0] / n, t.s[1] / n, t.s[2] / n];
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // sample covariance of one draw, divided by n for the mean
            cov[i][j] = (t.ss[i][j] - n * mean[i] * mean[j]) / (n - 1.0) / n;
        }
    }
    OracleEstimate {
        moments: OmegaMoments { e_omega2: mean[0], e_z1_omega: mean[1], e_z2_omega: mean[2] },
        stderr: [cov[0][0].max(0.0).sqrt(), cov[1][1].max(0.0).sqrt(), cov[2][2].max(0.0).sqrt()],
        cov,
        samples: t.n,
    }
}

/// Unbiased Monte-Carlo estimates of `E[Ω²]`, `E[Z₁Ω]`, `E[Z₂Ω]`.
pub fn estimate_expectations(spec: &OmegaSpec, samples: usize, seed: u64) -> Result<OracleEstimate> {
    Ok(finish(&accumulate(spec, samples, seed)?))
}

/// Empirical checks of the light-tail and non-degeneracy assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// `E[Ω²] − E[Z₁Ω]² − E[Z₂Ω]²`.
    pub residual_variance: f64,
    pub residual_variance_stderr: f64,
    pub max_abs_omega: f64,
    /// `max |Ω| / sqrt(2 log N)`; stays O(1) for sub-Gaussian Ω.
    pub tail_ratio: f64,
    pub samples: usize,
}

pub fn verify_assumptions(spec: &OmegaSpec, samples: usize, seed: u64) -> Result<AssumptionReport> {
    if samples < 100_000 {
        return Err(Error::param("samples", format!("need at least 10^5, got {samples}")));
    }
    let t = accumulate(spec, samples, seed)?;
    let est = finish(&t);
    let m = est.moments;
    let grad = [1.0, -2.0 * m.e_z1_omega, -2.0 * m.e_z2_omega];
    Ok(AssumptionReport {
        residual_variance: m.residual_variance(),
        residual_variance_stderr: est.delta_stderr(grad),
        max_abs_omega: t.max_abs,
        tail_ratio: t.max_abs / (2.0 * (samples as f64).ln()).sqrt(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    HigherOrder,
    FirstOrder,
}

/// Expanded Gordon state assembled from an oracle estimate, with
/// delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGordon {
    pub state: ExpandedState,
    /// Standard errors of `(α, μ, ν)`.
    pub stderr: [f64; 3],
    /// `sqrt(μ² + ν²)` and its standard error.
    pub beta: f64,
    pub beta_stderr: f64,
    pub estimate: OracleEstimate,
}

pub fn gordon_from_oracle(
    spec: &OmegaSpec,
    kappa: f64,
    order: Order,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<OracleGordon> {
    if order == Order::HigherOrder && !(kappa > 1.0) {
        return Err(Error::param("kappa", format!("higher-order update needs kappa > 1, got {kappa}")));
    }
    if order == Order::FirstOrder && eta == 0.0 {
        let s = spec.state;
        let est = OracleEstimate {
            moments: OmegaMoments { e_omega2: 0.0, e_z1_omega: 0.0, e_z2_omega: 0.0 },
            stderr: [0.0; 3],
            cov: [[0.0; 3]; 3],
            samples: 0,
        };
        return Ok(OracleGordon {
            state: ExpandedState { alpha: s.alpha, mu: s.beta, nu: 0.0 },
            stderr: [0.0; 3],
            beta: s.beta,
            beta_stderr: 0.0,
            estimate: est,
        });
    }
    let est = estimate_expectations(spec, samples, seed)?;
    let m = est.moments;
    let (a, b) = (m.e_z1_omega, m.e_z2_omega);
    match order {
        Order::HigherOrder => {
            let c = 1.0 / (kappa - 1.0);
            let v = m.residual_variance();
            let v_se = est.delta_stderr([1.0, -2.0 * a, -2.0 * b]);
            if v < 0.0 && v < -4.0 * v_se {
                return Err(Error::NegativeVariance { estimate: v, stderr: v_se });
            }
            let nu = (v.max(0.0) * c).sqrt();
            let nu_se = if nu > 0.0 { v_se * c / (2.0 * nu) } else { (v_se * c).sqrt() };
            let beta = b.hypot(nu);
            let beta_se = if beta > 0.0 {
                est.delta_stderr([c, -2.0 * a * c, 2.0 * b * (1.0 - c)]) / (2.0 * beta)
            } else {
                0.0
            };
            Ok(OracleGordon {
                state: ExpandedState { alpha: a, mu: b, nu },
                stderr: [est.stderr[1], est.stderr[2], nu_se],
                beta,
                beta_stderr: beta_se,
                estimate: est,
            })
        }
        Order::FirstOrder => {
            let state = expanded_fo_from_moments(spec.state, &m, kappa, eta)?;
            let k = 4.0 * eta * eta / kappa;
            let nu_se = if m.e_omega2 > 0.0 {
                2.0 * eta / kappa.sqrt() * est.stderr[0] / (2.0 * m.e_omega2.sqrt())
            } else {
                0.0
            };
            let beta = state.beta();
            let beta_se =
                if beta > 0.0 { est.delta_stderr([k, 0.0, -4.0 * eta * state.mu]) / (2.0 * beta) } else { 0.0 };
            Ok(OracleGordon {
                state,
                stderr: [2.0 * eta * est.stderr[1], 2.0 * eta * est.stderr[2], nu_se],
                beta,
                beta_stderr: beta_se,
                estimate: est,
            })
        }
    }
}
