//! Deterministic state evolution: closed-form Gordon and population maps for
//! the four algorithms, and the expanded three-dimensional updates.
//!
//! All maps act on `|α|` and restore the sign of `α` afterwards; every update
//! here is equivariant under `θ → −θ`.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{Error, Result};
use crate::iterates::AlgorithmKind;
use crate::models::{ModelKind, WeightFunction};

/// Two-dimensional state `(α, β) = (<θ, θ*>, ‖P⊥θ‖)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub alpha: f64,
    pub beta: f64,
}

impl StatePoint {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::param("beta", format!("must be nonnegative, got {beta}")));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::param("state", "must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    /// Angle `atan2(β, |α|) ∈ [0, π/2]`.
    pub fn phi(&self) -> f64 {
        self.beta.atan2(self.alpha.abs())
    }

    /// `β/|α|`, `+∞` at `α = 0`.
    pub fn rho(&self) -> f64 {
        if self.alpha == 0.0 {
            f64::INFINITY
        } else {
            self.beta / self.alpha.abs()
        }
    }

    fn sgn_alpha(&self) -> f64 {
        if self.alpha < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Expanded state `(α, μ, ν)` with `β = sqrt(μ² + ν²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandedState {
    pub alpha: f64,
    pub mu: f64,
    pub nu: f64,
}

impl ExpandedState {
    pub fn beta(&self) -> f64 {
        self.mu.hypot(self.nu)
    }

    pub fn to_state(&self) -> StatePoint {
        StatePoint { alpha: self.alpha, beta: self.beta() }
    }
}

/// The three expectations `E[Ω²]`, `E[Z₁Ω]`, `E[Z₂Ω]` that determine every
/// Gordon update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaMoments {
    pub e_omega2: f64,
    pub e_z1_omega: f64,
    pub e_z2_omega: f64,
}

impl OmegaMoments {
    /// `E[Ω²] − E[Z₁Ω]² − E[Z₂Ω]²`.
    pub fn residual_variance(&self) -> f64 {
        self.e_omega2 - self.e_z1_omega.powi(2) - self.e_z2_omega.powi(2)
    }
}

// ---------------------------------------------------------------------------
// Scalar maps.

/// `A_σ(ρ)`, `B_σ(ρ)` evaluated literally from ρ.
pub fn ab_shorthand(rho: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let r = (rho * rho + s2 + s2 * rho * rho).sqrt();
    (FRAC_2_PI * r.atan(), FRAC_2_PI * r / (1.0 + rho * rho))
}

/// Phase-retrieval parallel map `F = 1 − (2φ − sin 2φ)/π`.
pub fn f_pr(s: StatePoint) -> f64 {
    let phi = s.phi();
    1.0 - (2.0 * phi - (2.0 * phi).sin()) / PI
}

/// Phase-retrieval population perpendicular map `(2/π) sin²φ`.
pub fn p_pr(s: StatePoint) -> f64 {
    FRAC_2_PI * s.phi().sin().powi(2)
}

// (A_σ, B_σ·cos²-free, ρB_σ) in angle form, finite at α = 0.
fn mlr_parts(s: StatePoint, sigma: f64) -> (f64, f64, f64) {
    let phi = s.phi();
    let (sn, c) = phi.sin_cos();
    let s2 = sigma * sigma;
    // r·cos φ with r = sqrt(ρ² + σ² + σ²ρ²)
    let rc = (sn * sn * (1.0 + s2) + s2 * c * c).sqrt();
    (FRAC_2_PI * rc.atan2(c), FRAC_2_PI * rc * c, FRAC_2_PI * rc * sn)
}

/// Mixture parallel map `F_σ = 1 − A_σ(ρ) + B_σ(ρ)`.
pub fn f_mlr(s: StatePoint, sigma: f64) -> f64 {
    let (a, b, _) = mlr_parts(s, sigma);
    1.0 - a + b
}

/// Mixture population perpendicular map `ρ·B_σ(ρ)`.
pub fn p_mlr(s: StatePoint, sigma: f64) -> f64 {
    mlr_parts(s, sigma).2
}

fn inv_km1(kappa: f64) -> f64 {
    if kappa.is_infinite() {
        0.0
    } else {
        1.0 / (kappa - 1.0)
    }
}

fn inv_k(kappa: f64) -> f64 {
    if kappa.is_infinite() {
        0.0
    } else {
        1.0 / kappa
    }
}

/// Higher-order Gordon β: `sqrt(P² + (1 + σ² − F² − P²)/(κ−1))`.
fn ho_beta(f: f64, p: f64, sigma: f64, kappa: f64) -> f64 {
    (p * p + (1.0 - f * f - p * p + sigma * sigma) * inv_km1(kappa)).sqrt()
}

/// First-order Gordon `(α⁺, β⁺)` with stepsize η.
fn fo_pair(s: StatePoint, f: f64, p: f64, sigma: f64, kappa: f64, eta: f64) -> (f64, f64) {
    let a = s.alpha.abs();
    let b = s.beta;
    let alpha = (1.0 - 2.0 * eta) * a + 2.0 * eta * f;
    let mu = (1.0 - 2.0 * eta) * b + 2.0 * eta * p;
    let e2 = a * a + b * b - 2.0 * a * f - 2.0 * b * p + 1.0 + sigma * sigma;
    (alpha, (mu * mu + 4.0 * eta * eta * inv_k(kappa) * e2).sqrt())
}

/// `G`: Gordon β of alternating minimization for phase retrieval.
pub fn big_g_pr(s: StatePoint, sigma: f64, kappa: f64) -> f64 {
    ho_beta(f_pr(s), p_pr(s), sigma, kappa)
}

/// `g`: Gordon β of subgradient descent for phase retrieval at η = 1/2.
pub fn small_g_pr(s: StatePoint, sigma: f64, kappa: f64) -> f64 {
    fo_pair(s, f_pr(s), p_pr(s), sigma, kappa, 0.5).1
}

/// `G_σ`: Gordon β of alternating minimization for mixtures.
pub fn big_g_mlr(s: StatePoint, sigma: f64, kappa: f64) -> f64 {
    ho_beta(f_mlr(s, sigma), p_mlr(s, sigma), sigma, kappa)
}

/// `g_σ`: Gordon β of the subgradient method for mixtures at η = 1/2.
pub fn small_g_mlr(s: StatePoint, sigma: f64, kappa: f64) -> f64 {
    fo_pair(s, f_mlr(s, sigma), p_mlr(s, sigma), sigma, kappa, 0.5).1
}

// ---------------------------------------------------------------------------
// Two-dimensional operators.

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param("sigma", format!("must be finite and nonnegative, got {sigma}")))
    }
}

fn check_kappa_ho(kappa: f64) -> Result<()> {
    if kappa > 1.0 {
        Ok(())
    } else {
        Err(Error::param("kappa", format!("higher-order Gordon update needs kappa > 1, got {kappa}")))
    }
}

fn check_kappa_fo(kappa: f64) -> Result<()> {
    if kappa > 0.0 {
        Ok(())
    } else {
        Err(Error::param("kappa", format!("must be positive, got {kappa}")))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("eta", format!("must be finite and nonnegative, got {eta}")))
    }
}

/// True when the first-order formulas are used outside `η ≤ 1/2`, where
/// they are not known to be exact.
pub fn eta_advisory(eta: f64) -> bool {
    eta > 0.5
}

pub fn gordon_am_pr(s: StatePoint, sigma: f64, kappa: f64) -> Result<StatePoint> {
    check_sigma(sigma)?;
    check_kappa_ho(kappa)?;
    Ok(StatePoint { alpha: s.sgn_alpha() * f_pr(s), beta: big_g_pr(s, sigma, kappa) })
}

pub fn gordon_gd_pr(s: StatePoint, sigma: f64, kappa: f64, eta: f64) -> Result<StatePoint> {
    check_sigma(sigma)?;
    check_kappa_fo(kappa)?;
    check_eta(eta)?;
    let (a, b) = fo_pair(s, f_pr(s), p_pr(s), sigma, kappa, eta);
    Ok(StatePoint { alpha: s.sgn_alpha() * a, beta: b })
}

pub fn gordon_am_mlr(s: StatePoint, sigma: f64, kappa: f64) -> Result<StatePoint> {
    check_sigma(sigma)?;
    check_kappa_ho(kappa)?;
    Ok(StatePoint { alpha: s.sgn_alpha() * f_mlr(s, sigma), beta: big_g_mlr(s, sigma, kappa) })
}

pub fn gordon_subgrad_mlr(s: StatePoint, sigma: f64, kappa: f64, eta: f64) -> Result<StatePoint> {
    check_sigma(sigma)?;
    check_kappa_fo(kappa)?;
    check_eta(eta)?;
    let (a, b) = fo_pair(s, f_mlr(s, sigma), p_mlr(s, sigma), sigma, kappa, eta);
    Ok(StatePoint { alpha: s.sgn_alpha() * a, beta: b })
}

/// Infinite-sample limit of the Gordon update. For η > 1/2 the perpendicular
/// component is reported as a norm, i.e. `|(1−2η)β + 2ηP|`.
pub fn population(alg: AlgorithmKind, s: StatePoint, sigma: f64, eta: f64) -> Result<StatePoint> {
    check_sigma(sigma)?;
    check_eta(eta)?;
    let (f, p) = match alg.model() {
        ModelKind::PhaseRetrieval => (f_pr(s), p_pr(s)),
        ModelKind::MixtureOfRegressions => (f_mlr(s, sigma), p_mlr(s, sigma)),
    };
    let (a, b) = if alg.is_first_order() {
        ((1.0 - 2.0 * eta) * s.alpha.abs() + 2.0 * eta * f, ((1.0 - 2.0 * eta) * s.beta + 2.0 * eta * p).abs())
    } else {
        (f, p)
    };
    Ok(StatePoint { alpha: s.sgn_alpha() * a, beta: b })
}

// ---------------------------------------------------------------------------
// Expanded updates.

/// Closed-form Ω-moments for the four named weights paired with their model.
pub fn closed_form_moments(w: WeightFunction, model: ModelKind, s: StatePoint, sigma: f64) -> Result<OmegaMoments> {
    check_sigma(sigma)?;
    let (f, p, first_order) = match (w, model) {
        (WeightFunction::AmPr, ModelKind::PhaseRetrieval) => (f_pr(s), p_pr(s), false),
        (WeightFunction::GdPr, ModelKind::PhaseRetrieval) => (f_pr(s), p_pr(s), true),
        (WeightFunction::AmMlr, ModelKind::MixtureOfRegressions) => (f_mlr(s, sigma), p_mlr(s, sigma), false),
        (WeightFunction::SubgradMlr, ModelKind::MixtureOfRegressions) => (f_mlr(s, sigma), p_mlr(s, sigma), true),
        _ => return Err(Error::NoClosedForm),
    };
    let (a, b) = (s.alpha.abs(), s.beta);
    let ho = OmegaMoments { e_omega2: 1.0 + sigma * sigma, e_z1_omega: f, e_z2_omega: p };
    let m = if first_order {
        // ω_FO = x − ω_HO with x = αZ₁ + βZ₂
        OmegaMoments {
            e_omega2: a * a + b * b - 2.0 * a * f - 2.0 * b * p + ho.e_omega2,
            e_z1_omega: a - f,
            e_z2_omega: b - p,
        }
    } else {
        ho
    };
    Ok(OmegaMoments { e_z1_omega: s.sgn_alpha() * m.e_z1_omega, ..m })
}

/// Higher-order expanded update from given moments.
pub fn expanded_ho_from_moments(m: &OmegaMoments, kappa: f64) -> Result<ExpandedState> {
    check_kappa_ho(kappa)?;
    let v = m.residual_variance();
    if v < 0.0 {
        return Err(Error::NegativeVariance { estimate: v, stderr: 0.0 });
    }
    Ok(ExpandedState { alpha: m.e_z1_omega, mu: m.e_z2_omega, nu: (v * inv_km1(kappa)).sqrt() })
}

/// First-order expanded update from given moments.
pub fn expanded_fo_from_moments(s_sharp: StatePoint, m: &OmegaMoments, kappa: f64, eta: f64) -> Result<ExpandedState> {
    check_kappa_fo(kappa)?;
    check_eta(eta)?;
    Ok(ExpandedState {
        alpha: s_sharp.alpha - 2.0 * eta * m.e_z1_omega,
        mu: s_sharp.beta - 2.0 * eta * m.e_z2_omega,
        nu: 2.0 * eta * (inv_k(kappa) * m.e_omega2.max(0.0)).sqrt(),
    })
}

pub fn gordon_expanded_ho(s_sharp: StatePoint, w: WeightFunction, model: ModelKind, sigma: f64, kappa: f64) -> Result<ExpandedState> {
    let m = closed_form_moments(w, model, s_sharp, sigma)?;
    expanded_ho_from_moments(&m, kappa)
}

pub fn gordon_expanded_fo(
    s_sharp: StatePoint,
    w: WeightFunction,
    model: ModelKind,
    sigma: f64,
    kappa: f64,
    eta: f64,
) -> Result<ExpandedState> {
    let m = closed_form_moments(w, model, s_sharp, sigma)?;
    expanded_fo_from_moments(s_sharp, &m, kappa, eta)
}

// ---------------------------------------------------------------------------
// Operators and recursion.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeKind {
    Gordon,
    Population,
}

/// A state-evolution operator `ℝ² → ℝ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOperator {
    pub alg: AlgorithmKind,
    pub kind: SeKind,
    pub sigma: f64,
    pub kappa: f64,
    pub eta: f64,
}

impl SeOperator {
    pub fn gordon(alg: AlgorithmKind, sigma: f64, kappa: f64, eta: f64) -> Self {
        Self { alg, kind: SeKind::Gordon, sigma, kappa, eta }
    }

    pub fn population(alg: AlgorithmKind, sigma: f64, eta: f64) -> Self {
        Self { alg, kind: SeKind::Population, sigma, kappa: f64::INFINITY, eta }
    }

    /// Set when a first-order operator is evaluated with η > 1/2.
    pub fn advisory(&self) -> bool {
        self.alg.is_first_order() && eta_advisory(self.eta)
    }

    pub fn apply(&self, s: StatePoint) -> Result<StatePoint> {
        match self.kind {
            SeKind::Population => population(self.alg, s, self.sigma, self.eta),
            SeKind::Gordon => match self.alg {
                AlgorithmKind::AmPr => gordon_am_pr(s, self.sigma, self.kappa),
                AlgorithmKind::GdPr => gordon_gd_pr(s, self.sigma, self.kappa, self.eta),
                AlgorithmKind::AmMlr => gordon_am_mlr(s, self.sigma, self.kappa),
                AlgorithmKind::SubgradMlr => gordon_subgrad_mlr(s, self.sigma, self.kappa, self.eta),
            },
        }
    }
}

/// `[s0, S(s0), …, S^T(s0)]`.
pub fn iterate_se(op: &SeOperator, s0: StatePoint, t: usize) -> Result<Vec<StatePoint>> {
    let mut out = Vec::with_capacity(t + 1);
    out.push(s0);
    for i in 0..t {
        let next = op.apply(out[i]).map_err(|e| e.at_iteration(i + 1))?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [AlgorithmKind; 4] =
        [AlgorithmKind::AmPr, AlgorithmKind::GdPr, AlgorithmKind::AmMlr, AlgorithmKind::SubgradMlr];

    fn sp(a: f64, b: f64) -> StatePoint {
        StatePoint::new(a, b).unwrap()
    }

    fn grid() -> Vec<StatePoint> {
        let mut g = Vec::new();
        for i in 0..32 {
            for j in 0..32 {
                g.push(sp(1.5 * i as f64 / 31.0, 1.5 * j as f64 / 31.0));
            }
        }
        g
    }

    #[test]
    fn am_pr_examples() {
        let inf = f64::INFINITY;
        assert_eq!(gordon_am_pr(sp(1.0, 0.0), 0.0, inf).unwrap(), sp(1.0, 0.0));
        let s = gordon_am_pr(sp(1.0, 0.0), 0.3, 11.0).unwrap();
        assert!((s.alpha - 1.0).abs() < 1e-15 && (s.beta - 0.009f64.sqrt()).abs() < 1e-15);
        let s = gordon_am_pr(sp(0.0, 1.0), 0.0, inf).unwrap();
        assert!(s.alpha.abs() < 1e-15 && (s.beta - 2.0 / PI).abs() < 1e-15);
        let s = gordon_am_pr(sp(0.6, 0.8), 0.0, inf).unwrap();
        assert!((s.alpha - 0.715243).abs() < 5e-7, "{}", s.alpha);
        assert!((s.beta - 0.40744).abs() < 5e-6, "{}", s.beta);
        assert!(gordon_am_pr(sp(0.6, 0.8), 0.0, 1.0).is_err());
        assert!(gordon_am_mlr(sp(0.6, 0.8), 0.0, 0.5).is_err());
    }

    #[test]
    fn am_mlr_closed_value() {
        let s = gordon_am_mlr(sp(1.0, 0.0), 1.0, f64::INFINITY).unwrap();
        // A₁(0) = 1/2, B₁(0) = 2/π
        assert!((s.alpha - (0.5 + 2.0 / PI)).abs() < 1e-14);
        assert!((s.alpha - 1.13662).abs() < 5e-6);
        assert_eq!(population(AlgorithmKind::AmMlr, sp(1.0, 0.0), 0.0, 0.5).unwrap(), sp(1.0, 0.0));
    }

    #[test]
    fn angle_form_matches_literal_shorthand() {
        for s in grid().into_iter().filter(|s| s.alpha > 0.0) {
            for sigma in [0.0, 0.1, 0.5, 1.0] {
                let (a, b) = ab_shorthand(s.rho(), sigma);
                assert!((f_mlr(s, sigma) - (1.0 - a + b)).abs() < 1e-13);
                assert!((p_mlr(s, sigma) - s.rho() * b).abs() < 1e-13);
            }
        }
        // α = 0 limits
        let s = sp(0.0, 0.7);
        assert!(f_mlr(s, 0.3).abs() < 1e-15);
        assert!((p_mlr(s, 0.3) - FRAC_2_PI * 1.09f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn population_limit_and_exact_zeroing() {
        for s in grid() {
            for alg in ALL {
                for sigma in [0.0, 0.1] {
                    let pop = population(alg, s, sigma, 0.5).unwrap();
                    let zeroed = SeOperator::gordon(alg, sigma, f64::INFINITY, 0.5).apply(s).unwrap();
                    assert_eq!(pop, zeroed, "{alg:?} {s:?}");
                    let big = SeOperator::gordon(alg, sigma, 1e9, 0.5).apply(s).unwrap();
                    assert!((big.alpha - pop.alpha).abs() < 1e-4 && (big.beta - pop.beta).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn half_step_coincidence() {
        for s in grid() {
            for (ho, fo) in [(AlgorithmKind::AmPr, AlgorithmKind::GdPr), (AlgorithmKind::AmMlr, AlgorithmKind::SubgradMlr)] {
                let a = population(ho, s, 0.1, 0.5).unwrap();
                let b = population(fo, s, 0.1, 0.5).unwrap();
                assert!((a.alpha - b.alpha).abs() <= 1e-12 && (a.beta - b.beta).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_models_coincide() {
        for s in grid() {
            let a = gordon_am_pr(s, 0.0, 20.0).unwrap();
            let b = gordon_am_mlr(s, 0.0, 20.0).unwrap();
            assert!((a.alpha - b.alpha).abs() <= 1e-12 && (a.beta - b.beta).abs() <= 1e-12);
            let a = gordon_gd_pr(s, 0.0, 20.0, 0.3).unwrap();
            let b = gordon_subgrad_mlr(s, 0.0, 20.0, 0.3).unwrap();
            assert!((a.alpha - b.alpha).abs() <= 1e-12 && (a.beta - b.beta).abs() <= 1e-12);
        }
    }

    #[test]
    fn expanded_reconstruction() {
        for s in grid() {
            for sigma in [0.0, 0.1] {
                let e = gordon_expanded_ho(s, WeightFunction::AmPr, ModelKind::PhaseRetrieval, sigma, 20.0).unwrap();
                let g = gordon_am_pr(s, sigma, 20.0).unwrap();
                assert!((e.alpha - g.alpha).abs() <= 1e-12 && (e.beta() - g.beta).abs() <= 1e-12);
                let e = gordon_expanded_fo(s, WeightFunction::SubgradMlr, ModelKind::MixtureOfRegressions, sigma, 20.0, 0.5)
                    .unwrap();
                let g = gordon_subgrad_mlr(s, sigma, 20.0, 0.5).unwrap();
                assert!((e.alpha - g.alpha).abs() <= 1e-12 && (e.beta() - g.beta).abs() <= 1e-12);
            }
        }
        let e = gordon_expanded_ho(sp(0.0, 1.0), WeightFunction::AmPr, ModelKind::PhaseRetrieval, 0.0, 2.0).unwrap();
        assert!(e.alpha.abs() < 1e-15);
        assert!((e.mu - 2.0 / PI).abs() < 1e-15);
        assert!((e.nu - (1.0 - 4.0 / (PI * PI)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn expanded_fo_trivial_cases() {
        let e = gordon_expanded_fo(sp(1.0, 0.0), WeightFunction::GdPr, ModelKind::PhaseRetrieval, 0.0, 5.0, 0.5).unwrap();
        assert_eq!(e, ExpandedState { alpha: 1.0, mu: 0.0, nu: 0.0 });
        let e = gordon_expanded_fo(sp(0.6, 0.8), WeightFunction::GdPr, ModelKind::PhaseRetrieval, 0.1, 5.0, 0.0).unwrap();
        assert_eq!(e, ExpandedState { alpha: 0.6, mu: 0.8, nu: 0.0 });
        let m = closed_form_moments(WeightFunction::AmPr, ModelKind::PhaseRetrieval, sp(0.3, 0.2), 0.3).unwrap();
        assert_eq!(m.e_omega2, 1.09);
        assert_eq!(
            closed_form_moments(WeightFunction::AmPr, ModelKind::MixtureOfRegressions, sp(0.3, 0.2), 0.3),
            Err(Error::NoClosedForm)
        );
    }

    #[test]
    fn sign_reflection() {
        for alg in ALL {
            let op = SeOperator::gordon(alg, 0.1, 20.0, 0.5);
            let p = op.apply(sp(0.6, 0.3)).unwrap();
            let m = op.apply(sp(-0.6, 0.3)).unwrap();
            assert_eq!(p.alpha, -m.alpha);
            assert_eq!(p.beta, m.beta);
        }
    }

    #[test]
    fn recursion_lengths_and_advisory() {
        let op = SeOperator::gordon(AlgorithmKind::AmPr, 0.0, 20.0, 0.5);
        assert_eq!(iterate_se(&op, sp(0.9, 0.1), 0).unwrap(), vec![sp(0.9, 0.1)]);
        assert_eq!(iterate_se(&op, sp(0.9, 0.1), 7).unwrap().len(), 8);
        assert!(!op.advisory());
        assert!(SeOperator::gordon(AlgorithmKind::GdPr, 0.0, 10.0, 0.95).advisory());
        assert!(!SeOperator::gordon(AlgorithmKind::AmPr, 0.0, 10.0, 0.95).advisory());
        assert!(StatePoint::new(0.1, -0.1).is_err());
    }
}
