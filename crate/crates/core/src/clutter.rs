//! The clutter problem with the nuclear-reactor decision on top.
//!
//! Observations are scalar: `p(y | φ) = (1-π)N(y; φ, 1) + πN(y; 0, v_c)`
//! with prior `φ ~ N(0, v₀)`. The reactor decision shuts the reactor down
//! (`a = 1`) or keeps it on (`a = 0`); its utility is `L_a` when
//! `φ < τ_crit` and `H_a` otherwise.
//!
//! In the four-entry notation `u_ij` (utility of action `i` when the state
//! `1[φ ≥ τ_crit] = j`), the reactor utilities map as
//! `u00 = L0`, `u01 = H0`, `u10 = L1`, `u11 = H1`; see
//! [`ReactorUtility::to_binary_utility`].

use serde::{Deserialize, Serialize};

use crate::ep::{DecisionModel, TiltedModel};
use crate::error::{invalid, Error, Result};
use crate::gauss::{gaussian_product_scalar, GaussianMeanParams, GaussianMoment, TiltedLogZ};
use crate::gpc::BinaryUtility4;
use crate::normal;

/// Largest dataset for which the `2^N`-component posterior is enumerated.
pub const MAX_EXACT_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterParams {
    /// Clutter proportion π.
    pub pi: f64,
    /// Clutter variance.
    pub v_c: f64,
    /// Prior variance of φ.
    pub v_0: f64,
}

impl Default for ClutterParams {
    fn default() -> Self {
        Self { pi: 0.5, v_c: 10.0, v_0: 100.0 }
    }
}

impl ClutterParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(invalid(format!("clutter proportion must lie in [0, 1], got {}", self.pi)));
        }
        if !(self.v_c > 0.0 && self.v_0 > 0.0) {
            return Err(invalid("clutter and prior variances must be positive"));
        }
        Ok(())
    }

    pub fn prior(&self) -> GaussianMoment {
        GaussianMoment::scalar(0.0, self.v_0).expect("positive prior variance")
    }

    /// Likelihood `p(y | φ)`.
    pub fn likelihood(&self, y: f64, phi: f64) -> f64 {
        (1.0 - self.pi) * normal::gauss_pdf(y, phi, 1.0) + self.pi * normal::gauss_pdf(y, 0.0, self.v_c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterDataset {
    y: Vec<f64>,
}

impl ClutterDataset {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("observations must be finite"));
        }
        Ok(Self { y })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReactorAction {
    KeepOn,
    ShutDown,
}

impl ReactorAction {
    pub fn index(self) -> usize {
        match self {
            Self::KeepOn => 0,
            Self::ShutDown => 1,
        }
    }
}

/// Reactor utilities. `l0`/`l1`: keep on / shut down below the threshold
/// (true negative / false positive); `h0`/`h1`: keep on / shut down at or
/// above it (false negative / true positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactorUtility {
    pub l0: f64,
    pub l1: f64,
    pub h0: f64,
    pub h1: f64,
    pub tau_crit: f64,
}

impl ReactorUtility {
    /// Default utilities `(L0, L1, H0, H1) = (1, 0.5, 0, 1)` with the given
    /// threshold.
    pub fn with_threshold(tau_crit: f64) -> Self {
        Self { l0: 1.0, l1: 0.5, h0: 0.0, h1: 1.0, tau_crit }
    }

    /// Requires `H0 < L1 ≤ L0 ≤ H1` and `H0 < H1`.
    pub fn validate(&self) -> Result<()> {
        let ok = self.h0 < self.l1 && self.l1 <= self.l0 && self.l0 <= self.h1 && self.h0 < self.h1;
        if !ok || !self.tau_crit.is_finite() && !self.tau_crit.is_infinite() {
            return Err(invalid(format!(
                "reactor utilities must satisfy H0 < L1 <= L0 <= H1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(L_a, H_a)`.
    pub fn for_action(&self, a: ReactorAction) -> (f64, f64) {
        match a {
            ReactorAction::KeepOn => (self.l0, self.h0),
            ReactorAction::ShutDown => (self.l1, self.h1),
        }
    }

    /// Expected utility of `a` when `P(φ ≥ τ_crit) = p_high`.
    pub fn expected_utility(&self, a: ReactorAction, p_high: f64) -> f64 {
        let (l, h) = self.for_action(a);
        l * (1.0 - p_high) + h * p_high
    }

    /// Probability of the high state at which both actions tie.
    pub fn indifference_probability(&self) -> f64 {
        let dl = self.l0 - self.l1;
        dl / (dl + (self.h1 - self.h0))
    }

    /// The same table as a [`BinaryUtility4`].
    pub fn to_binary_utility(&self) -> BinaryUtility4 {
        BinaryUtility4 { u00: self.l0, u01: self.h0, u10: self.l1, u11: self.h1 }
    }

    /// Pointwise utility `U(a, φ)`.
    pub fn utility(&self, a: ReactorAction, phi: f64) -> f64 {
        let (l, h) = self.for_action(a);
        if phi < self.tau_crit {
            l
        } else {
            h
        }
    }
}

/// Tilted log-normalizer of one clutter observation:
/// `Z = (1-π)N(y; m, 1+v) + πN(y; 0, v_c)`.
pub fn clutter_log_z(cavity: &GaussianMoment, y: f64, params: &ClutterParams) -> TiltedLogZ {
    let (m, v) = (cavity.scalar_mean(), cavity.scalar_var());
    let (log_z, dm, dv) = clutter_log_z_scalar(m, v, y, params);
    TiltedLogZ::scalar(log_z, dm, dv)
}

/// Returns `(log Z, ∂/∂m, ∂/∂v)`.
fn clutter_log_z_scalar(m: f64, v: f64, y: f64, params: &ClutterParams) -> (f64, f64, f64) {
    let s = 1.0 + v;
    let signal = (1.0 - params.pi).ln() + normal::gauss_log_pdf(y, m, s);
    let clutter = params.pi.ln() + normal::gauss_log_pdf(y, 0.0, params.v_c);
    let log_z = log_add_exp(signal, clutter);
    let r = (signal - log_z).exp();
    let d = y - m;
    (log_z, r * d / s, 0.5 * r * (d * d / (s * s) - 1.0 / s))
}

/// Posterior responsibility of the signal component,
/// `r = (1-π)N(y; m, 1+v) / Z`.
pub fn signal_responsibility(cavity: &GaussianMoment, y: f64, params: &ClutterParams) -> f64 {
    let (m, v) = (cavity.scalar_mean(), cavity.scalar_var());
    let signal = (1.0 - params.pi).ln() + normal::gauss_log_pdf(y, m, 1.0 + v);
    let clutter = params.pi.ln() + normal::gauss_log_pdf(y, 0.0, params.v_c);
    (signal - log_add_exp(signal, clutter)).exp()
}

/// Tilted moments in closed form:
/// `m' = m + v·r(y-m)/(1+v)`,
/// `v' = v - v²(r/(1+v) - r(1-r)(y-m)²/(1+v)²)`.
pub fn clutter_tilted_moments(cavity: &GaussianMoment, y: f64, params: &ClutterParams) -> GaussianMeanParams {
    let (m, v) = (cavity.scalar_mean(), cavity.scalar_var());
    let r = signal_responsibility(cavity, y, params);
    let s = 1.0 + v;
    let d = y - m;
    let mean = m + v * r * d / s;
    let var = v - v * v * (r / s - r * (1.0 - r) * d * d / (s * s));
    GaussianMeanParams {
        eta1: nalgebra::DVector::from_element(1, mean),
        eta2: nalgebra::DMatrix::from_element(1, 1, var + mean * mean),
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Tilted log-normalizer of the reactor utility:
/// `Z = L_a Φ(τ; m, v) + H_a (1 - Φ(τ; m, v))`.
pub fn reactor_log_z(cavity: &GaussianMoment, u: &ReactorUtility, a: ReactorAction) -> Result<TiltedLogZ> {
    let (m, v) = (cavity.scalar_mean(), cavity.scalar_var());
    let (l, h) = u.for_action(a);
    if l <= 0.0 && h <= 0.0 {
        return Err(Error::NonpositiveUtilityMass);
    }
    let sd = v.sqrt();
    let t = (u.tau_crit - m) / sd;
    // ρ = (L - H)φ(t) / Z
    let (log_z, rho) = if h == 0.0 {
        (l.ln() + normal::log_cdf(t), normal::pdf_over_cdf(t))
    } else if l == 0.0 {
        (h.ln() + normal::log_cdf(-t), -normal::pdf_over_cdf(-t))
    } else {
        let z = l * normal::cdf(t) + h * normal::cdf(-t);
        if !(z > 0.0) {
            return Err(Error::NonpositiveUtilityMass);
        }
        (z.ln(), (l - h) * normal::pdf(t) / z)
    };
    if !log_z.is_finite() {
        return Err(Error::NonpositiveUtilityMass);
    }
    Ok(TiltedLogZ::scalar(log_z, -rho / sd, -rho * t / (2.0 * v)))
}

/// Expected-utility maximizing action under a Gaussian belief; ties go to
/// shutting down.
pub fn select_reactor_action(cavity: &GaussianMoment, u: &ReactorUtility) -> ReactorAction {
    let t = (u.tau_crit - cavity.scalar_mean()) / cavity.scalar_var().sqrt();
    action_for_probabilities(u, normal::cdf(t), normal::cdf(-t))
}

fn action_for_probabilities(u: &ReactorUtility, p_low: f64, p_high: f64) -> ReactorAction {
    let keep = u.l0 * p_low + u.h0 * p_high;
    let shut = u.l1 * p_low + u.h1 * p_high;
    if shut >= keep {
        ReactorAction::ShutDown
    } else {
        ReactorAction::KeepOn
    }
}

/// One scalar Gaussian component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal1 {
    pub mean: f64,
    pub var: f64,
}

/// Exact clutter posterior: a mixture of up to `2^N` Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePosterior {
    log_weights: Vec<f64>,
    components: Vec<Normal1>,
    log_evidence: f64,
}

/// Expand `∏ᵢ[(1-π)N(yᵢ; φ, 1) + πN(yᵢ; 0, v_c)]·N(φ; 0, v₀)` term by term.
/// Each branch folds its signal observations into the running Gaussian by
/// the evidence-times-posterior product identity.
pub fn exact_clutter_posterior(data: &ClutterDataset, params: &ClutterParams) -> Result<MixturePosterior> {
    params.validate()?;
    if data.len() > MAX_EXACT_POINTS {
        return Err(Error::TooManyPoints { max: MAX_EXACT_POINTS, found: data.len() });
    }
    let ln_signal = (1.0 - params.pi).ln();
    let ln_clutter = params.pi.ln();
    let mut branches = vec![(0.0, Normal1 { mean: 0.0, var: params.v_0 })];
    for &y in data.y() {
        let mut next = Vec::with_capacity(branches.len() * 2);
        for &(lw, c) in &branches {
            if ln_clutter.is_finite() {
                next.push((lw + ln_clutter + normal::gauss_log_pdf(y, 0.0, params.v_c), c));
            }
            if ln_signal.is_finite() {
                let (le, mean, var) = gaussian_product_scalar(c.mean, c.var, y, 1.0);
                next.push((lw + ln_signal + le, Normal1 { mean, var }));
            }
        }
        branches = next;
    }
    let max = branches.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = branches.iter().map(|b| (b.0 - max).exp()).sum();
    let log_evidence = max + sum.ln();
    let (log_weights, components) = branches.into_iter().map(|(lw, c)| (lw - log_evidence, c)).unzip();
    Ok(MixturePosterior { log_weights, components, log_evidence })
}

impl MixturePosterior {
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn components(&self) -> &[Normal1] {
        &self.components
    }

    /// `log p(y₁..y_N)`.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn component(&self, i: usize) -> GaussianMoment {
        let c = self.components[i];
        GaussianMoment::scalar(c.mean, c.var).expect("component variance positive")
    }

    fn weighted(&self) -> impl Iterator<Item = (f64, &Normal1)> {
        self.log_weights.iter().map(|lw| lw.exp()).zip(&self.components)
    }

    pub fn mean(&self) -> f64 {
        self.weighted().map(|(w, c)| w * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.weighted().map(|(w, c)| w * (c.var + (c.mean - mean).powi(2))).sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weighted().map(|(w, c)| w * normal::gauss_pdf(x, c.mean, c.var)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weighted().map(|(w, c)| w * normal::cdf((x - c.mean) / c.var.sqrt())).sum()
    }

    /// `P(φ ≥ τ)`, summed from upper tails to keep accuracy.
    pub fn prob_at_least(&self, tau: f64) -> f64 {
        self.weighted().map(|(w, c)| w * normal::cdf((c.mean - tau) / c.var.sqrt())).sum()
    }

    pub fn expected_utility(&self, u: &ReactorUtility, a: ReactorAction) -> f64 {
        u.expected_utility(a, self.prob_at_least(u.tau_crit))
    }

    /// Bayes action; ties go to shutting down.
    pub fn bayes_action(&self, u: &ReactorUtility) -> ReactorAction {
        action_for_probabilities(u, self.cdf(u.tau_crit), self.prob_at_least(u.tau_crit))
    }
}

/// Standard EP on the clutter problem.
#[derive(Debug, Clone)]
pub struct ClutterModel {
    pub data: ClutterDataset,
    pub params: ClutterParams,
}

impl TiltedModel for ClutterModel {
    fn dim(&self) -> usize {
        1
    }

    fn n_data_sites(&self) -> usize {
        self.data.len()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        Ok(clutter_log_z(cavity, self.data.y()[site], &self.params))
    }
}

/// Loss-calibrated EP: the clutter model with the reactor utility site.
#[derive(Debug, Clone)]
pub struct ReactorModel {
    pub clutter: ClutterModel,
    pub utility: ReactorUtility,
}

impl TiltedModel for ReactorModel {
    fn dim(&self) -> usize {
        1
    }

    fn n_data_sites(&self) -> usize {
        self.clutter.n_data_sites()
    }

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ> {
        self.clutter.data_log_z(site, cavity)
    }
}

impl DecisionModel for ReactorModel {
    type Actions = ReactorAction;

    fn select_actions(&self, cavity: &GaussianMoment) -> Result<ReactorAction> {
        Ok(select_reactor_action(cavity, &self.utility))
    }

    fn utility_log_z(&self, cavity: &GaussianMoment, actions: &ReactorAction) -> Result<TiltedLogZ> {
        reactor_log_z(cavity, &self.utility, *actions)
    }
}
