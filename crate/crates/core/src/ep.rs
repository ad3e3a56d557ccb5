//! Damped expectation propagation over a Gaussian prior and a set of data
//! sites, with the loss-calibrated extension: one extra utility site whose
//! projection is preceded by action selection under its cavity.
//!
//! The engine keeps the prior in moment form and the sites in natural form.
//! Moments of the global approximation and of every cavity are computed
//! with [`posterior_moments`], which never inverts the prior covariance, so
//! ill-conditioned GP kernels are handled without loss.

use std::fmt::Debug;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::gauss::{
    factor_combine, posterior_moments, projection_delta, GaussianMeanParams, GaussianMoment, GaussianNatural,
    Sign, TiltedLogZ,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Data,
    Utility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: usize,
    pub kind: SiteKind,
    pub params: GaussianNatural,
}

/// Coordinates a site's natural parameters may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteSupport {
    Full,
    /// Only `θ₁[i]` and `θ₂[i, i]`: the term depends on one coordinate.
    Coordinate(usize),
}

/// The likelihood side of an EP problem: one tilted log-normalizer per data
/// site, evaluated against a proper cavity.
pub trait TiltedModel {
    fn dim(&self) -> usize;

    fn n_data_sites(&self) -> usize;

    fn data_log_z(&self, site: usize, cavity: &GaussianMoment) -> Result<TiltedLogZ>;

    fn data_site_support(&self, _site: usize) -> SiteSupport {
        SiteSupport::Full
    }
}

/// A model with a decision problem attached. The utility term `U(a, φ)`
/// becomes one more site; its tilted log-normalizer is the expected utility
/// under the cavity.
pub trait DecisionModel: TiltedModel {
    type Actions: Clone + Debug + PartialEq;

    /// Actions maximizing expected utility under `cavity`.
    fn select_actions(&self, cavity: &GaussianMoment) -> Result<Self::Actions>;

    fn utility_log_z(&self, cavity: &GaussianMoment, actions: &Self::Actions) -> Result<TiltedLogZ>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpConfig {
    /// Step fraction toward the freshly projected site; 1 is undamped.
    pub damping: f64,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest natural-parameter change in a
    /// sweep.
    pub tol: f64,
    pub seed: u64,
    /// Visit sites in a fresh random order every sweep.
    pub shuffle: bool,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self { damping: 0.5, max_sweeps: 200, tol: 1e-8, seed: 0, shuffle: true }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Converged,
    MaxSweeps,
    /// The global approximation became improper after an update; the update
    /// was rolled back.
    Diverged { sweep: usize, site: usize },
    /// Every site was skipped in a sweep.
    Stalled { sweep: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub status: Status,
    pub sweeps: usize,
    /// Largest natural-parameter change per sweep.
    pub sweep_deltas: Vec<f64>,
    pub skipped_per_sweep: Vec<usize>,
    pub skipped_total: usize,
    /// Number of utility-site visits whose selected actions differ from the
    /// previous visit.
    pub action_changes: usize,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Prior, sites, and the cached global approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    prior: GaussianMoment,
    prior_natural: GaussianNatural,
    sites: Vec<Site>,
    site_sum: GaussianNatural,
    q: GaussianMoment,
    sweep: usize,
}

impl EpState {
    pub fn new(prior: GaussianMoment, n_data: usize, with_utility: bool) -> Self {
        let dim = prior.dim();
        let mut sites: Vec<Site> = (0..n_data)
            .map(|id| Site { id, kind: SiteKind::Data, params: GaussianNatural::zeros(dim) })
            .collect();
        if with_utility {
            sites.push(Site { id: n_data, kind: SiteKind::Utility, params: GaussianNatural::zeros(dim) });
        }
        Self {
            prior_natural: prior.to_natural(),
            q: prior.clone(),
            prior,
            sites,
            site_sum: GaussianNatural::zeros(dim),
            sweep: 0,
        }
    }

    pub fn prior(&self) -> &GaussianMoment {
        &self.prior
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn sweep(&self) -> usize {
        self.sweep
    }

    pub fn utility_site(&self) -> Option<&Site> {
        self.sites.iter().find(|s| s.kind == SiteKind::Utility)
    }

    /// Moments of the full product, prior times every site (including the
    /// utility site when present).
    pub fn approximation(&self) -> &GaussianMoment {
        &self.q
    }

    /// Natural parameters of the full product.
    pub fn q_natural(&self) -> GaussianNatural {
        factor_combine(&self.prior_natural, &self.site_sum, Sign::Plus).expect("dimensions fixed at construction")
    }

    /// Posterior approximation: prior times data sites only.
    pub fn posterior(&self) -> Result<GaussianMoment> {
        match self.utility_site() {
            None => Ok(self.q.clone()),
            Some(u) => posterior_moments(&self.prior, &factor_combine(&self.site_sum, &u.params, Sign::Minus)?),
        }
    }

    /// Cavity for `site` in natural parameters; may be improper.
    pub fn cavity(&self, site: usize) -> Result<GaussianNatural> {
        let s = self.sites.get(site).ok_or_else(|| invalid(format!("no site {site}")))?;
        factor_combine(&self.q_natural(), &s.params, Sign::Minus)
    }

    /// Cavity moments; `ImproperCavity` when the cavity is not a density.
    pub fn cavity_moments(&self, site: usize) -> Result<GaussianMoment> {
        let s = self.sites.get(site).ok_or_else(|| invalid(format!("no site {site}")))?;
        let rest = factor_combine(&self.site_sum, &s.params, Sign::Minus)?;
        posterior_moments(&self.prior, &rest).map_err(|_| Error::ImproperCavity { site })
    }

    /// Largest deviation between the cached site sum and a fresh sum of the
    /// sites.
    pub fn reconstruction_error(&self) -> f64 {
        self.sum_sites().max_abs_diff(&self.site_sum)
    }

    fn sum_sites(&self) -> GaussianNatural {
        let mut acc = GaussianNatural::zeros(self.prior.dim());
        for s in &self.sites {
            acc = factor_combine(&acc, &s.params, Sign::Plus).expect("dimensions fixed at construction");
        }
        acc
    }

    /// Replace one site and recompute the cached product from scratch. On
    /// an improper result the state is left untouched.
    fn replace_site(&mut self, site: usize, params: GaussianNatural) -> Result<()> {
        let old = std::mem::replace(&mut self.sites[site].params, params);
        let sum = self.sum_sites();
        match posterior_moments(&self.prior, &sum) {
            Ok(q) => {
                self.site_sum = sum;
                self.q = q;
                Ok(())
            }
            Err(e) => {
                self.sites[site].params = old;
                Err(e)
            }
        }
    }
}

/// Damped site update `δ(θ_new - θ_cavity) + (1 - δ)θ_old`.
pub fn site_update(
    old: &GaussianNatural,
    q_new: &GaussianNatural,
    cavity: &GaussianNatural,
    damping: f64,
) -> Result<GaussianNatural> {
    let delta = factor_combine(q_new, cavity, Sign::Minus)?;
    damped(old, &delta, damping)
}

fn damped(old: &GaussianNatural, undamped: &GaussianNatural, damping: f64) -> Result<GaussianNatural> {
    factor_combine(&undamped.scaled(damping), &old.scaled(1.0 - damping), Sign::Plus)
}

/// Result of an EP run. `actions` holds the actions chosen at the final
/// utility-site visit (None for standard EP).
#[derive(Debug, Clone, PartialEq)]
pub struct EpRun<A> {
    pub state: EpState,
    pub actions: Option<A>,
    pub diagnostics: Diagnostics,
}

impl<A> EpRun<A> {
    /// Turns divergence or stalling into an error.
    pub fn check(&self) -> Result<&Self> {
        match self.diagnostics.status {
            Status::Diverged { sweep, site } => Err(Error::DivergenceDetected { sweep, site }),
            Status::Stalled { sweep } => Err(Error::Stalled { sweep }),
            _ => Ok(self),
        }
    }
}

/// Standard EP: prior times the model's data sites.
pub fn run_ep<M: TiltedModel>(model: &M, prior: &GaussianMoment, config: &EpConfig) -> Result<EpRun<()>> {
    let mut driver = Driver::new(model, prior, config, false)?;
    driver.run(|_, _| unreachable!("standard EP has no utility site"))?;
    Ok(driver.finish(None))
}

/// Loss-calibrated EP: data sites plus one utility site.
pub fn run_loss_ep<M: DecisionModel>(
    model: &M,
    prior: &GaussianMoment,
    config: &EpConfig,
) -> Result<EpRun<M::Actions>> {
    let mut driver = Driver::new(model, prior, config, true)?;
    let mut last: Option<M::Actions> = None;
    let mut changes = 0usize;
    driver.run(|model, cavity| {
        let actions = model.select_actions(cavity)?;
        let t = model.utility_log_z(cavity, &actions)?;
        if last.as_ref().is_some_and(|prev| *prev != actions) {
            changes += 1;
        }
        last = Some(actions);
        Ok(t)
    })?;
    driver.diagnostics.action_changes = changes;
    Ok(driver.finish(last))
}

struct Driver<'a, M> {
    model: &'a M,
    config: &'a EpConfig,
    state: EpState,
    diagnostics: Diagnostics,
}

impl<'a, M: TiltedModel> Driver<'a, M> {
    fn new(model: &'a M, prior: &GaussianMoment, config: &'a EpConfig, with_utility: bool) -> Result<Self> {
        config.validate()?;
        if prior.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: prior.dim() });
        }
        Ok(Self {
            model,
            config,
            state: EpState::new(prior.clone(), model.n_data_sites(), with_utility),
            diagnostics: Diagnostics {
                status: Status::MaxSweeps,
                sweeps: 0,
                sweep_deltas: Vec::new(),
                skipped_per_sweep: Vec::new(),
                skipped_total: 0,
                action_changes: 0,
            },
        })
    }

    fn run<F>(&mut self, mut utility: F) -> Result<()>
    where
        F: FnMut(&M, &GaussianMoment) -> Result<TiltedLogZ>,
    {
        let n_sites = self.state.sites.len();
        if n_sites == 0 {
            self.diagnostics.status = Status::Converged;
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut order: Vec<usize> = (0..n_sites).collect();
        for sweep in 1..=self.config.max_sweeps {
            if self.config.shuffle {
                order.shuffle(&mut rng);
            }
            let mut max_change = 0.0f64;
            let mut skipped = 0usize;
            for &id in &order {
                let Ok(cavity) = self.state.cavity_moments(id) else {
                    skipped += 1;
                    continue;
                };
                let kind = self.state.sites[id].kind;
                let tilted = match kind {
                    SiteKind::Data => self.model.data_log_z(id, &cavity),
                    SiteKind::Utility => utility(self.model, &cavity),
                };
                let Ok(delta) = tilted.and_then(|t| projection_delta(&cavity, &t)) else {
                    skipped += 1;
                    continue;
                };
                let old = &self.state.sites[id].params;
                let mut new = damped(old, &delta, self.config.damping)?;
                if kind == SiteKind::Data {
                    if let SiteSupport::Coordinate(c) = self.model.data_site_support(id) {
                        new.restrict_to_coordinate(c);
                    }
                }
                let change = new.max_abs_diff(old);
                if self.state.replace_site(id, new).is_err() {
                    self.state.sweep = sweep;
                    self.record(sweep, max_change, skipped);
                    self.diagnostics.status = Status::Diverged { sweep, site: id };
                    return Ok(());
                }
                max_change = max_change.max(change);
            }
            self.state.sweep = sweep;
            self.record(sweep, max_change, skipped);
            if skipped == n_sites {
                self.diagnostics.status = Status::Stalled { sweep };
                return Ok(());
            }
            if max_change < self.config.tol {
                self.diagnostics.status = Status::Converged;
                return Ok(());
            }
        }
        self.diagnostics.status = Status::MaxSweeps;
        Ok(())
    }

    fn record(&mut self, sweep: usize, max_change: f64, skipped: usize) {
        self.diagnostics.sweeps = sweep;
        self.diagnostics.sweep_deltas.push(max_change);
        self.diagnostics.skipped_per_sweep.push(skipped);
        self.diagnostics.skipped_total += skipped;
    }

    fn finish<A>(self, actions: Option<A>) -> EpRun<A> {
        EpRun { state: self.state, actions, diagnostics: self.diagnostics }
    }
}

/// Largest gap between the mean parameters of each data site's tilted
/// distribution and those of the global approximation. Sites with improper
/// cavities or failing projections are ignored. Zero at an exact fixed
/// point.
pub fn data_fixed_point_residual<M: TiltedModel>(model: &M, state: &EpState) -> f64 {
    let q = state.approximation().to_mean_params();
    (0..model.n_data_sites())
        .filter_map(|i| {
            let cavity = state.cavity_moments(i).ok()?;
            let t = model.data_log_z(i, &cavity).ok()?;
            Some(tilted_gap(&t, &cavity, &q))
        })
        .fold(0.0, f64::max)
}

/// Fixed-point residual of the utility site under the given actions.
pub fn utility_fixed_point_residual<M: DecisionModel>(model: &M, state: &EpState, actions: &M::Actions) -> Option<f64> {
    let id = state.utility_site()?.id;
    let cavity = state.cavity_moments(id).ok()?;
    let t = model.utility_log_z(&cavity, actions).ok()?;
    Some(tilted_gap(&t, &cavity, &state.approximation().to_mean_params()))
}

fn tilted_gap(t: &TiltedLogZ, cavity: &GaussianMoment, q: &GaussianMeanParams) -> f64 {
    match t.tilted_moments(cavity) {
        Ok(m) => m.to_mean_params().max_abs_diff(q),
        Err(_) => f64::INFINITY,
    }
}
