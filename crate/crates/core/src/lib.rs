//! Loss-calibrated expectation propagation.
//!
//! Standard EP approximates a posterior `p₀(φ)∏ tᵢ(φ)` by Gaussian sites.
//! The loss-calibrated variant adds one more site approximating the
//! predictive utility `U(a, φ)`, so the approximation is pulled toward the
//! utility-weighted posterior and actions are selected inside the site
//! update. This crate provides the Gaussian algebra, the EP engine, two
//! concrete models (the clutter/reactor problem and GP probit
//! classification), sampling and enumeration oracles for the Bayes-optimal
//! decision, and the experiment harness used by the CLI.

pub mod clutter;
pub mod ep;
pub mod error;
pub mod experiment;
pub mod gauss;
pub mod gpc;
pub mod normal;
pub mod oracle;
pub mod quadrature;
pub mod seed;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use gauss::{GaussianMeanParams, GaussianMoment, GaussianNatural, NaturalGradient, TiltedLogZ};
