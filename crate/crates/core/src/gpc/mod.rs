//! Gaussian process probit classification.
//!
//! Latent values `f` at the training inputs have prior `N(0, K)` and
//! likelihood `∏ Φ(yᵢfᵢ)`. Decisions are made at a finite "comb" of
//! predictive inputs; the test latents are marginalized under `f* | f`, so
//! the utility at each predictive point is a probit of an affine function
//! of `f`.

mod kernel;
mod model;
mod utility;

pub use kernel::{kernel_matrix, RbfKernel};
pub use model::{
    ep_gpc, loss_ep_gpc, posterior_predictive, predictive_prob, probit_site_log_z, utility_site_log_z, GpcDataset,
    GpcModel, GpcRun, PredictiveSet,
};
pub use utility::{conditional_expected_utility, q_action, BinaryUtility4};
