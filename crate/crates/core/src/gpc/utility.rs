use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Binary decision utilities: `u_ij` is the utility of action `i` when the
/// outcome is `j`, with action/outcome `0 ↔ -1` and `1 ↔ +1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryUtility4 {
    pub u00: f64,
    pub u01: f64,
    pub u10: f64,
    pub u11: f64,
}

impl BinaryUtility4 {
    pub fn new(u00: f64, u01: f64, u10: f64, u11: f64) -> Self {
        Self { u00, u01, u10, u11 }
    }

    /// `(u00 - u10) - (u01 - u11)`: slope of `EU(+1) - EU(-1)` in `p`.
    fn slope(&self) -> f64 {
        (self.u00 - self.u10) - (self.u01 - self.u11)
    }

    /// Probability of `+1` at which both actions tie.
    pub fn threshold(&self) -> Result<f64> {
        let t = (self.u00 - self.u10) / self.slope();
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::BiasUndefined { arg: t });
        }
        Ok(t)
    }

    /// Decision bias on the probit scale, `b = Φ⁻¹(threshold)`.
    pub fn bias(&self) -> Result<f64> {
        Ok(normal::quantile(self.threshold()?))
    }

    pub fn validate(&self) -> Result<()> {
        if [self.u00, self.u01, self.u10, self.u11].iter().any(|u| !u.is_finite()) {
            return Err(crate::error::invalid("utilities must be finite"));
        }
        self.threshold().map(|_| ())
    }

    /// `(base, slope)` with `EU(a | p) = base + slope·p`.
    pub fn affine(&self, a: i8) -> (f64, f64) {
        if a > 0 {
            (self.u10, self.u11 - self.u10)
        } else {
            (self.u00, self.u01 - self.u00)
        }
    }

    /// Optimal action when the outcome is `+1` with probability `p`; ties
    /// go to `+1`.
    pub fn action_for_prob(&self, p: f64) -> Result<i8> {
        let t = self.threshold()?;
        let plus = if self.slope() > 0.0 { p >= t } else { p <= t };
        Ok(if plus { 1 } else { -1 })
    }
}

/// Expected utility of action `a ∈ {-1, +1}` when `P(y = +1) = p_plus`.
pub fn conditional_expected_utility(p_plus: f64, u: &BinaryUtility4, a: i8) -> f64 {
    if a > 0 {
        u.u10 * (1.0 - p_plus) + u.u11 * p_plus
    } else {
        u.u00 * (1.0 - p_plus) + u.u01 * p_plus
    }
}

/// Closed-form q-action: `sign(m/√(1+v) - b)`, with the comparison
/// reversed when the utility slope is negative; ties go to `+1`.
pub fn q_action(m: f64, v: f64, u: &BinaryUtility4) -> Result<i8> {
    let b = u.bias()?;
    let z = m / (1.0 + v).sqrt();
    let plus = if u.slope() > 0.0 { z >= b } else { z <= b };
    Ok(if plus { 1 } else { -1 })
}
