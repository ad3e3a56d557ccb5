//! Gaussian factors in exponential-family form.
//!
//! Three parameterizations are kept side by side:
//!
//! * [`GaussianMoment`]: mean and covariance, always a proper density;
//! * [`GaussianNatural`]: `θ₁ = Σ⁻¹μ`, `θ₂ = -½Σ⁻¹`, which may be improper
//!   (EP sites and cavities routinely are);
//! * [`GaussianMeanParams`]: `η₁ = E[x]`, `η₂ = E[xxᵀ]`.
//!
//! Sites multiply and divide by adding natural parameters. Projection onto
//! the Gaussian family is driven by the derivatives of a tilted
//! log-normalizer, see [`TiltedLogZ`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal;

/// Relative tolerance for accepting a matrix as symmetric before it is
/// symmetrized.
const SYMMETRY_TOL: f64 = 1e-9;

fn check_square(m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: m.nrows().max(m.ncols()) });
    }
    Ok(())
}

fn symmetrized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    Ok(symmetrize(m.clone()))
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Positive definiteness by attempted Cholesky factorization, no jitter.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && m.clone().cholesky().is_some()
}

/// A proper Gaussian in mean/covariance form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoment {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMoment {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_square(&cov, mean.len())?;
        if mean.is_empty() {
            return Err(Error::InvalidParameter("zero-dimensional Gaussian".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean".into()));
        }
        let cov = symmetrized(&cov)?;
        if !is_positive_definite(&cov) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Mean of a one-dimensional Gaussian (first coordinate otherwise).
    pub fn scalar_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn scalar_var(&self) -> f64 {
        self.cov[(0, 0)]
    }

    pub fn to_natural(&self) -> GaussianNatural {
        let chol = self.cov.clone().cholesky().expect("covariance checked positive definite");
        let precision = symmetrize(chol.inverse());
        GaussianNatural { theta1: &precision * &self.mean, theta2: precision * -0.5 }
    }

    pub fn to_mean_params(&self) -> GaussianMeanParams {
        GaussianMeanParams {
            eta1: self.mean.clone(),
            eta2: &self.cov + &self.mean * self.mean.transpose(),
        }
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let chol = self.cov.clone().cholesky().expect("covariance checked positive definite");
        let diff = x - &self.mean;
        let sol = chol.l().solve_lower_triangular(&diff).expect("triangular factor is invertible");
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let n = self.dim() as f64;
        -0.5 * (sol.norm_squared() + log_det + n * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Sign used by [`factor_combine`]: `Plus` multiplies in a factor, `Minus`
/// divides it out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Gaussian factor in natural parameters; may be improper.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNatural {
    theta1: DVector<f64>,
    theta2: DMatrix<f64>,
}

impl GaussianNatural {
    pub fn new(theta1: DVector<f64>, theta2: DMatrix<f64>) -> Result<Self> {
        check_square(&theta2, theta1.len())?;
        if theta1.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite natural parameter".into()));
        }
        Ok(Self { theta1, theta2: symmetrized(&theta2)? })
    }

    pub fn scalar(theta1: f64, theta2: f64) -> Self {
        Self {
            theta1: DVector::from_element(1, theta1),
            theta2: DMatrix::from_element(1, 1, theta2),
        }
    }

    /// The flat factor (all natural parameters zero).
    pub fn zeros(dim: usize) -> Self {
        Self { theta1: DVector::zeros(dim), theta2: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.theta1.len()
    }

    pub fn theta1(&self) -> &DVector<f64> {
        &self.theta1
    }

    pub fn theta2(&self) -> &DMatrix<f64> {
        &self.theta2
    }

    pub fn is_proper(&self) -> bool {
        is_positive_definite(&(&self.theta2 * -2.0))
    }

    pub fn to_moment(&self) -> Result<GaussianMoment> {
        let precision = &self.theta2 * -2.0;
        let chol = precision.cholesky().ok_or(Error::ImproperDensity)?;
        let cov = symmetrize(chol.inverse());
        let mean = chol.solve(&self.theta1);
        Ok(GaussianMoment { mean, cov })
    }

    pub fn to_mean_params(&self) -> Result<GaussianMeanParams> {
        Ok(self.to_moment()?.to_mean_params())
    }

    pub fn combine(&self, other: &GaussianNatural, sign: Sign) -> Result<GaussianNatural> {
        factor_combine(self, other, sign)
    }

    /// `δ·self` in natural coordinates (a factor raised to the power δ).
    pub fn scaled(&self, factor: f64) -> GaussianNatural {
        GaussianNatural { theta1: &self.theta1 * factor, theta2: &self.theta2 * factor }
    }

    /// Largest absolute difference over all natural parameters.
    pub fn max_abs_diff(&self, other: &GaussianNatural) -> f64 {
        (&self.theta1 - &other.theta1).amax().max((&self.theta2 - &other.theta2).amax())
    }

    pub fn is_zero(&self) -> bool {
        self.theta1.iter().all(|v| *v == 0.0) && self.theta2.iter().all(|v| *v == 0.0)
    }

    /// Zero every parameter outside `coord` (θ₁ entry and θ₂ diagonal entry).
    pub(crate) fn restrict_to_coordinate(&mut self, coord: usize) {
        let n = self.dim();
        for i in 0..n {
            if i != coord {
                self.theta1[i] = 0.0;
            }
            for j in 0..n {
                if i != coord || j != coord {
                    self.theta2[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Mean parameters `(E[x], E[xxᵀ])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanParams {
    pub eta1: DVector<f64>,
    pub eta2: DMatrix<f64>,
}

impl GaussianMeanParams {
    pub fn covariance(&self) -> DMatrix<f64> {
        symmetrize(&self.eta2 - &self.eta1 * self.eta1.transpose())
    }

    pub fn to_moment(&self) -> Result<GaussianMoment> {
        let cov = self.covariance();
        if !is_positive_definite(&cov) {
            return Err(Error::NonPosteriorizableMoments);
        }
        Ok(GaussianMoment { mean: self.eta1.clone(), cov })
    }

    pub fn to_natural(&self) -> Result<GaussianNatural> {
        Ok(self.to_moment()?.to_natural())
    }

    pub fn max_abs_diff(&self, other: &GaussianMeanParams) -> f64 {
        (&self.eta1 - &other.eta1).amax().max((&self.eta2 - &other.eta2).amax())
    }
}

/// Product (`Plus`) or quotient (`Minus`) of two Gaussian factors.
pub fn factor_combine(a: &GaussianNatural, b: &GaussianNatural, sign: Sign) -> Result<GaussianNatural> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(match sign {
        Sign::Plus => GaussianNatural { theta1: &a.theta1 + &b.theta1, theta2: &a.theta2 + &b.theta2 },
        Sign::Minus => GaussianNatural { theta1: &a.theta1 - &b.theta1, theta2: &a.theta2 - &b.theta2 },
    })
}

/// `N(x; a, A)·N(x; b, B) = N(a; b, A+B)·N(x; c, C)`.
///
/// Returns `(log N(a; b, A+B), N(c, C))` with `C = A(A+B)⁻¹B` and
/// `c = B(A+B)⁻¹a + A(A+B)⁻¹b`.
pub fn gaussian_product(a: &GaussianMoment, b: &GaussianMoment) -> Result<(f64, GaussianMoment)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let sum = GaussianMoment::new(b.mean.clone(), &a.cov + &b.cov)?;
    let log_evidence = sum.log_pdf(&a.mean);
    let lu = (&a.cov + &b.cov).lu();
    let sum_inv_b = lu.solve(&b.cov).ok_or(Error::NotPositiveDefinite)?;
    let sum_inv_a = lu.solve(&a.cov).ok_or(Error::NotPositiveDefinite)?;
    let cov = symmetrize(&a.cov * &sum_inv_b);
    let mean = sum_inv_b.transpose() * &a.mean + sum_inv_a.transpose() * &b.mean;
    Ok((log_evidence, GaussianMoment::new(mean, cov)?))
}

/// Scalar form of [`gaussian_product`]: `(log evidence, mean, var)`.
pub fn gaussian_product_scalar(a_mean: f64, a_var: f64, b_mean: f64, b_var: f64) -> (f64, f64, f64) {
    let s = a_var + b_var;
    let log_evidence = normal::gauss_log_pdf(a_mean, b_mean, s);
    let mean = (b_var * a_mean + a_var * b_mean) / s;
    let var = a_var * b_var / s;
    (log_evidence, mean, var)
}

/// Gradient of a log-normalizer with respect to natural parameters
/// `(θ₁, θ₂)`. `d_theta2` is the symmetric matrix gradient treating the
/// entries of θ₂ as independent.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradient {
    pub d_theta1: DVector<f64>,
    pub d_theta2: DMatrix<f64>,
}

impl NaturalGradient {
    pub fn zeros(dim: usize) -> Self {
        Self { d_theta1: DVector::zeros(dim), d_theta2: DMatrix::zeros(dim, dim) }
    }
}

/// Projection by moment matching: `η_new = η_cavity + ∇_θ log Z`.
pub fn moment_match(cavity: &GaussianNatural, grad: &NaturalGradient) -> Result<GaussianMeanParams> {
    if grad.d_theta1.len() != cavity.dim() {
        return Err(Error::DimensionMismatch { expected: cavity.dim(), found: grad.d_theta1.len() });
    }
    let eta = cavity.to_mean_params()?;
    let matched = GaussianMeanParams {
        eta1: eta.eta1 + &grad.d_theta1,
        eta2: symmetrize(eta.eta2 + &grad.d_theta2),
    };
    if !is_positive_definite(&matched.covariance()) {
        return Err(Error::NonPosteriorizableMoments);
    }
    Ok(matched)
}

/// Log-normalizer `log Z = log ∫ t(x) N(x; μ, Σ) dx` of a tilted
/// distribution, with derivatives w.r.t. the cavity mean and covariance.
///
/// `d_cov` treats the entries of `Σ` as independent, so for a term that
/// depends on `x` through `aᵀx` it is `∂log Z/∂v · aaᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedLogZ {
    pub log_z: f64,
    pub d_mean: DVector<f64>,
    pub d_cov: DMatrix<f64>,
}

impl TiltedLogZ {
    /// One-dimensional term with derivatives w.r.t. the scalar mean and
    /// variance.
    pub fn scalar(log_z: f64, d_mean: f64, d_var: f64) -> Self {
        Self {
            log_z,
            d_mean: DVector::from_element(1, d_mean),
            d_cov: DMatrix::from_element(1, 1, d_var),
        }
    }

    /// A term `t(xᵢ)` of one coordinate of an `n`-dimensional cavity.
    pub fn on_coordinate(n: usize, i: usize, log_z: f64, d_mean: f64, d_var: f64) -> Self {
        let mut dm = DVector::zeros(n);
        dm[i] = d_mean;
        let mut dc = DMatrix::zeros(n, n);
        dc[(i, i)] = d_var;
        Self { log_z, d_mean: dm, d_cov: dc }
    }

    /// Chain rule into natural coordinates:
    /// `∇θ₁ = Σg`, `∇θ₂ = 2ΣGΣ + μ(Σg)ᵀ + (Σg)μᵀ`.
    pub fn natural_gradient(&self, cavity: &GaussianMoment) -> NaturalGradient {
        let sigma = cavity.cov();
        let mu = cavity.mean();
        let sg = sigma * &self.d_mean;
        let d_theta2 = sigma * &self.d_cov * sigma * 2.0 + mu * sg.transpose() + &sg * mu.transpose();
        NaturalGradient { d_theta1: sg, d_theta2: symmetrize(d_theta2) }
    }

    /// Moments of the tilted distribution: `μ + Σg`, `Σ + Σ(2G - ggᵀ)Σ`.
    pub fn tilted_moments(&self, cavity: &GaussianMoment) -> Result<GaussianMoment> {
        let sigma = cavity.cov();
        let m = self.curvature();
        let cov = symmetrize(sigma + sigma * m * sigma);
        if !is_positive_definite(&cov) {
            return Err(Error::NonPosteriorizableMoments);
        }
        Ok(GaussianMoment { mean: cavity.mean() + sigma * &self.d_mean, cov })
    }

    fn curvature(&self) -> DMatrix<f64> {
        &self.d_cov * 2.0 - &self.d_mean * self.d_mean.transpose()
    }
}

/// Natural parameters of `proj[t·q_cavity] / q_cavity`, the undamped site
/// implied by a projection.
///
/// Algebraically equal to converting the moment-matched mean parameters to
/// natural form and subtracting the cavity, but never inverts `Σ`: with
/// `M = 2G - ggᵀ` the precision change is `-(I + MΣ)⁻¹M` and the θ₁ change
/// is `g + Pμ_new`.
pub fn projection_delta(cavity: &GaussianMoment, tilted: &TiltedLogZ) -> Result<GaussianNatural> {
    let n = cavity.dim();
    if tilted.d_mean.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: tilted.d_mean.len() });
    }
    if !tilted.log_z.is_finite() || tilted.d_mean.iter().chain(tilted.d_cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonPosteriorizableMoments);
    }
    let sigma = cavity.cov();
    let m = tilted.curvature();
    let new_cov = symmetrize(sigma + sigma * &m * sigma);
    if !is_positive_definite(&new_cov) {
        return Err(Error::NonPosteriorizableMoments);
    }
    let b = DMatrix::identity(n, n) + &m * sigma;
    let p = b.lu().solve(&(-&m)).ok_or(Error::NonPosteriorizableMoments)?;
    let p = symmetrize(p);
    let new_mean = cavity.mean() + sigma * &tilted.d_mean;
    let theta1 = &tilted.d_mean + &p * new_mean;
    Ok(GaussianNatural { theta1, theta2: p * -0.5 })
}

/// Moments of `prior × factor` where the factor is given in natural
/// parameters, computed as `Σ = (I + KS)⁻¹K`, `μ = (I + KS)⁻¹(μ₀ + Kh)`
/// with `S = -2θ₂`, `h = θ₁`. The prior covariance `K` is never inverted.
pub fn posterior_moments(prior: &GaussianMoment, factor: &GaussianNatural) -> Result<GaussianMoment> {
    let n = prior.dim();
    if factor.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: factor.dim() });
    }
    let k = prior.cov();
    let s = &factor.theta2 * -2.0;
    let a = DMatrix::identity(n, n) + k * &s;
    let lu = a.lu();
    let cov = lu.solve(k).ok_or(Error::ImproperDensity)?;
    let cov = symmetrize(cov);
    if !is_positive_definite(&cov) {
        return Err(Error::ImproperDensity);
    }
    let rhs = prior.mean() + k * &factor.theta1;
    let mean = lu.solve(&rhs).ok_or(Error::ImproperDensity)?;
    Ok(GaussianMoment { mean, cov })
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / b.amax().max(1e-300)
    }

    #[test]
    fn scalar_conversions() {
        let n = GaussianMoment::scalar(0.0, 1.0).unwrap().to_natural();
        assert_eq!(n.theta1()[0], 0.0);
        assert!((n.theta2()[(0, 0)] + 0.5).abs() < 1e-15);
        let n = GaussianMoment::scalar(2.0, 4.0).unwrap().to_natural();
        assert!((n.theta1()[0] - 0.5).abs() < 1e-15);
        assert!((n.theta2()[(0, 0)] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn improper_natural_refuses_moment_form() {
        let g = GaussianNatural::scalar(1.0, 0.25);
        assert!(!g.is_proper());
        assert_eq!(g.to_moment().unwrap_err(), Error::ImproperDensity);
        assert_eq!(GaussianNatural::zeros(2).to_moment().unwrap_err(), Error::ImproperDensity);
    }

    #[test]
    fn three_dim_round_trip_through_all_forms() {
        let g = random_gaussian(7, 3);
        let back = g.to_natural().to_mean_params().unwrap().to_moment().unwrap();
        assert!((g.mean() - back.mean()).amax() < 1e-12);
        assert!((g.cov() - back.cov()).amax() < 1e-12);
    }

    #[test]
    fn combine_examples() {
        let a = GaussianNatural::scalar(1.0, -0.5);
        let z = GaussianNatural::zeros(1);
        assert_eq!(factor_combine(&a, &z, Sign::Plus).unwrap(), a);
        assert!(factor_combine(&a, &a, Sign::Minus).unwrap().is_zero());

        let site = GaussianNatural::scalar(0.0, 0.25);
        let c = factor_combine(&a, &site, Sign::Plus).unwrap();
        assert_eq!(c.theta2()[(0, 0)], -0.25);
        let eig = (c.theta2() * -2.0).symmetric_eigenvalues();
        assert!(eig.iter().all(|e| *e > 0.0));
        assert!(c.is_proper());

        let b = GaussianNatural::zeros(2);
        assert!(matches!(factor_combine(&a, &b, Sign::Plus), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn product_examples() {
        let n01 = GaussianMoment::scalar(0.0, 1.0).unwrap();
        let (le, post) = gaussian_product(&n01, &n01).unwrap();
        assert!(post.scalar_mean().abs() < 1e-15);
        assert!((post.scalar_var() - 0.5).abs() < 1e-15);
        assert!((le - normal::gauss_log_pdf(0.0, 0.0, 2.0)).abs() < 1e-14);

        let a = GaussianMoment::scalar(1.0, 1.0).unwrap();
        let b = GaussianMoment::scalar(3.0, 1.0).unwrap();
        let (_, post) = gaussian_product(&a, &b).unwrap();
        assert!((post.scalar_mean() - 2.0).abs() < 1e-15);
        assert!((post.scalar_var() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_matches_pointwise_density_and_scalar_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (am, av): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(0.2..4.0));
            let (bm, bv): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(0.2..4.0));
            let a = GaussianMoment::scalar(am, av).unwrap();
            let b = GaussianMoment::scalar(bm, bv).unwrap();
            let (le, post) = gaussian_product(&a, &b).unwrap();
            let (le_s, m_s, v_s) = gaussian_product_scalar(am, av, bm, bv);
            assert!((le - le_s).abs() < 1e-13 && (post.scalar_mean() - m_s).abs() < 1e-13);
            assert!((post.scalar_var() - v_s).abs() < 1e-13);
            for k in 0..200 {
                let x = -8.0 + 0.08 * k as f64;
                let lhs = normal::gauss_pdf(x, am, av) * normal::gauss_pdf(x, bm, bv);
                let rhs = le.exp() * normal::gauss_pdf(x, m_s, v_s);
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn multivariate_product_matches_natural_sum() {
        let a = random_gaussian(1, 4);
        let b = random_gaussian(2, 4);
        let (le, post) = gaussian_product(&a, &b).unwrap();
        let nat = factor_combine(&a.to_natural(), &b.to_natural(), Sign::Plus).unwrap();
        let via_nat = nat.to_moment().unwrap();
        assert!((post.mean() - via_nat.mean()).amax() < 1e-10);
        assert!((post.cov() - via_nat.cov()).amax() < 1e-10);
        // evidence: log N(x;a)+log N(x;b) - log N(x;post) at any x
        let x = DVector::from_element(4, 0.3);
        let direct = a.log_pdf(&x) + b.log_pdf(&x) - post.log_pdf(&x);
        assert!((direct - le).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_matches_cavity() {
        let g = random_gaussian(3, 3);
        let nat = g.to_natural();
        let mp = moment_match(&nat, &NaturalGradient::zeros(3)).unwrap();
        assert!(mp.max_abs_diff(&g.to_mean_params()) < 1e-12);
    }

    #[test]
    fn projection_routes_agree() {
        // moment_match + conversion versus the inverse-free delta
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..6 {
            let cav = random_gaussian(100 + n as u64, n);
            let g = DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
            let h = random_spd(&mut rng, n, 0.0) * -0.1;
            let t = TiltedLogZ { log_z: 0.0, d_mean: g, d_cov: h };
            let matched = moment_match(&cav.to_natural(), &t.natural_gradient(&cav)).unwrap();
            let direct = t.tilted_moments(&cav).unwrap().to_mean_params();
            assert!(matched.max_abs_diff(&direct) < 1e-10);
            let via_eta = factor_combine(&matched.to_natural().unwrap(), &cav.to_natural(), Sign::Minus).unwrap();
            let delta = projection_delta(&cav, &t).unwrap();
            assert!(via_eta.max_abs_diff(&delta) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn projection_rejects_non_positive_covariance() {
        let cav = GaussianMoment::scalar(0.0, 1.0).unwrap();
        // 2G - g² = -2 makes the new variance 1 - 2 < 0
        let t = TiltedLogZ::scalar(0.0, 0.0, -1.0);
        assert_eq!(projection_delta(&cav, &t).unwrap_err(), Error::NonPosteriorizableMoments);
        assert_eq!(t.tilted_moments(&cav).unwrap_err(), Error::NonPosteriorizableMoments);
    }

    #[test]
    fn posterior_moments_match_natural_route() {
        let prior = random_gaussian(9, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let site = GaussianNatural::new(
            DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
            random_spd(&mut rng, 5, 0.1) * -0.5,
        )
        .unwrap();
        let stable = posterior_moments(&prior, &site).unwrap();
        let direct = factor_combine(&prior.to_natural(), &site, Sign::Plus).unwrap().to_moment().unwrap();
        assert!((stable.mean() - direct.mean()).amax() < 1e-10);
        assert!((stable.cov() - direct.cov()).amax() < 1e-10);
        // a site with large negative precision makes the product improper
        let bad = GaussianNatural::new(DVector::zeros(5), DMatrix::identity(5, 5) * 50.0).unwrap();
        assert_eq!(posterior_moments(&prior, &bad).unwrap_err(), Error::ImproperDensity);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite_inputs() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianMoment::new(DVector::zeros(2), cov).is_err());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(GaussianMoment::new(DVector::zeros(2), cov).unwrap_err(), Error::NotPositiveDefinite);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_is_identity(seed in any::<u64>(), n in 1usize..=20) {
            let g = random_gaussian(seed, n);
            let nat = g.to_natural();
            let back = nat.to_moment().unwrap();
            prop_assert!((g.mean() - back.mean()).amax() <= 1e-12 * g.mean().amax().max(1.0));
            prop_assert!(rel_err(back.cov(), g.cov()) <= 1e-12);
            let mp_back = g.to_mean_params().to_moment().unwrap();
            prop_assert!(rel_err(mp_back.cov(), g.cov()) <= 1e-12);
            let nat_back = back.to_natural();
            prop_assert!(rel_err(nat_back.theta2(), nat.theta2()) <= 1e-12);
        }

        #[test]
        fn combine_is_commutative_and_associative(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
            let a = random_gaussian(s1, 3).to_natural();
            let b = random_gaussian(s2, 3).to_natural();
            let c = random_gaussian(s3, 3).to_natural();
            let ab = factor_combine(&a, &b, Sign::Plus).unwrap();
            let ba = factor_combine(&b, &a, Sign::Plus).unwrap();
            prop_assert_eq!(&ab, &ba);
            let ab_c = factor_combine(&ab, &c, Sign::Plus).unwrap();
            let a_bc = factor_combine(&a, &factor_combine(&b, &c, Sign::Plus).unwrap(), Sign::Plus).unwrap();
            prop_assert!(ab_c.max_abs_diff(&a_bc) <= 1e-14 * ab_c.theta2().amax().max(ab_c.theta1().amax()));
        }
    }
}
