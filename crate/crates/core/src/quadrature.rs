//! Uniform-grid trapezoidal quadrature, used as an independent oracle for
//! the closed-form integrals elsewhere in the crate.

/// Trapezoidal rule for `f` on `[lo, hi]` with `n ≥ 2` equally spaced
/// nodes.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 2, "need at least two nodes");
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for k in 1..n - 1 {
        acc += f(lo + h * k as f64);
    }
    acc * h
}

/// Composite Simpson rule on `[lo, hi]` with `n` (odd, ≥ 3) nodes. Use it
/// when an endpoint cuts through the mass, where the trapezoidal rule is
/// only second order.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 3 && n % 2 == 1, "need an odd number of nodes, at least three");
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n - 1 {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + h * k as f64);
    }
    acc * h / 3.0
}

/// Mass, mean and variance of an unnormalized density on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMoments {
    pub mass: f64,
    pub mean: f64,
    pub var: f64,
}

/// Moments of the unnormalized density `f` by the trapezoidal rule.
pub fn moments_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> GridMoments {
    assert!(n >= 2, "need at least two nodes");
    let h = (hi - lo) / (n - 1) as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    let vals: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let x = lo + h * k as f64;
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            (x, w * f(x))
        })
        .collect();
    for &(x, fx) in &vals {
        m0 += fx;
        m1 += x * fx;
    }
    let mean = m1 / m0;
    let m2c: f64 = vals.iter().map(|&(x, fx)| (x - mean) * (x - mean) * fx).sum();
    GridMoments { mass: m0 * h, mean, var: m2c / m0 }
}

/// Uniform 2-D grid with trapezoidal weights over `[lo, hi]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Normalized moments of a 2-D density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMoments2d {
    pub mass: f64,
    pub mean: [f64; 2],
    /// Covariance entries `[c00, c01, c11]`.
    pub cov: [f64; 3],
}

impl Grid2d {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + self.spacing() * k as f64
    }

    fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// Evaluate `log f` on the grid (row index is the first coordinate).
    pub fn evaluate(&self, log_f: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        use rayon::prelude::*;
        (0..self.n * self.n)
            .into_par_iter()
            .map(|idx| log_f(self.node(idx / self.n), self.node(idx % self.n)))
            .collect()
    }

    /// Moments of `exp(log_values)` (values from [`Grid2d::evaluate`]); the
    /// returned mass is on the scale `exp(log_values - max)`, and
    /// `log_scale` is that max.
    pub fn moments(&self, log_values: &[f64]) -> (GridMoments2d, f64) {
        let max = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut m0, mut m1, mut m2) = (0.0, [0.0; 2], [0.0; 3]);
        for i in 0..self.n {
            let x = self.node(i);
            for j in 0..self.n {
                let y = self.node(j);
                let w = self.weight(i) * self.weight(j) * (log_values[i * self.n + j] - max).exp();
                m0 += w;
                m1[0] += w * x;
                m1[1] += w * y;
                m2[0] += w * x * x;
                m2[1] += w * x * y;
                m2[2] += w * y * y;
            }
        }
        let mean = [m1[0] / m0, m1[1] / m0];
        let cov = [
            m2[0] / m0 - mean[0] * mean[0],
            m2[1] / m0 - mean[0] * mean[1],
            m2[2] / m0 - mean[1] * mean[1],
        ];
        let h = self.spacing();
        (GridMoments2d { mass: m0 * h * h, mean, cov }, max)
    }
}
