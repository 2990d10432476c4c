// SPDX-License-Identifier: Apache-2.0

//! Bayesian linear regression with a norm-truncated Gaussian prior.
//!
//! With prior `N(0, Λ⁻¹) 1{‖w‖₂ <= r}` and Gaussian noise of variance
//! `σ²`, the posterior is `N(μ_n, Σ_n)` restricted to the same ball, where
//! `μ_n = (XᵀX + σ²Λ)⁻¹ Xᵀy` and `Σ_n = σ² (XᵀX + σ²Λ)⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default number of proposals before truncated sampling gives up.
pub const DEFAULT_REJECTION_BUDGET: usize = 100_000;

/// Design matrix and targets with `‖x_i‖₂ <= 1` and `|y_i| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: f64,
    x_scale: f64,
    y_scale: f64,
}

const BOUND_SLACK: f64 = 1e-12;

impl RegressionData {
    /// Data already within the unit bounds.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch(x.nrows(), y.len()));
        }
        for (k, row) in x.row_iter().enumerate() {
            if row.norm() > 1.0 + BOUND_SLACK {
                return Err(Error::Domain(format!("row {k} has norm above 1")));
            }
        }
        if y.iter().any(|v| v.abs() > 1.0 + BOUND_SLACK) {
            return Err(Error::Domain("targets must lie in [-1, 1]".into()));
        }
        Ok(Self {
            x,
            y,
            sigma2,
            x_scale: 1.0,
            y_scale: 1.0,
        })
    }

    /// Rescales features by the largest row norm and targets by the
    /// largest absolute target; the factors are kept for inverting
    /// predictions.
    pub fn ingest(x: DMatrix<f64>, y: DVector<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch(x.nrows(), y.len()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in regression data".into()));
        }
        let x_scale = positive_or_one(x.row_iter().map(|r| r.norm()).fold(0.0, f64::max));
        let y_scale = positive_or_one(y.amax());
        Ok(Self {
            x: x / x_scale,
            y: y / y_scale,
            sigma2,
            x_scale,
            y_scale,
        })
    }

    /// Applies this data set's scale factors to other raw data.
    pub fn scale_like(&self, x: DMatrix<f64>, y: DVector<f64>) -> Result<RegressionData> {
        if x.ncols() != self.dim() || x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(Self {
            x: x / self.x_scale,
            y: y / self.y_scale,
            sigma2: self.sigma2,
            x_scale: self.x_scale,
            y_scale: self.y_scale,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn x_scale(&self) -> f64 {
        self.x_scale
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by index, keeping the scale factors.
    pub fn select(&self, rows: &[usize]) -> RegressionData {
        Self {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            ..self.clone()
        }
    }
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 { v } else { 1.0 }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")))
    }
}

/// Prior precision `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision {
    /// `b I`.
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Precision {
    fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        match self {
            Precision::Scalar(b) => {
                if !(*b > 0.0 && b.is_finite()) {
                    return Err(Error::Domain(format!("prior precision must be positive, got {b}")));
                }
                Ok(DMatrix::identity(d, d) * *b)
            }
            Precision::Matrix(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: m.nrows(),
                    });
                }
                if Cholesky::new(m.clone()).is_none() {
                    return Err(Error::SingularSystem);
                }
                Ok(m.clone())
            }
        }
    }
}

/// `N(μ_n, Σ_n)` truncated to `‖w‖₂ <= radius`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mu_n: DVector<f64>,
    sigma_n: DMatrix<f64>,
    radius: f64,
    factor: DMatrix<f64>,
    cov_factor: Cholesky<f64, Dyn>,
}

impl GaussianPosterior {
    pub fn mu_n(&self) -> &DVector<f64> {
        &self.mu_n
    }

    pub fn sigma_n(&self) -> &DMatrix<f64> {
        &self.sigma_n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.mu_n.len()
    }

    /// `ln N(w; μ_n, Σ_n)` up to a constant, `-∞` outside the ball.
    pub fn log_density_unnormalized(&self, w: &DVector<f64>) -> f64 {
        if w.norm() > self.radius {
            return f64::NEG_INFINITY;
        }
        let diff = w - &self.mu_n;
        let solved = self.cov_factor.solve(&diff);
        -0.5 * diff.dot(&solved)
    }
}

/// Conjugate posterior for the given prior precision and truncation radius.
pub fn posterior(data: &RegressionData, precision: &Precision, radius: f64) -> Result<GaussianPosterior> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    let d = data.dim();
    let lambda = precision.matrix(d)?;
    let xt = data.x.transpose();
    let a = &xt * &data.x + lambda * data.sigma2;
    let chol = Cholesky::new(a).ok_or(Error::SingularSystem)?;
    let mu_n = chol.solve(&(&xt * &data.y));
    let mut sigma_n = chol.solve(&DMatrix::identity(d, d)) * data.sigma2;
    sigma_n = (&sigma_n + sigma_n.transpose()) * 0.5;
    let cov_factor = Cholesky::new(sigma_n.clone()).ok_or(Error::SingularSystem)?;
    let factor = cov_factor.l();
    Ok(GaussianPosterior {
        mu_n,
        sigma_n,
        radius,
        factor,
        cov_factor,
    })
}

/// Rejection draw from the truncated posterior.
pub fn sample_truncated<R: Rng + ?Sized>(post: &GaussianPosterior, rng: &mut R) -> Result<DVector<f64>> {
    sample_truncated_with_budget(post, DEFAULT_REJECTION_BUDGET, rng)
}

pub fn sample_truncated_with_budget<R: Rng + ?Sized>(
    post: &GaussianPosterior,
    budget: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = post.dim();
    for _ in 0..budget {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &post.mu_n + &post.factor * z;
        if w.norm() <= post.radius {
            return Ok(w);
        }
    }
    Err(Error::RejectionBudgetExhausted(budget))
}

/// `L(w) = n/(2σ²) (1 + 2‖w‖₁ + d‖w‖₂)`.
pub fn regression_sensitivity(w: &DVector<f64>, n: usize, d: usize, sigma2: f64) -> f64 {
    n as f64 / (2.0 * sigma2) * (1.0 + 2.0 * w.lp_norm(1) + d as f64 * w.norm())
}

/// `L(w) = n/(2σ²) (1 + (d+2)‖w‖₁)`.
pub fn regression_sensitivity_alt(w: &DVector<f64>, n: usize, d: usize, sigma2: f64) -> f64 {
    n as f64 / (2.0 * sigma2) * (1.0 + (d as f64 + 2.0) * w.lp_norm(1))
}

/// `L` at the worst point of the ball, using `‖w‖₁ <= sqrt(d) r`.
pub fn regression_sensitivity_at_radius(radius: f64, n: usize, d: usize, sigma2: f64) -> f64 {
    let df = d as f64;
    n as f64 / (2.0 * sigma2) * (1.0 + 2.0 * df.sqrt() * radius + df * radius)
}

/// Alternative form at the worst point of the ball.
pub fn regression_sensitivity_alt_at_radius(radius: f64, n: usize, d: usize, sigma2: f64) -> f64 {
    let df = d as f64;
    n as f64 / (2.0 * sigma2) * (1.0 + (df + 2.0) * df.sqrt() * radius)
}

/// Privacy constant of posterior sampling: `2L` per unit of
/// `ρ(D, D') = Σ ‖(Δx_i, Δy_i)‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionPrivacyReport {
    pub lipschitz: f64,
    pub lipschitz_alt: f64,
    pub epsilon_per_unit_rho: f64,
}

pub fn regression_privacy(radius: f64, n: usize, d: usize, sigma2: f64) -> RegressionPrivacyReport {
    let l = regression_sensitivity_at_radius(radius, n, d, sigma2);
    RegressionPrivacyReport {
        lipschitz: l,
        lipschitz_alt: regression_sensitivity_alt_at_radius(radius, n, d, sigma2),
        epsilon_per_unit_rho: 2.0 * l,
    }
}

/// Default truncation radius `10 / sqrt(b)`.
pub fn default_radius(b: f64) -> f64 {
    10.0 / b.sqrt()
}

/// Mean squared error of `X w` against `y`.
pub fn mse_at(w: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.ncols() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let r = x * w - y;
    Ok(r.norm_squared() / y.len() as f64)
}

/// MSE of the predictor using the mean of `samples` truncated draws.
pub fn predictive_mse<R: Rng + ?Sized>(
    post: &GaussianPosterior,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("samples must be at least 1".into()));
    }
    let mut mean = DVector::zeros(post.dim());
    for _ in 0..samples {
        mean += sample_truncated(post, rng)?;
    }
    mean /= samples as f64;
    mse_at(&mean, x, y)
}
