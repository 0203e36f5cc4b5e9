use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest jitter tried before a Gram matrix is declared ill-conditioned.
pub const MAX_JITTER: f64 = 1e-4;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GprConfig {
    /// Matérn smoothness; must be a half-integer.
    pub nu: f64,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Initial diagonal jitter, escalated tenfold up to [`MAX_JITTER`].
    pub jitter: f64,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            nu: 9.5,
            lengthscale: 10.0,
            signal_variance: 4.0,
            noise_variance: 0.04,
            jitter: 1e-8,
        }
    }
}

impl GprConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.nu - 0.5;
        if !(p >= 0.0) || p.fract() != 0.0 || p > 30.0 {
            return Err(Error::Config(format!("nu must be a half-integer in [0.5, 30.5], got {}", self.nu)));
        }
        if !(self.lengthscale > 0.0 && self.signal_variance > 0.0 && self.noise_variance > 0.0 && self.jitter > 0.0) {
            return Err(Error::Config("GPR hyperparameters must be positive".into()));
        }
        Ok(())
    }

    /// Polynomial order `p` of the closed form, with `nu = p + 1/2`.
    pub fn order(&self) -> usize {
        (self.nu - 0.5).round() as usize
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Half-integer Matérn covariance
/// `σ² e^{-s} p!/(2p)! Σ_i (p+i)!/(i!(p−i)!) (2s)^{p−i}` with `s = √(2ν) r/ℓ`.
pub fn matern_kernel(y1: f64, y2: f64, cfg: &GprConfig) -> f64 {
    let p = cfg.order();
    let s = (2.0 * cfg.nu).sqrt() * (y1 - y2).abs() / cfg.lengthscale;
    let norm = factorial(p) / factorial(2 * p);
    let mut poly = 0.0;
    for i in 0..=p {
        let c = factorial(p + i) / (factorial(i) * factorial(p - i));
        poly += c * (2.0 * s).powi((p - i) as i32);
    }
    cfg.signal_variance * (-s).exp() * norm * poly
}

/// Gaussian process posterior of `x = f(y)` with a constant mean equal to
/// the sample mean of the targets.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    cfg: GprConfig,
    inputs: Vec<f64>,
    mean: f64,
    alpha: DVector<f64>,
    lower: DMatrix<f64>,
    /// Jitter that made the Gram matrix factorizable.
    pub jitter: f64,
    /// Mean squared residual of the posterior mean at the training inputs.
    pub residual_variance: f64,
}

impl GpPosterior {
    pub fn fit(inputs: &[f64], targets: &[f64], cfg: &GprConfig) -> Result<Self> {
        cfg.validate()?;
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let n = inputs.len();
        let mean = targets.iter().sum::<f64>() / n as f64;
        let gram = DMatrix::from_fn(n, n, |i, j| matern_kernel(inputs[i], inputs[j], cfg));
        let mut jitter = cfg.jitter;
        let chol = loop {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += cfg.noise_variance + jitter;
            }
            if let Some(c) = k.cholesky() {
                break c;
            }
            jitter *= 10.0;
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::IllConditioned { jitter });
            }
        };
        let centered = DVector::from_iterator(n, targets.iter().map(|t| t - mean));
        let alpha = chol.solve(&centered);
        let mut post = Self {
            cfg: *cfg,
            inputs: inputs.to_vec(),
            mean,
            alpha,
            lower: chol.unpack(),
            jitter,
            residual_variance: 0.0,
        };
        post.residual_variance = inputs
            .iter()
            .zip(targets)
            .map(|(&y, &x)| (post.predict(y).0 - x).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(post)
    }

    /// Posterior mean and latent (noise-free) variance at `y`.
    pub fn predict(&self, y: f64) -> (f64, f64) {
        let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|&t| matern_kernel(y, t, &self.cfg)));
        let mean = self.mean + k.dot(&self.alpha);
        let v = self.lower.solve_lower_triangular(&k).expect("non-singular factor");
        let var = (self.cfg.signal_variance - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Observation noise level used for intervals: the configured noise or
    /// the fit's own residual spread, whichever is larger.
    pub fn noise_level(&self) -> f64 {
        self.cfg.noise_variance.max(self.residual_variance)
    }

    /// 95% interval half-width at `y` for a new boundary observation.
    pub fn ci_half_width(&self, y: f64) -> f64 {
        Z95 * (self.predict(y).1 + self.noise_level()).sqrt()
    }
}
