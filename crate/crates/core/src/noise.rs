//! Stationary Gaussian error laws with long memory.
//!
//! Three families are supported: white noise, FARIMA(0,d,0) and fractional
//! Gaussian noise. Each has spectral density `a(λ) ~ |λ|^{-2d}` near the
//! origin, and the `N×N` Toeplitz covariance of a length-`N` stretch has
//! extreme eigenvalues of order `N^{2d}`.
//!
//! Spectral densities follow the normalisation
//! `γ(k) = ∫_{-π}^{π} e^{ikλ} a(λ) dλ`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`toeplitz_eigen_bounds`].
pub const EIGEN_SIZE_LIMIT: usize = 4096;
/// Largest dimension for which the Cholesky fallback sampler is attempted.
pub const CHOLESKY_SIZE_LIMIT: usize = 1 << 14;
/// Circulant eigenvalues below this are treated as a failed embedding.
pub const EMBEDDING_NEGATIVE_TOL: f64 = -1e-10;

const FGN_SERIES_TERMS: i64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Farima,
    Fgn,
}

/// Law of one channel's error sequence.
///
/// `d` is the memory exponent; for fractional Gaussian noise the Hurst
/// index is `H = d + 1/2`. `scale` is the innovation standard deviation
/// (FARIMA), the marginal standard deviation (fGn, white).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub d: f64,
    pub scale: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, d: f64, scale: f64) -> Result<Self> {
        let model = Self { kind, d, scale };
        model.validate()?;
        Ok(model)
    }

    pub fn white(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::White, 0.0, scale)
    }

    pub fn farima(d: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseKind::Farima, d, scale)
    }

    pub fn fgn(hurst: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseKind::Fgn, hurst - 0.5, scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && (0.0..0.5).contains(&self.d)) {
            return Err(Error::InvalidParameter(format!(
                "memory parameter d = {} must satisfy 0 <= d < 1/2",
                self.d
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise scale = {} must be positive",
                self.scale
            )));
        }
        if self.kind == NoiseKind::White && self.d != 0.0 {
            return Err(Error::InvalidParameter(
                "white noise requires d = 0".to_string(),
            ));
        }
        Ok(())
    }

    pub fn hurst(&self) -> f64 {
        self.d + 0.5
    }

    /// Spectral density `a(λ)` on `[-π, π]`.
    pub fn spectral_density(&self, lambda: f64) -> Result<f64> {
        if !(lambda.abs() <= PI) {
            return Err(Error::FrequencyDomain { lambda });
        }
        let s2 = self.scale * self.scale;
        let flat = s2 / (2.0 * PI);
        if lambda == 0.0 {
            return if self.d > 0.0 {
                Err(Error::SpectralPole { d: self.d })
            } else {
                Ok(flat)
            };
        }
        Ok(match self.kind {
            NoiseKind::White => flat,
            NoiseKind::Farima => flat * (2.0 * (1.0 - lambda.cos())).powf(-self.d),
            NoiseKind::Fgn => {
                let h = self.hurst();
                let x = lambda.abs() / (2.0 * PI);
                let prefactor = s2 * (2.0 * PI).powf(-2.0 * h - 2.0)
                    * gamma(2.0 * h + 1.0)
                    * (PI * h).sin()
                    * 4.0
                    * (lambda / 2.0).sin().powi(2);
                prefactor * fgn_series(x, 2.0 * h + 1.0)
            }
        })
    }

    /// Autocovariance `γ(k)`; symmetric in the lag.
    pub fn autocovariance(&self, lag: i64) -> f64 {
        let k = lag.unsigned_abs() as f64;
        let s2 = self.scale * self.scale;
        match self.kind {
            NoiseKind::White => {
                if lag == 0 {
                    s2
                } else {
                    0.0
                }
            }
            NoiseKind::Farima if self.d == 0.0 => {
                if lag == 0 {
                    s2
                } else {
                    0.0
                }
            }
            NoiseKind::Farima => {
                let d = self.d;
                let log_const = ln_gamma(1.0 - 2.0 * d) - ln_gamma(d) - ln_gamma(1.0 - d);
                s2 * (log_const + ln_gamma(k + d) - ln_gamma(k + 1.0 - d)).exp()
            }
            NoiseKind::Fgn => {
                let two_h = 2.0 * self.hurst();
                0.5 * s2 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
            }
        }
    }

    /// First `n` autocovariances `γ(0), …, γ(n-1)`.
    pub fn autocovariances(&self, n: usize) -> Vec<f64> {
        (0..n as i64).map(|k| self.autocovariance(k)).collect()
    }

    /// Dense `n×n` Toeplitz covariance `[γ(j-k)]`.
    pub fn covariance_matrix(&self, n: usize) -> DMatrix<f64> {
        let acv = self.autocovariances(n);
        DMatrix::from_fn(n, n, |i, j| acv[i.abs_diff(j)])
    }

    pub fn sample_path(&self, n_points: usize, seed: u64) -> Result<Vec<f64>> {
        let sampler = GaussianSampler::new(self, n_points)?;
        let mut rng = crate::seed::stream(seed, &[]);
        Ok(sampler.sample(&mut rng))
    }
}

/// `Σ_k |k + x|^{-a}` for `x ∈ (0, 1/2]`, truncated at `|k| ≤ 10⁴` with a
/// midpoint-rule tail.
fn fgn_series(x: f64, a: f64) -> f64 {
    let kmax = FGN_SERIES_TERMS;
    // Accumulate small terms first.
    let mut sum = 0.0;
    for k in (1..=kmax).rev() {
        let kf = k as f64;
        sum += (kf + x).powf(-a) + (kf - x).powf(-a);
    }
    sum += x.powf(-a);
    let edge = kmax as f64 + 0.5;
    sum + ((edge + x).powf(1.0 - a) + (edge - x).powf(1.0 - a)) / (a - 1.0)
}

/// Extreme eigenvalues of the Toeplitz covariance of `n_points` consecutive
/// observations, with the `N^{2d}`-normalised ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub n_points: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

pub fn toeplitz_eigen_bounds(model: &NoiseModel, n_points: usize) -> Result<CovarianceSummary> {
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!(
            "eigen bounds need n_points >= 2, got {n_points}"
        )));
    }
    if n_points > EIGEN_SIZE_LIMIT {
        return Err(Error::SizeLimit {
            what: "dense Toeplitz eigensolve",
            size: n_points,
            limit: EIGEN_SIZE_LIMIT,
        });
    }
    let eig = model.covariance_matrix(n_points).symmetric_eigenvalues();
    let lambda_min = eig.min();
    let lambda_max = eig.max();
    let norm = (n_points as f64).powf(2.0 * model.d);
    Ok(CovarianceSummary {
        n_points,
        lambda_min,
        lambda_max,
        ratio_min: lambda_min / norm,
        ratio_max: lambda_max / norm,
    })
}

#[derive(Clone)]
enum Method {
    Scalar(f64),
    Circulant {
        sqrt_eigen: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky(DMatrix<f64>),
}

/// Exact sampler for a zero-mean stationary Gaussian vector of fixed length.
///
/// Circulant embedding of size `2(N-1)` is tried first; if its spectrum has
/// an eigenvalue below `-1e-10` a Cholesky factor of the Toeplitz matrix is
/// used instead (up to [`CHOLESKY_SIZE_LIMIT`]). The setup cost is paid once
/// and [`GaussianSampler::sample`] can be called for many replicates.
#[derive(Clone)]
pub struct GaussianSampler {
    n_points: usize,
    method: Method,
}

impl std::fmt::Debug for GaussianSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match &self.method {
            Method::Scalar(_) => "scalar",
            Method::Circulant { .. } => "circulant",
            Method::Cholesky(_) => "cholesky",
        };
        f.debug_struct("GaussianSampler")
            .field("n_points", &self.n_points)
            .field("method", &method)
            .finish()
    }
}

impl GaussianSampler {
    pub fn new(model: &NoiseModel, n_points: usize) -> Result<Self> {
        Self::with_limit(model, n_points, CHOLESKY_SIZE_LIMIT)
    }

    pub fn with_limit(model: &NoiseModel, n_points: usize, cholesky_limit: usize) -> Result<Self> {
        model.validate()?;
        if n_points == 0 {
            return Err(Error::InvalidParameter("n_points must be >= 1".into()));
        }
        if n_points == 1 {
            return Ok(Self {
                n_points,
                method: Method::Scalar(model.autocovariance(0).sqrt()),
            });
        }
        let acv = model.autocovariances(n_points);
        let len = 2 * (n_points - 1);
        let mut row: Vec<Complex64> = Vec::with_capacity(len);
        row.extend(acv.iter().map(|&g| Complex64::new(g, 0.0)));
        row.extend(acv[1..n_points - 1].iter().rev().map(|&g| Complex64::new(g, 0.0)));
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(len);
        fft.process(&mut row);
        let min_eigen = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min_eigen >= EMBEDDING_NEGATIVE_TOL {
            let scale = 1.0 / len as f64;
            let sqrt_eigen = row.iter().map(|c| (c.re.max(0.0) * scale).sqrt()).collect();
            return Ok(Self {
                n_points,
                method: Method::Circulant { sqrt_eigen, fft },
            });
        }
        Self::cholesky_inner(model, n_points, cholesky_limit, min_eigen)
    }

    /// Forces the Toeplitz Cholesky route.
    pub fn cholesky(model: &NoiseModel, n_points: usize) -> Result<Self> {
        model.validate()?;
        if n_points == 0 {
            return Err(Error::InvalidParameter("n_points must be >= 1".into()));
        }
        Self::cholesky_inner(model, n_points, CHOLESKY_SIZE_LIMIT, f64::NAN)
    }

    fn cholesky_inner(
        model: &NoiseModel,
        n_points: usize,
        limit: usize,
        min_eigen: f64,
    ) -> Result<Self> {
        if n_points > limit {
            return Err(Error::Sampling {
                min_eigen,
                reason: format!("n_points {n_points} exceeds Cholesky limit {limit}"),
            });
        }
        let chol = model
            .covariance_matrix(n_points)
            .cholesky()
            .ok_or_else(|| Error::Sampling {
                min_eigen,
                reason: "covariance not positive definite".into(),
            })?;
        Ok(Self {
            n_points,
            method: Method::Cholesky(chol.l()),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            Method::Scalar(sd) => vec![sd * rng.sample::<f64, _>(StandardNormal)],
            Method::Circulant { sqrt_eigen, fft } => {
                let mut buf: Vec<Complex64> = sqrt_eigen
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf.truncate(self.n_points);
                buf.into_iter().map(|c| c.re).collect()
            }
            Method::Cholesky(l) => {
                let z = nalgebra::DVector::from_fn(self.n_points, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                (l * z).iter().copied().collect()
            }
        }
    }
}
