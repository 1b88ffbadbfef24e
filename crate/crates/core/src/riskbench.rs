//! Monte Carlo risk experiments and convergence-rate forecasts.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, BlurKernel, ChannelDesign, LinearMemory, Observations};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::fourier::{grid_norm_sqr, FourierSeries};
use crate::meyer::{MeyerSpec, WaveletCoefficients};
use crate::noise::{NoiseKind, NoiseModel};
use crate::seed;
use crate::stats::{fmt17, mean_se, ols, LinearFit};

/// Besov ball `B^s_{p,q}(A)`; `p`, `q` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovBall {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub radius: f64,
}

impl BesovBall {
    pub fn new(s: f64, p: f64, q: f64, radius: f64) -> Result<Self> {
        let ball = Self { s, p, q, radius };
        ball.validate()?;
        Ok(ball)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.q >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Besov indices need p, q >= 1, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        if !(self.s > (1.0 / self.p - 0.5).max(0.0) && self.s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Besov smoothness needs s > max(0, 1/p - 1/2), got s = {}, p = {}",
                self.s, self.p
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidParameter(format!("Besov radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }

    pub fn p_prime(&self) -> f64 {
        self.p.min(2.0)
    }

    /// `s' = s + 1/2 - 1/p`.
    pub fn s_prime(&self) -> f64 {
        self.s + 0.5 - 1.0 / self.p
    }

    /// `s* = s + 1/2 - 1/p'`, equal to `min(s, s')`.
    pub fn s_star(&self) -> f64 {
        self.s + 0.5 - 1.0 / self.p_prime()
    }
}

fn lp_norm(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// The ball norm `‖a_{j0}‖_p + (Σ_j 2^{js'q} ‖b_j‖_p^q)^{1/q}`.
///
/// Errors when the finest level still carries more than 1% of the level sum.
pub fn besov_seminorm<T: crate::Real>(coeffs: &WaveletCoefficients<T>, ball: &BesovBall) -> Result<f64> {
    let p = ball.p;
    let scaling = lp_norm(coeffs.scaling.iter().map(|c| c.norm().to_f64_lossy()), p);
    let terms: Vec<f64> = coeffs
        .levels()
        .map(|(j, level)| 2f64.powf(j as f64 * ball.s_prime()) * lp_norm(level.iter().map(|c| c.norm().to_f64_lossy()), p))
        .collect();
    let detail = lp_norm(terms.iter().copied(), ball.q);
    if let Some(&last) = terms.last() {
        let share = if ball.q.is_infinite() {
            last / detail
        } else {
            (last / detail).powf(ball.q)
        };
        if detail > 0.0 && share > 0.01 && terms.len() > 1 {
            return Err(Error::InsufficientLevels(format!(
                "finest level {} holds {:.2}% of the Besov level sum",
                coeffs.j_max - 1,
                100.0 * share
            )));
        }
    }
    Ok(scaling + detail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TestFunction {
    /// `amplitude · sin(2π freq t)`.
    SmoothSine { freq: i64, amplitude: f64 },
    /// Sum of three periodized Gaussian bumps.
    BumpMix { width: f64, amplitude: f64 },
    /// Sawtooth with Fourier decay sharpened to `|m|^{-decay}`.
    SawtoothSmoothed { decay: f64, amplitude: f64 },
}

/// Fourier coefficients `f_m`, `|m| ≤ band`, of a real test function.
pub fn make_test_function(kind: &TestFunction, band: usize) -> FourierSeries<f64> {
    let zero = Complex64::new(0.0, 0.0);
    match *kind {
        TestFunction::SmoothSine { freq, amplitude } => FourierSeries::from_fn(band, |m| {
            if m.abs() == freq.abs() && m != 0 {
                Complex64::new(0.0, -0.5 * amplitude * (m.signum() * freq.signum()) as f64)
            } else {
                zero
            }
        }),
        TestFunction::BumpMix { width, amplitude } => {
            const BUMPS: [(f64, f64); 3] = [(0.2, 1.0), (0.55, -0.6), (0.8, 0.8)];
            FourierSeries::from_fn(band, |m| {
                let mf = m as f64;
                let envelope = amplitude * width * (2.0 * PI).sqrt() * (-2.0 * PI * PI * mf * mf * width * width).exp();
                BUMPS
                    .iter()
                    .map(|&(c, h)| Complex64::from_polar(h * envelope, -2.0 * PI * mf * c))
                    .sum()
            })
        }
        TestFunction::SawtoothSmoothed { decay, amplitude } => FourierSeries::from_fn(band, |m| {
            if m == 0 {
                zero
            } else {
                Complex64::new(0.0, amplitude * m.signum() as f64 * (m.abs() as f64).powf(-decay) / (2.0 * PI))
            }
        }),
    }
}

/// Numerical Besov membership record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovCertificate {
    pub ball: BesovBall,
    pub norm: f64,
    pub j0: u32,
    pub j_max: u32,
    pub member: bool,
}

/// Evaluates the ball norm of `f` on levels `[j0, J)` with `J` the finest
/// level its band supports.
pub fn certify(f: &FourierSeries<f64>, ball: &BesovBall, j0: u32) -> Result<BesovCertificate> {
    let band = f.band() as i64;
    let probe = MeyerSpec::new(j0, 30)?;
    if probe.scaling_frequency_set(j0).max_abs() > band {
        return Err(Error::InsufficientLevels(format!("band {band} too small for scaling level {j0}")));
    }
    let mut j_max = j0;
    while j_max < 30 && probe.frequency_set(j_max).max_abs() <= band {
        j_max += 1;
    }
    let coeffs = crate::meyer::analyze(f, MeyerSpec::new(j0, j_max)?)?;
    let norm = besov_seminorm(&coeffs, ball)?;
    Ok(BesovCertificate {
        ball: *ball,
        norm,
        j0,
        j_max,
        member: norm <= ball.radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateRegime {
    Dense,
    Sparse,
    SuperSmooth,
}

/// Forecast `E‖f̂_n - f‖² ≍ (n*)^{-exponent} (ln n)^{log_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateForecast {
    pub regime: RateRegime,
    pub exponent: f64,
    pub log_exponent: f64,
    pub rho: f64,
}

/// `ϱ`; compares `ν(2-p)` with `p s*` after dividing by `p`, which keeps
/// `p = ∞` finite.
fn rho(ball: &BesovBall, nu: f64) -> (f64, std::cmp::Ordering) {
    let (p, q, s) = (ball.p, ball.q, ball.s);
    let lhs = nu * (2.0 / p - 1.0);
    let rhs = ball.s_star();
    let ord = if (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) {
        std::cmp::Ordering::Equal
    } else {
        lhs.total_cmp(&rhs)
    };
    let value = match ord {
        std::cmp::Ordering::Less => (2.0 * nu + 1.0) * (2.0 / p - 1.0).max(0.0) / (2.0 * s + 2.0 * nu + 1.0),
        std::cmp::Ordering::Equal => {
            if p.is_infinite() {
                0.0
            } else {
                (1.0 - p / q).max(0.0)
            }
        }
        std::cmp::Ordering::Greater => 0.0,
    };
    (value, ord)
}

pub fn theoretical_rate(ball: &BesovBall, nu: f64, lambda1: f64, alpha1: f64, beta: f64) -> Result<RateForecast> {
    ball.validate()?;
    if !(ball.s > 1.0 / ball.p_prime()) {
        return Err(Error::InvalidParameter(format!(
            "rate forecast needs s > 1/p' = {}, got s = {}",
            1.0 / ball.p_prime(),
            ball.s
        )));
    }
    if !(alpha1 >= 0.0 && nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("need alpha1 >= 0 and nu >= 0, got {alpha1}, {nu}")));
    }
    let s_star = ball.s_star();
    if alpha1 > 0.0 {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("super-smooth forecast needs beta > 0, got {beta}")));
        }
        return Ok(RateForecast {
            regime: RateRegime::SuperSmooth,
            exponent: 0.0,
            log_exponent: -2.0 * s_star / beta,
            rho: 0.0,
        });
    }
    let (rho, ord) = rho(ball, nu);
    let s = ball.s;
    Ok(if ord == std::cmp::Ordering::Less {
        let e = 2.0 * s / (2.0 * s + 2.0 * nu + 1.0);
        RateForecast {
            regime: RateRegime::Dense,
            exponent: e,
            log_exponent: rho + e * lambda1,
            rho,
        }
    } else {
        let e = 2.0 * s_star / (2.0 * s_star + 2.0 * nu);
        RateForecast {
            regime: RateRegime::Sparse,
            exponent: e,
            log_exponent: e + rho + e * lambda1,
            rho,
        }
    })
}

/// Channel points as a function of `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PointRule {
    /// `u_l = a + (b - a) l / M`, `l = 1..=M`.
    Interval { a: f64, b: f64 },
    Explicit { u: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MemoryRule {
    Constant { d: f64 },
    /// `d_l = a1 u_l + a2`.
    Linear { a1: f64, a2: f64 },
    Explicit { d: Vec<f64> },
}

/// Recipe producing a [`ChannelDesign`] for every total sample size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRule {
    /// `M = 2^{round(θ log2 n)}`, keeping `N = n/M` a power of two.
    pub theta: f64,
    /// Fixed `M`, overriding `theta`.
    #[serde(default)]
    pub channels: Option<usize>,
    pub points: PointRule,
    pub memory: MemoryRule,
    pub noise_kind: NoiseKind,
    /// `0` gives noiseless observations.
    pub noise_scale: f64,
}

impl DesignRule {
    pub fn noiseless(&self) -> bool {
        self.noise_scale == 0.0
    }

    pub fn channel_count(&self, n: usize) -> Result<usize> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("sample size n = {n} must be a power of two")));
        }
        let fixed = match (&self.points, &self.memory) {
            (PointRule::Explicit { u }, _) => Some(u.len()),
            (_, MemoryRule::Explicit { d }) => Some(d.len()),
            _ => self.channels,
        };
        let m = match fixed {
            Some(m) => m,
            None => {
                if !(0.0..1.0).contains(&self.theta) {
                    return Err(Error::InvalidParameter(format!("theta must lie in [0, 1), got {}", self.theta)));
                }
                1usize << (self.theta * n.trailing_zeros() as f64).round() as u32
            }
        };
        if m == 0 || n % m != 0 || !(n / m).is_power_of_two() || n / m < 2 {
            return Err(Error::InvalidParameter(format!(
                "M = {m} channels do not split n = {n} into power-of-two channels"
            )));
        }
        Ok(m)
    }

    pub fn design(&self, n: usize) -> Result<ChannelDesign> {
        let m = self.channel_count(n)?;
        let u: Vec<f64> = match &self.points {
            PointRule::Interval { a, b } => (1..=m).map(|l| a + (b - a) * l as f64 / m as f64).collect(),
            PointRule::Explicit { u } => u.clone(),
        };
        let mut linear = None;
        let d: Vec<f64> = match &self.memory {
            MemoryRule::Constant { d } => vec![*d; m],
            MemoryRule::Linear { a1, a2 } => {
                let mem = LinearMemory { a1: *a1, a2: *a2 };
                mem.validate()?;
                linear = Some(mem);
                u.iter().map(|ul| a1 * ul + a2).collect()
            }
            MemoryRule::Explicit { d } => d.clone(),
        };
        if d.len() != m {
            return Err(Error::Shape(format!("{} memory values for {m} channels", d.len())));
        }
        let scale = if self.noiseless() { 1.0 } else { self.noise_scale };
        let noise = d
            .iter()
            .map(|&dl| NoiseModel::new(self.noise_kind, dl, scale))
            .collect::<Result<Vec<_>>>()?;
        let mut design = ChannelDesign::new(u, noise, n / m)?;
        design.linear = linear;
        Ok(design)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub n: usize,
    pub channels: usize,
    pub samples: usize,
    pub n_star: f64,
    pub risk_mean: f64,
    pub risk_se: f64,
    pub reps: usize,
    /// `Σ_{|m| > (N-1)/2} |f_m|²`, the truth's energy beyond the grid band.
    pub tail: f64,
    pub j0: u32,
    pub j_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub grid: Vec<RiskPoint>,
    pub fit: Option<LinearFit>,
    pub forecast: Option<RateForecast>,
    pub certificate: Option<BesovCertificate>,
}

impl RiskReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,M,N,n_star,risk_mean,risk_se,reps")?;
        for p in &self.grid {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.n,
                p.channels,
                p.samples,
                fmt17(p.n_star),
                fmt17(p.risk_mean),
                fmt17(p.risk_se),
                p.reps
            )?;
        }
        Ok(())
    }
}

/// Truth restricted to the observable band of an `N`-point channel and the
/// energy left outside it.
fn split_band(f: &FourierSeries<f64>, samples: usize) -> (FourierSeries<f64>, f64) {
    let band = (samples - 1) / 2;
    let inside = FourierSeries::from_fn(band, |m| f.get(m));
    let tail = f.iter().filter(|(m, _)| m.unsigned_abs() as usize > band).map(|(_, c)| c.norm_sqr()).sum();
    (inside, tail)
}

/// Squared grid-norm errors of `reps` independent replicates at one `n`.
pub fn replicate_risks(
    f: &FourierSeries<f64>,
    design: &ChannelDesign,
    kernel: &BlurKernel,
    config: &EstimatorConfig,
    noiseless: bool,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let estimator = Estimator::<f64>::new(design, kernel, config)?;
    let n = design.total_samples();
    let (truth, _) = split_band(f, design.samples_per_channel);
    let truth_grid = truth.evaluate_grid(design.samples_per_channel);
    let signal = channel::simulate_signal(&truth, design, kernel)?;
    let samplers = if noiseless { Vec::new() } else { channel::channel_samplers(design)? };
    let run = |y: &Observations<f64>| -> Result<f64> {
        let est = estimator.run(y)?;
        let diff: Vec<f64> = est.grid.iter().zip(&truth_grid).map(|(a, b)| a - b).collect();
        Ok(grid_norm_sqr(&diff))
    };
    if noiseless {
        let r = run(&signal)?;
        return Ok(vec![r; reps]);
    }
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let noise = channel::noise_from_samplers(design, &samplers, seed::derive_seed(master_seed, &[n as u64, rep as u64]))?;
            run(&signal.add(&noise)?)
        })
        .collect()
}

/// Empirical risk over `n_grid` with `reps` replicates per size.
pub fn mc_risk(
    f: &FourierSeries<f64>,
    family: &DesignRule,
    kernel: &BlurKernel,
    config: &EstimatorConfig,
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<RiskReport> {
    if reps < 30 {
        return Err(Error::InvalidParameter(format!("need at least 30 replicates, got {reps}")));
    }
    let mut grid = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let design = family.design(n)?;
        let risks = replicate_risks(f, &design, kernel, config, family.noiseless(), reps, master_seed)?;
        let (risk_mean, risk_se) = mean_se(&risks);
        let (_, n_star) = channel::epsilon_n(&design);
        let levels = crate::estimator::choose_levels(n_star, design.samples_per_channel, config)?;
        grid.push(RiskPoint {
            n,
            channels: design.channels(),
            samples: design.samples_per_channel,
            n_star,
            risk_mean,
            risk_se,
            reps,
            tail: split_band(f, design.samples_per_channel).1,
            j0: levels.j0,
            j_max: levels.j_max,
        });
    }
    Ok(RiskReport {
        grid,
        fit: None,
        forecast: None,
        certificate: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regressor {
    LogNStar,
    LogLogNStar,
}

/// OLS of `ln risk` on `ln n*` or `ln ln n*`.
pub fn fit_rate(report: &RiskReport, regressor: Regressor) -> Result<LinearFit> {
    let pts: Vec<&RiskPoint> = report.grid.iter().filter(|p| p.risk_mean > 0.0).collect();
    if pts.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "rate fit needs at least 4 positive risks, got {}",
            pts.len()
        )));
    }
    let x: Vec<f64> = pts
        .iter()
        .map(|p| match regressor {
            Regressor::LogNStar => p.n_star.ln(),
            Regressor::LogLogNStar => p.n_star.ln().ln(),
        })
        .collect();
    let y: Vec<f64> = pts.iter().map(|p| p.risk_mean.ln()).collect();
    ols(&x, &y)
}

/// Resolved levels and thresholds at one sample size, without simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub n: usize,
    pub channels: usize,
    pub samples: usize,
    pub n_star: f64,
    pub j0: u32,
    pub j_max: u32,
    pub thresholds: Vec<(u32, f64)>,
    pub warnings: Vec<String>,
}

pub fn plan(family: &DesignRule, config: &EstimatorConfig, n_grid: &[usize]) -> Result<Vec<PlanRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let design = family.design(n)?;
            let (_, n_star) = channel::epsilon_n(&design);
            let levels = crate::estimator::choose_levels(n_star, design.samples_per_channel, config)?;
            let thresholds = if levels.linear_only() {
                Vec::new()
            } else {
                levels
                    .detail_levels()
                    .map(|j| Ok((j, crate::estimator::threshold_value(j, n_star, config)?)))
                    .collect::<Result<Vec<_>>>()?
            };
            Ok(PlanRow {
                n,
                channels: design.channels(),
                samples: design.samples_per_channel,
                n_star,
                j0: levels.j0,
                j_max: levels.j_max,
                thresholds,
                warnings: levels.warnings,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn ball(s: f64, p: f64, q: f64) -> BesovBall {
        BesovBall::new(s, p, q, 1.0).unwrap()
    }

    #[test]
    fn ball_derived_indices() {
        let b = ball(1.5, 1.0, 2.0);
        assert_eq!(b.p_prime(), 1.0);
        assert_eq!(b.s_prime(), 1.0);
        assert_eq!(b.s_star(), b.s.min(b.s_prime()));
        let b = ball(2.0, 4.0, 2.0);
        assert_eq!(b.s_star(), 2.0);
        assert_eq!(b.s_star(), b.s.min(b.s_prime()));
        assert!(BesovBall::new(0.4, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn seminorm_single_coefficient() {
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (f64::INFINITY, 3.0), (1.5, f64::INFINITY)] {
            let b = ball(2.0, p, q);
            let mut c = WaveletCoefficients::<f64>::zeros(2, 6);
            c.level_mut(3)[5] = Complex::new(0.7, 0.0);
            let expected = 0.7 * 2f64.powf(3.0 * b.s_prime());
            assert!((besov_seminorm(&c, &b).unwrap() - expected).abs() < 1e-12 * expected);
        }
        assert_eq!(besov_seminorm(&WaveletCoefficients::<f64>::zeros(1, 4), &ball(2.0, 2.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_rejects_unconverged_levels() {
        let mut c = WaveletCoefficients::<f64>::zeros(1, 4);
        c.level_mut(3)[0] = Complex::new(1.0, 0.0);
        c.level_mut(2)[0] = Complex::new(1.0, 0.0);
        assert!(matches!(besov_seminorm(&c, &ball(2.0, 2.0, 2.0)), Err(Error::InsufficientLevels(_))));
    }

    #[test]
    fn test_functions_are_real() {
        for kind in [
            TestFunction::SmoothSine { freq: 3, amplitude: 1.0 },
            TestFunction::BumpMix { width: 0.05, amplitude: 1.0 },
            TestFunction::SawtoothSmoothed { decay: 2.5, amplitude: 1.0 },
        ] {
            let f = make_test_function(&kind, 100);
            assert!(f.hermitian_defect() < 1e-15, "{kind:?}");
        }
        let f = make_test_function(&TestFunction::SmoothSine { freq: 3, amplitude: 2.0 }, 10);
        let nonzero: Vec<i64> = f.iter().filter(|(_, c)| c.norm() > 0.0).map(|(m, _)| m).collect();
        assert_eq!(nonzero, vec![-3, 3]);
        let grid = f.evaluate_grid(64);
        for (i, v) in grid.iter().enumerate() {
            assert!((v - 2.0 * (2.0 * PI * 3.0 * i as f64 / 64.0).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn bump_mix_matches_direct_sum() {
        let f = make_test_function(&TestFunction::BumpMix { width: 0.04, amplitude: 1.0 }, 200);
        let grid = f.evaluate_grid(512);
        for i in (0..512).step_by(37) {
            let t = i as f64 / 512.0;
            let direct: f64 = [(0.2, 1.0), (0.55, -0.6), (0.8, 0.8)]
                .iter()
                .map(|&(c, h)| {
                    (-3..=3)
                        .map(|k| h * (-(t - c - k as f64).powi(2) / (2.0 * 0.04 * 0.04)).exp())
                        .sum::<f64>()
                })
                .sum();
            assert!((grid[i] - direct).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn forecast_dense_and_sparse() {
        let f = theoretical_rate(&ball(2.0, 2.0, 2.0), 2.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(f.regime, RateRegime::Dense);
        assert!((f.exponent - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(f.rho, 0.0);
        // p = 1: ν(2-p) = 2 ≥ p s* = s - 1/2 when s ≤ 2.5.
        let b = ball(2.2, 1.0, 2.0);
        let f = theoretical_rate(&b, 2.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(f.regime, RateRegime::Sparse);
        let s_star = b.s_star();
        assert!((f.exponent - 2.0 * s_star / (2.0 * s_star + 4.0)).abs() < 1e-15);
        assert_eq!(f.rho, 0.0);
        let f = theoretical_rate(&ball(2.0, 2.0, 2.0), 1.0, 0.0, 0.3, 2.0).unwrap();
        assert_eq!((f.regime, f.exponent, f.log_exponent), (RateRegime::SuperSmooth, 0.0, -2.0));
        assert!(theoretical_rate(&ball(0.8, 1.0, 1.0), 1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn forecast_boundary_uses_q_branch() {
        // p = 1, ν = 2: boundary at s* = s - 1/2 = 2.
        let b = BesovBall::new(2.5, 1.0, 4.0, 1.0).unwrap();
        let f = theoretical_rate(&b, 2.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(f.regime, RateRegime::Sparse);
        assert!((f.rho - 0.75).abs() < 1e-15);
    }

    #[test]
    fn design_rule_powers_of_two() {
        let rule = DesignRule {
            theta: 0.5,
            channels: None,
            points: PointRule::Interval { a: 0.0, b: 1.0 },
            memory: MemoryRule::Linear { a1: 0.2, a2: 0.1 },
            noise_kind: NoiseKind::Farima,
            noise_scale: 1.0,
        };
        let d = rule.design(1 << 14).unwrap();
        assert_eq!((d.channels(), d.samples_per_channel), (128, 128));
        assert!((d.memory(127) - 0.3).abs() < 1e-15);
        let d = rule.design(1 << 15).unwrap();
        assert_eq!(d.total_samples(), 1 << 15);
        assert!(rule.design(3000).is_err());
    }

    #[test]
    fn fit_rate_on_exact_power_law() {
        let grid = (14..=20)
            .map(|k| {
                let n_star = 2f64.powi(k) * 0.37;
                RiskPoint {
                    n: 1 << k,
                    channels: 1,
                    samples: 1 << k,
                    n_star,
                    risk_mean: 3.0 * n_star.powf(-0.44),
                    risk_se: 0.0,
                    reps: 30,
                    tail: 0.0,
                    j0: 0,
                    j_max: 0,
                }
            })
            .collect::<Vec<_>>();
        let mut report = RiskReport { grid, fit: None, forecast: None, certificate: None };
        assert!((fit_rate(&report, Regressor::LogNStar).unwrap().slope + 0.44).abs() < 1e-10);
        for p in report.grid.iter_mut() {
            p.risk_mean = 3.0 * p.n_star.ln().powi(-3);
        }
        assert!((fit_rate(&report, Regressor::LogLogNStar).unwrap().slope + 3.0).abs() < 1e-10);
        report.grid.truncate(3);
        assert!(fit_rate(&report, Regressor::LogNStar).is_err());
    }

    #[test]
    fn csv_columns() {
        let report = RiskReport {
            grid: vec![RiskPoint {
                n: 16,
                channels: 2,
                samples: 8,
                n_star: 16.0,
                risk_mean: 0.5,
                risk_se: 0.1,
                reps: 30,
                tail: 0.0,
                j0: 1,
                j_max: 2,
            }],
            fit: None,
            forecast: None,
            certificate: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "n,M,N,n_star,risk_mean,risk_se,reps");
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 7);
    }
}
