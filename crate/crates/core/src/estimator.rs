//! Fourier-domain deconvolution and the block-thresholded Meyer wavelet
//! estimator.
//!
//! ```text
//! f̂_m = Σ_l N^{-2d_l} conj(g_m(u_l)) y_m(u_l) / Σ_l N^{-2d_l} |g_m(u_l)|²
//! b̂_jk = Σ_{m∈C_j} f̂_m conj(ψ_{mjk})
//! f̂_n = Σ_k â_{j0 k} φ_{j0 k} + Σ_{j0≤j<J} Σ_r 1(B̂_jr ≥ λ_j) Σ_{k∈U_jr} b̂_jk ψ_jk
//! ```

use std::io::{self, Write};
use std::ops::Range;
use std::sync::Arc;

use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{self, BlurKernel, ChannelDesign, Observations};
use crate::error::{Error, Result};
use crate::fourier::{bin, FourierSeries};
use crate::meyer::{MeyerBasis, MeyerSpec, WaveletCoefficients};
use crate::scalar::Real;
use crate::seed;
use crate::stats::fmt17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Threshold constant; `0` keeps every block.
    pub mu: f64,
    pub nu: f64,
    pub lambda1: f64,
    pub alpha1: f64,
    pub beta: f64,
    /// Frequencies whose deconvolution denominator falls below
    /// `denom_tol · max` are zero-filled.
    pub denom_tol: f64,
    pub level_override: Option<(u32, u32)>,
    pub h1: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: 0.0,
            lambda1: 0.0,
            alpha1: 0.0,
            beta: 1.0,
            denom_tol: 1e-10,
            level_override: None,
            h1: 0.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be finite and >= 0, got {}", self.mu));
        }
        if !(self.denom_tol > 0.0 && self.denom_tol <= 1e-3) {
            return bad(format!("denom_tol must lie in (0, 1e-3], got {}", self.denom_tol));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite() && self.lambda1.is_finite()) {
            return bad(format!("need finite nu >= 0 and finite lambda1, got nu = {}, lambda1 = {}", self.nu, self.lambda1));
        }
        if !(self.alpha1 >= 0.0 && self.alpha1.is_finite()) {
            return bad(format!("alpha1 must be >= 0, got {}", self.alpha1));
        }
        if self.alpha1 > 0.0 && !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("super-smooth regime needs beta > 0, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.h1) {
            return bad(format!("h1 must lie in [0, 1), got {}", self.h1));
        }
        if let Some((j0, j_max)) = self.level_override {
            if j0 > j_max {
                return bad(format!("level override needs j0 <= J, got ({j0}, {j_max})"));
            }
        }
        Ok(())
    }

    pub fn super_smooth(&self) -> bool {
        self.alpha1 > 0.0
    }

    /// `sqrt(2/(1-h1))`, the part of the lower bound on `μ` free of
    /// kernel constants.
    pub fn mu_floor(&self) -> f64 {
        (2.0 / (1.0 - self.h1)).sqrt()
    }
}

/// Resolved resolution levels: scaling at `j0`, details on `[j0, J)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelChoice {
    pub j0: u32,
    pub j_max: u32,
    pub warnings: Vec<String>,
}

impl LevelChoice {
    pub fn linear_only(&self) -> bool {
        self.j_max == self.j0
    }

    pub fn detail_levels(&self) -> Range<u32> {
        self.j0..self.j_max
    }
}

/// Finest level whose wavelets stay below the Nyquist frequency of an
/// `N`-point channel.
pub fn max_level(samples_per_channel: usize) -> u32 {
    samples_per_channel.trailing_zeros().saturating_sub(1)
}

fn round_level(x: f64, what: &str, warnings: &mut Vec<String>) -> u32 {
    let r = x.round();
    if r < 0.0 {
        warnings.push(format!("{what} = {x:.3} rounds below zero; using level 0"));
        0
    } else {
        r as u32
    }
}

/// `j0`, `J` from the effective sample size.
pub fn choose_levels(n_star: f64, samples_per_channel: usize, config: &EstimatorConfig) -> Result<LevelChoice> {
    config.validate()?;
    let cap = max_level(samples_per_channel);
    if let Some((j0, j_max)) = config.level_override {
        if j_max > cap {
            return Err(Error::InvalidParameter(format!(
                "level override J = {j_max} exceeds log2(N) - 1 = {cap} for N = {samples_per_channel}"
            )));
        }
        return Ok(LevelChoice {
            j0,
            j_max,
            warnings: Vec::new(),
        });
    }
    if !(n_star > std::f64::consts::E) {
        return Err(Error::InvalidParameter(format!(
            "effective sample size n* = {n_star} must exceed e"
        )));
    }
    let ln_n = n_star.ln();
    let mut warnings = Vec::new();
    let (mut j0, mut j_max) = if config.super_smooth() {
        let two_j0 = 3.0 / (8.0 * std::f64::consts::PI) * (ln_n / (2.0 * config.alpha1)).powf(1.0 / config.beta);
        let j0 = round_level(two_j0.log2(), "log2 of 2^j0", &mut warnings);
        (j0, j0)
    } else {
        let j0 = round_level(ln_n.log2(), "log2 ln n*", &mut warnings);
        let j_max = (ln_n / ((2.0 * config.nu + 1.0) * std::f64::consts::LN_2) + 1e-9).floor().max(0.0) as u32;
        if j_max < j0 {
            warnings.push(format!(
                "J = {j_max} below j0 = {j0}; estimator reduces to the linear part at j0"
            ));
        }
        (j0, j_max.max(j0))
    };
    if j_max > cap {
        warnings.push(format!("J = {j_max} clamped to log2(N) - 1 = {cap}"));
        j_max = cap;
    }
    if j0 > cap {
        warnings.push(format!("j0 = {j0} clamped to log2(N) - 1 = {cap}"));
        j0 = cap;
    }
    Ok(LevelChoice { j0, j_max, warnings })
}

/// `λ_j = μ² (n*)^{-1} ln(n*) 2^{2νj} j^{λ₁}`, with `j^{λ₁} = 1` at `j = 0`.
pub fn threshold_value(j: u32, n_star: f64, config: &EstimatorConfig) -> Result<f64> {
    if config.super_smooth() {
        return Err(Error::Regime {
            regime: "super-smooth",
            what: "thresholds are only defined for regular kernels".into(),
        });
    }
    let log_factor = if j == 0 { 1.0 } else { (j as f64).powf(config.lambda1) };
    Ok(config.mu * config.mu * n_star.ln() / n_star * 2f64.powf(2.0 * config.nu * j as f64) * log_factor)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub level: u32,
    pub block_len: usize,
    pub blocks: Vec<Range<usize>>,
}

impl BlockPartition {
    pub fn block_of(&self, k: usize) -> usize {
        k / self.block_len
    }
}

/// Contiguous blocks of length `ceil(ln n)` over `0..2^j`; the last block
/// holds the remainder.
pub fn block_partition(j: u32, n: usize) -> BlockPartition {
    let block_len = ((n.max(3) as f64).ln().ceil() as usize).max(1);
    let size = 1usize << j;
    let blocks = (0..size)
        .step_by(block_len)
        .map(|start| start..(start + block_len).min(size))
        .collect();
    BlockPartition {
        level: j,
        block_len,
        blocks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub level: u32,
    pub block: usize,
    pub energy: f64,
    pub threshold: f64,
    pub kept: bool,
}

/// Keeps detail block `(j, r)` iff `B̂_jr ≥ λ_j`; scaling coefficients pass
/// through.
pub fn block_threshold<T: Real>(
    coeffs: &WaveletCoefficients<T>,
    n: usize,
    n_star: f64,
    config: &EstimatorConfig,
) -> Result<(WaveletCoefficients<T>, Vec<ThresholdDecision>)> {
    let thresholds = (coeffs.j0..coeffs.j_max)
        .map(|j| threshold_value(j, n_star, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(apply_thresholds(coeffs, n, &thresholds))
}

fn apply_thresholds<T: Real>(
    coeffs: &WaveletCoefficients<T>,
    n: usize,
    thresholds: &[f64],
) -> (WaveletCoefficients<T>, Vec<ThresholdDecision>) {
    let mut out = coeffs.clone();
    let mut decisions = Vec::new();
    let zero = Complex::new(T::zero(), T::zero());
    for (i, j) in (coeffs.j0..coeffs.j_max).enumerate() {
        let level = out.level_mut(j);
        for (r, block) in block_partition(j, n).blocks.into_iter().enumerate() {
            let energy: f64 = level[block.clone()].iter().map(|c| c.norm_sqr().to_f64_lossy()).sum();
            let kept = energy >= thresholds[i];
            if !kept {
                level[block].fill(zero);
            }
            decisions.push(ThresholdDecision {
                level: j,
                block: r,
                energy,
                threshold: thresholds[i],
                kept,
            });
        }
    }
    (out, decisions)
}

/// Precomputed per-channel weights `N^{-2d_l} conj(g_m(u_l)) / D_m` for
/// `|m| ≤ band`.
#[derive(Debug, Clone)]
pub struct Deconvolver {
    band: usize,
    channels: usize,
    samples: usize,
    /// Row-major by channel, `2·band + 1` entries per channel.
    weights: Vec<Complex64>,
    ill_posed: Vec<i64>,
}

impl Deconvolver {
    /// Denominators are compared against their maximum over the full
    /// observable band `|m| ≤ (N-1)/2`; weights are kept for `|m| ≤ band`.
    pub fn new(design: &ChannelDesign, kernel: &BlurKernel, band: usize, denom_tol: f64) -> Result<Self> {
        design.validate()?;
        kernel.check_design(design)?;
        let samples = design.samples_per_channel;
        let full = (samples - 1) / 2;
        if band > full {
            return Err(Error::InvalidParameter(format!(
                "deconvolution band {band} exceeds the observable band {full} for N = {samples}"
            )));
        }
        let w = design.weights();
        let fb = full as i64;
        let kernel_row = |m: i64| -> Result<Vec<Complex64>> {
            design.u.iter().enumerate().map(|(l, &u)| kernel.fourier(l, u, m)).collect()
        };
        let dens = (-fb..=fb)
            .into_par_iter()
            .map(|m| Ok(kernel_row(m)?.iter().zip(&w).map(|(g, wl)| wl * g.norm_sqr()).sum::<f64>()))
            .collect::<Result<Vec<f64>>>()?;
        let max_den = dens.iter().copied().fold(0.0, f64::max);
        let b = band as i64;
        let channels = design.channels();
        let width = 2 * band + 1;
        let mut weights = vec![Complex64::new(0.0, 0.0); channels * width];
        let mut ill_posed = Vec::new();
        for (i, m) in (-b..=b).enumerate() {
            let den = dens[(m + fb) as usize];
            if !(den > 0.0 && den >= denom_tol * max_den) {
                ill_posed.push(m);
                continue;
            }
            for (l, g) in kernel_row(m)?.into_iter().enumerate() {
                weights[l * width + i] = g.conj() * (w[l] / den);
            }
        }
        Ok(Self {
            band,
            channels,
            samples,
            weights,
            ill_posed,
        })
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Zero-filled frequencies within the band.
    pub fn ill_posed(&self) -> &[i64] {
        &self.ill_posed
    }

    pub fn apply<T: Real>(&self, y: &Observations<T>) -> Result<FourierSeries<T>> {
        if y.channels() != self.channels || y.samples() != self.samples {
            return Err(Error::Shape(format!(
                "observations are {}x{}, design expects {}x{}",
                y.channels(),
                y.samples(),
                self.channels,
                self.samples
            )));
        }
        let fft: Arc<dyn Fft<T>> = FftPlanner::new().plan_fft_forward(self.samples);
        let b = self.band as i64;
        let width = 2 * self.band + 1;
        let scale = 1.0 / self.samples as f64;
        let spectra: Vec<Vec<Complex64>> = y
            .rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| {
                let mut buf: Vec<Complex<T>> = row.iter().map(|&v| Complex::new(v, T::zero())).collect();
                fft.process(&mut buf);
                (-b..=b)
                    .map(|m| {
                        let c = buf[bin(m, self.samples)];
                        Complex64::new(c.re.to_f64_lossy(), c.im.to_f64_lossy()) * scale
                    })
                    .collect()
            })
            .collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); width];
        for (l, spec) in spectra.iter().enumerate() {
            let w = &self.weights[l * width..(l + 1) * width];
            for ((a, wi), s) in acc.iter_mut().zip(w).zip(spec) {
                *a += wi * s;
            }
        }
        FourierSeries::from_vec(acc.into_iter().map(|c| Complex::new(T::lit(c.re), T::lit(c.im))).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deconvolution<T> {
    pub f_hat: FourierSeries<T>,
    pub ill_posed: Vec<i64>,
}

/// `f̂_m` for every observable frequency `|m| ≤ (N-1)/2`.
pub fn fourier_deconvolve<T: Real>(
    y: &Observations<T>,
    design: &ChannelDesign,
    kernel: &BlurKernel,
    denom_tol: f64,
) -> Result<Deconvolution<T>> {
    let d = Deconvolver::new(design, kernel, (design.samples_per_channel - 1) / 2, denom_tol)?;
    Ok(Deconvolution {
        f_hat: d.apply(y)?,
        ill_posed: d.ill_posed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u32,
    pub threshold: f64,
    pub blocks: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub j0: u32,
    pub j_max: u32,
    pub epsilon_n: f64,
    pub n_star: f64,
    pub ill_posed: Vec<i64>,
    pub levels: Vec<LevelSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    /// `f̂_n(i/N)`, `i = 0..N`.
    pub grid: Vec<T>,
    pub coefficients: WaveletCoefficients<T>,
    pub raw: WaveletCoefficients<T>,
    pub decisions: Vec<ThresholdDecision>,
    pub diagnostics: Diagnostics,
}

/// The estimator for a fixed design, kernel and configuration. Building it
/// once amortizes kernel evaluation and FFT planning over replicates.
#[derive(Debug)]
pub struct Estimator<T> {
    config: EstimatorConfig,
    levels: LevelChoice,
    basis: MeyerBasis<T>,
    deconvolver: Deconvolver,
    thresholds: Vec<f64>,
    n: usize,
    samples: usize,
    epsilon_n: f64,
    n_star: f64,
}

impl<T: Real> Estimator<T> {
    pub fn new(design: &ChannelDesign, kernel: &BlurKernel, config: &EstimatorConfig) -> Result<Self> {
        config.validate()?;
        design.validate()?;
        let (epsilon_n, n_star) = channel::epsilon_n(design);
        let mut levels = choose_levels(n_star, design.samples_per_channel, config)?;
        if config.mu > 0.0 && config.mu < config.mu_floor() && !levels.linear_only() {
            levels.warnings.push(format!(
                "mu = {} is below sqrt(2/(1-h1)) = {:.4}",
                config.mu,
                config.mu_floor()
            ));
        }
        let basis = MeyerBasis::new(MeyerSpec::new(levels.j0, levels.j_max)?);
        let deconvolver = Deconvolver::new(design, kernel, basis.max_frequency() as usize, config.denom_tol)?;
        let thresholds = if levels.linear_only() {
            Vec::new()
        } else {
            levels
                .detail_levels()
                .map(|j| threshold_value(j, n_star, config))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self {
            config: config.clone(),
            levels,
            basis,
            deconvolver,
            thresholds,
            n: design.total_samples(),
            samples: design.samples_per_channel,
            epsilon_n,
            n_star,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn levels(&self) -> &LevelChoice {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn basis(&self) -> &MeyerBasis<T> {
        &self.basis
    }

    pub fn n_star(&self) -> f64 {
        self.n_star
    }

    pub fn ill_posed(&self) -> &[i64] {
        self.deconvolver.ill_posed()
    }

    /// `f̂_m` for the frequencies the basis touches.
    pub fn deconvolve(&self, y: &Observations<T>) -> Result<FourierSeries<T>> {
        self.deconvolver.apply(y)
    }

    /// Unthresholded `â_{j0k}`, `b̂_jk`.
    pub fn raw_coefficients(&self, y: &Observations<T>) -> Result<WaveletCoefficients<T>> {
        self.basis.analyze(&self.deconvolve(y)?)
    }

    pub fn run(&self, y: &Observations<T>) -> Result<Estimate<T>> {
        let raw = self.raw_coefficients(y)?;
        let (coefficients, decisions) = apply_thresholds(&raw, self.n, &self.thresholds);
        let grid = self.basis.synthesize(&coefficients, self.samples)?;
        let levels = self
            .levels
            .detail_levels()
            .zip(&self.thresholds)
            .map(|(j, &threshold)| {
                let at = decisions.iter().filter(|d| d.level == j);
                LevelSummary {
                    level: j,
                    threshold,
                    blocks: at.clone().count(),
                    kept: at.filter(|d| d.kept).count(),
                }
            })
            .collect();
        Ok(Estimate {
            grid,
            coefficients,
            raw,
            decisions,
            diagnostics: Diagnostics {
                j0: self.levels.j0,
                j_max: self.levels.j_max,
                epsilon_n: self.epsilon_n,
                n_star: self.n_star,
                ill_posed: self.ill_posed().to_vec(),
                levels,
                warnings: self.levels.warnings.clone(),
            },
        })
    }
}

/// One-shot estimate.
pub fn estimate<T: Real>(
    y: &Observations<T>,
    design: &ChannelDesign,
    kernel: &BlurKernel,
    config: &EstimatorConfig,
) -> Result<Estimate<T>> {
    Estimator::new(design, kernel, config)?.run(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCalibration {
    pub mu: f64,
    /// `(μ, fraction of null blocks with energy ≥ λ_j/4)` over the grid.
    pub rates: Vec<(f64, f64)>,
    pub replicates: usize,
}

/// Smallest `μ` in `mu_grid` whose null-block exceedance rate of `λ_j/4`
/// is at most `max_rate`, from `reps` pure-noise pilot runs.
pub fn calibrate_mu(
    design: &ChannelDesign,
    kernel: &BlurKernel,
    config: &EstimatorConfig,
    mu_grid: &[f64],
    reps: usize,
    max_rate: f64,
    seed: u64,
) -> Result<MuCalibration> {
    let pilot = EstimatorConfig {
        mu: 1.0,
        ..config.clone()
    };
    let est = Estimator::<f64>::new(design, kernel, &pilot)?;
    if est.levels().linear_only() {
        return Err(Error::InsufficientLevels("no detail levels to calibrate mu on".into()));
    }
    let samplers = channel::channel_samplers(design)?;
    let n = design.total_samples();
    // Energy over λ_j(μ=1)/4; a block exceeds at μ iff this ratio ≥ μ².
    let ratios: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let y = channel::noise_from_samplers::<f64>(design, &samplers, seed::derive_seed(seed, &[rep as u64]))?;
            let raw = est.raw_coefficients(&y)?;
            let (_, decisions) = apply_thresholds(&raw, n, est.thresholds());
            Ok(decisions.into_iter().map(|d| 4.0 * d.energy / d.threshold).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut grid = mu_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let rates: Vec<(f64, f64)> = grid
        .iter()
        .map(|&mu| {
            let hits = ratios.iter().filter(|&&r| r >= mu * mu).count();
            (mu, hits as f64 / ratios.len() as f64)
        })
        .collect();
    let mu = rates
        .iter()
        .find(|(_, rate)| *rate <= max_rate)
        .map(|(mu, _)| *mu)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("no mu in the calibration grid reaches an exceedance rate <= {max_rate}"))
        })?;
    Ok(MuCalibration {
        mu,
        rates,
        replicates: reps,
    })
}

/// One row per coefficient: `kind,j,k,re,im,block,kept`.
pub fn write_coefficients_csv<T: Real, W: Write>(
    out: &mut W,
    coeffs: &WaveletCoefficients<T>,
    decisions: &[ThresholdDecision],
    n: usize,
) -> io::Result<()> {
    writeln!(out, "kind,j,k,re,im,block,kept")?;
    for (k, c) in coeffs.scaling.iter().enumerate() {
        writeln!(
            out,
            "scaling,{},{k},{},{},,1",
            coeffs.j0,
            fmt17(c.re.to_f64_lossy()),
            fmt17(c.im.to_f64_lossy())
        )?;
    }
    for (j, level) in coeffs.levels() {
        let part = block_partition(j, n);
        for (k, c) in level.iter().enumerate() {
            let r = part.block_of(k);
            let kept = decisions
                .iter()
                .find(|d| d.level == j && d.block == r)
                .is_none_or(|d| d.kept);
            writeln!(
                out,
                "detail,{j},{k},{},{},{r},{}",
                fmt17(c.re.to_f64_lossy()),
                fmt17(c.im.to_f64_lossy()),
                u8::from(kept)
            )?;
        }
    }
    Ok(())
}

/// One row per block: `j,r,energy,threshold,kept`.
pub fn write_decisions_csv<W: Write>(out: &mut W, decisions: &[ThresholdDecision]) -> io::Result<()> {
    writeln!(out, "j,r,energy,threshold,kept")?;
    for d in decisions {
        writeln!(
            out,
            "{},{},{},{},{}",
            d.level,
            d.block,
            fmt17(d.energy),
            fmt17(d.threshold),
            u8::from(d.kept)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{simulate_signal, KernelTable, LinearMemory};
    use crate::noise::{NoiseKind, NoiseModel};
    use std::collections::BTreeMap;

    fn regular(nu: f64) -> EstimatorConfig {
        EstimatorConfig {
            nu,
            ..Default::default()
        }
    }

    #[test]
    fn levels_regular_examples() {
        let big = 1usize << 20;
        let n_star = 2f64.powi(30);
        let c = choose_levels(n_star, big, &regular(1.0)).unwrap();
        assert_eq!(c.j_max, 10);
        assert_eq!(c.j0, (n_star.ln().log2()).round() as u32);
        assert_eq!(choose_levels(n_star, big, &regular(2.0)).unwrap().j_max, 6);
    }

    #[test]
    fn levels_clamped_to_channel_length() {
        let c = choose_levels(2f64.powi(30), 64, &regular(1.0)).unwrap();
        assert_eq!(c.j_max, 5);
        assert!(!c.warnings.is_empty());
    }

    #[test]
    fn levels_super_smooth_degenerate() {
        let cfg = EstimatorConfig {
            alpha1: 1.0,
            beta: 2.0,
            ..Default::default()
        };
        let c = choose_levels(32f64.exp(), 1 << 10, &cfg).unwrap();
        assert_eq!((c.j0, c.j_max), (0, 0));
        assert_eq!(c.warnings.len(), 1);
        assert!(choose_levels(2.0, 1 << 10, &regular(1.0)).is_err());
    }

    #[test]
    fn threshold_examples() {
        let n_star = 5000.0;
        let flat = EstimatorConfig {
            mu: 1.0,
            ..Default::default()
        };
        for j in 0..6 {
            assert!((threshold_value(j, n_star, &flat).unwrap() - n_star.ln() / n_star).abs() < 1e-18);
        }
        let cfg = EstimatorConfig {
            nu: 2.0,
            lambda1: 1.5,
            ..Default::default()
        };
        let double = EstimatorConfig { mu: 2.0, ..cfg.clone() };
        for j in 0..6 {
            let a = threshold_value(j, n_star, &cfg).unwrap();
            assert!(threshold_value(j + 1, n_star, &cfg).unwrap() > a);
            assert!((threshold_value(j, n_star, &double).unwrap() / a - 4.0).abs() < 1e-14);
        }
        let smooth = EstimatorConfig {
            alpha1: 0.5,
            ..Default::default()
        };
        assert!(threshold_value(3, n_star, &smooth).is_err());
    }

    #[test]
    fn partition_examples() {
        // ceil(ln n) = 8 for n in (e^7, e^8].
        let p = block_partition(5, 2000);
        assert_eq!(p.block_len, 8);
        assert_eq!(p.blocks.len(), 4);
        let p = block_partition(5, 10_000);
        assert_eq!(p.block_len, 10);
        assert_eq!(p.blocks.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![10, 10, 10, 2]);
        let p = block_partition(2, 10_000);
        assert_eq!(p.blocks, vec![0..4]);
    }

    #[test]
    fn partition_covers_levels() {
        for n in [3usize, 100, 65_536] {
            for j in 0..=10u32 {
                let p = block_partition(j, n);
                let mut next = 0;
                for b in &p.blocks {
                    assert_eq!(b.start, next);
                    assert!(!b.is_empty());
                    next = b.end;
                }
                assert_eq!(next, 1 << j);
                for b in &p.blocks[..p.blocks.len() - 1] {
                    assert_eq!(b.len(), p.block_len);
                }
            }
        }
    }

    fn fixture(j0: u32, j_max: u32) -> WaveletCoefficients<f64> {
        let mut c = WaveletCoefficients::zeros(j0, j_max);
        for (i, v) in c.scaling.iter_mut().enumerate() {
            *v = Complex::new(i as f64 + 1.0, 0.0);
        }
        c
    }

    #[test]
    fn threshold_keep_all_with_zero_mu() {
        let mut c = fixture(2, 5);
        c.level_mut(4)[3] = Complex::new(1e-9, 0.0);
        let cfg = EstimatorConfig { mu: 0.0, ..Default::default() };
        let (out, dec) = block_threshold(&c, 1000, 1000.0, &cfg).unwrap();
        assert_eq!(out, c);
        assert!(dec.iter().all(|d| d.kept));
    }

    #[test]
    fn threshold_zero_input() {
        let c = WaveletCoefficients::<f64>::zeros(2, 6);
        let (out, dec) = block_threshold(&c, 1000, 1000.0, &EstimatorConfig::default()).unwrap();
        assert_eq!(out, c);
        assert!(dec.iter().all(|d| !d.kept));
    }

    #[test]
    fn threshold_single_surviving_block() {
        let (n, n_star) = (1000usize, 800.0);
        let cfg = EstimatorConfig::default();
        let j = 4;
        let lambda = threshold_value(j, n_star, &cfg).unwrap();
        let mut c = fixture(2, 6);
        // Block 1 of level 4 (ceil(ln 1000) = 7): k = 7..14.
        c.level_mut(j)[8] = Complex::new((2.0 * lambda).sqrt(), 0.0);
        let (out, dec) = block_threshold(&c, n, n_star, &cfg).unwrap();
        assert_eq!(out, c);
        let kept: Vec<_> = dec.iter().filter(|d| d.kept).map(|d| (d.level, d.block)).collect();
        assert_eq!(kept, vec![(4, 1)]);
    }

    fn band_limited(band: usize, top: i64) -> FourierSeries<f64> {
        FourierSeries::from_fn(band, |m| {
            let a = m.abs();
            if a > top {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(1.0 / (1 + a * a) as f64, 0.2 * m.signum() as f64 / (1 + a) as f64)
            }
        })
    }

    #[test]
    fn deconvolve_single_flat_channel_is_exact() {
        let design = ChannelDesign::uniform_noise(vec![0.5], NoiseModel::white(1.0).unwrap(), 64).unwrap();
        let rows = (-40..=40).map(|m| (m, vec![Complex64::new(1.0, 0.0)])).collect::<BTreeMap<_, _>>();
        let kernel = BlurKernel::Table(KernelTable::new(rows).unwrap());
        let f = band_limited(31, 31);
        let y = simulate_signal(&f, &design, &kernel).unwrap();
        let d = fourier_deconvolve(&y, &design, &kernel, 1e-10).unwrap();
        assert!(d.ill_posed.is_empty());
        for m in -31..=31 {
            assert!((d.f_hat.get(m) - f.get(m)).norm() < 1e-15);
        }
    }

    #[test]
    fn deconvolve_noiseless_boxcar() {
        let design = ChannelDesign::linear(16, 128, LinearMemory { a1: 0.2, a2: 0.1 }, NoiseKind::Farima, 1.0).unwrap();
        let kernel = BlurKernel::boxcar();
        let f = band_limited(63, 40);
        let y = simulate_signal(&f, &design, &kernel).unwrap();
        let d = fourier_deconvolve(&y, &design, &kernel, 1e-10).unwrap();
        // u_l = l/16: every sine vanishes when 2m ≡ 0 mod 16.
        let expected: Vec<i64> = (-63..=63).filter(|m| m % 8 == 0 && *m != 0).collect();
        assert_eq!(d.ill_posed, expected);
        for m in -63..=63i64 {
            let target = if expected.contains(&m) { Complex::new(0.0, 0.0) } else { f.get(m) };
            assert!((d.f_hat.get(m) - target).norm() < 1e-9, "m = {m}");
        }
    }

    #[test]
    fn estimate_noiseless_round_trip() {
        let design = ChannelDesign::uniform_noise(vec![0.3, 0.6, 0.9], NoiseModel::white(1.0).unwrap(), 256).unwrap();
        let kernel = BlurKernel::Dirichlet { r1: 0.2, r2: 0.95, c: 1.0 };
        let cfg = EstimatorConfig {
            mu: 0.0,
            level_override: Some((2, 6)),
            ..Default::default()
        };
        // 2^J/3 bounds the band on which the projection is the identity.
        let f = band_limited(127, 21);
        let y = simulate_signal(&f, &design, &kernel).unwrap();
        let est = estimate(&y, &design, &kernel, &cfg).unwrap();
        let truth = f.evaluate_grid(256);
        let err: f64 = est.grid.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = truth.iter().map(|v| v * v).sum();
        assert!(err / norm < 1e-12, "relative error {}", err / norm);
    }

    #[test]
    fn estimate_single_precision() {
        let design = ChannelDesign::uniform_noise(vec![0.8], NoiseModel::white(1.0).unwrap(), 64).unwrap();
        let kernel = BlurKernel::Dirichlet { r1: 0.2, r2: 0.9, c: 1.0 };
        let cfg = EstimatorConfig {
            mu: 0.0,
            level_override: Some((1, 5)),
            ..Default::default()
        };
        let f = band_limited(31, 8).cast::<f32>();
        let y = simulate_signal(&f, &design, &kernel).unwrap();
        let est = estimate(&y, &design, &kernel, &cfg).unwrap();
        let truth = f.evaluate_grid(64);
        let err = est.grid.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn override_beyond_nyquist_rejected() {
        let cfg = EstimatorConfig {
            level_override: Some((2, 7)),
            ..Default::default()
        };
        assert!(choose_levels(1e6, 128, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig { mu: -1.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { denom_tol: 0.1, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { alpha1: 1.0, beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { h1: 1.0, ..Default::default() }.validate().is_err());
        assert!((EstimatorConfig { h1: 0.5, ..Default::default() }.mu_floor() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn csv_export_layout() {
        let c = fixture(1, 3);
        let (out, dec) = block_threshold(&c, 100, 100.0, &EstimatorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &out, &dec, 100).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 2 + 4);
        assert!(lines[1].starts_with("scaling,1,0,1.0000000000000000e0,"));
        assert!(lines[3].ends_with(",0,0"));
        let mut buf = Vec::new();
        write_decisions_csv(&mut buf, &dec).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + dec.len());
    }
}
