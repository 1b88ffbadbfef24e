//! Channel designs, blur kernels and the observation model
//!
//! ```text
//! y(u_l, t_i) = Σ_m g_m(u_l) f_m e^{i2πm t_i} + ξ_{li},   t_i = i/N
//! ```
//!
//! together with the design functionals τ_κ(m,n), Δ_κ(j,n), ε_n and n*
//! that govern the variance of the deconvolution estimator.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::FourierSeries;
use crate::meyer::{wavelet_ft, AuxFunction, MeyerSpec, SUPPORT_TOL};
use crate::noise::{GaussianSampler, NoiseKind, NoiseModel};
use crate::scalar::Real;
use crate::seed;

/// Smallest τ₁ treated as invertible.
pub const ILL_POSED_TAU: f64 = 1e-300;

/// `d_l = a1·u_l + a2` with equispaced `u_l = l/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMemory {
    pub a1: f64,
    pub a2: f64,
}

impl LinearMemory {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..0.5).contains(&self.a2) && (0.0..0.5).contains(&(self.a1 + self.a2));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "linear memory design needs 0 <= a2 < 1/2 and 0 <= a1 + a2 < 1/2, got a1 = {}, a2 = {}",
                self.a1, self.a2
            )))
        }
    }
}

/// The `M` channels of an experiment: points `u_l`, per-channel error laws
/// and the common number of samples `N` per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDesign {
    pub u: Vec<f64>,
    pub noise: Vec<NoiseModel>,
    pub samples_per_channel: usize,
    #[serde(default)]
    pub linear: Option<LinearMemory>,
}

impl ChannelDesign {
    pub fn new(u: Vec<f64>, noise: Vec<NoiseModel>, samples_per_channel: usize) -> Result<Self> {
        let design = Self {
            u,
            noise,
            samples_per_channel,
            linear: None,
        };
        design.validate()?;
        Ok(design)
    }

    /// Equispaced channels `u_l = l/M`, `l = 1..=M`, with `d_l = a1·u_l + a2`.
    pub fn linear(
        channels: usize,
        samples_per_channel: usize,
        memory: LinearMemory,
        kind: NoiseKind,
        scale: f64,
    ) -> Result<Self> {
        memory.validate()?;
        if kind == NoiseKind::White && (memory.a1 != 0.0 || memory.a2 != 0.0) {
            return Err(Error::InvalidParameter(
                "white noise channels cannot carry memory".into(),
            ));
        }
        let u: Vec<f64> = (1..=channels).map(|l| l as f64 / channels as f64).collect();
        let noise = u
            .iter()
            .map(|&ul| NoiseModel::new(kind, (memory.a1 * ul + memory.a2).clamp(0.0, 0.5), scale))
            .collect::<Result<Vec<_>>>()?;
        let mut design = Self::new(u, noise, samples_per_channel)?;
        design.linear = Some(memory);
        Ok(design)
    }

    /// Channels at the given points sharing one error law.
    pub fn uniform_noise(u: Vec<f64>, noise: NoiseModel, samples_per_channel: usize) -> Result<Self> {
        let noise = vec![noise; u.len()];
        Self::new(u, noise, samples_per_channel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.is_empty() {
            return Err(Error::InvalidParameter("design needs at least one channel".into()));
        }
        if self.u.len() != self.noise.len() {
            return Err(Error::Shape(format!(
                "{} channel points but {} noise models",
                self.u.len(),
                self.noise.len()
            )));
        }
        if self.samples_per_channel < 2 || !self.samples_per_channel.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "samples per channel N = {} must be a power of two >= 2",
                self.samples_per_channel
            )));
        }
        if let Some(u) = self.u.iter().find(|u| !u.is_finite()) {
            return Err(Error::InvalidParameter(format!("channel point {u} not finite")));
        }
        for model in &self.noise {
            model.validate()?;
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.u.len()
    }

    /// Total sample size `n = N·M`.
    pub fn total_samples(&self) -> usize {
        self.samples_per_channel * self.channels()
    }

    pub fn memory(&self, l: usize) -> f64 {
        self.noise[l].d
    }

    pub fn max_memory(&self) -> f64 {
        self.noise.iter().map(|m| m.d).fold(0.0, f64::max)
    }

    /// `N^{-2d_l}` weights of the deconvolution estimator.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.samples_per_channel as f64;
        self.noise.iter().map(|m| n.powf(-2.0 * m.d)).collect()
    }

    /// `θ = ln M / ln n`.
    pub fn theta(&self) -> f64 {
        (self.channels() as f64).ln() / (self.total_samples() as f64).ln()
    }

    /// Warning text when `M` falls outside `[n^θ1, n^θ2]`.
    pub fn theta_window_warning(&self, theta1: f64, theta2: f64) -> Option<String> {
        let theta = self.theta();
        (theta < theta1 || theta > theta2).then(|| {
            format!("channel count M = {} gives theta = {theta:.4}, outside [{theta1}, {theta2}]", self.channels())
        })
    }
}

/// Weight function `q(u)` of a box-car kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BoxCarWeight {
    Constant { value: f64 },
    /// `q(u) = intercept + slope·u` on `[0, 1]`.
    Affine { intercept: f64, slope: f64 },
}

impl BoxCarWeight {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            BoxCarWeight::Constant { value } => value,
            BoxCarWeight::Affine { intercept, slope } => intercept + slope * u,
        }
    }

    /// `(q1, q2)` over `u ∈ [0, 1]`.
    pub fn bounds(&self) -> (f64, f64) {
        let (a, b) = (self.eval(0.0), self.eval(1.0));
        (a.min(b), a.max(b))
    }
}

impl Default for BoxCarWeight {
    fn default() -> Self {
        BoxCarWeight::Constant { value: 1.0 }
    }
}

/// Explicit `g_m(u_l)` values: one row per frequency, one column per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    rows: BTreeMap<i64, Vec<Complex64>>,
}

impl KernelTable {
    pub fn new(rows: BTreeMap<i64, Vec<Complex64>>) -> Result<Self> {
        let width = rows.values().next().map(Vec::len).unwrap_or(0);
        for (m, row) in &rows {
            if row.len() != width {
                return Err(Error::Shape(format!(
                    "kernel table row m = {m} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "kernel table row m = {m} has non-finite entries"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn channels(&self) -> usize {
        self.rows.values().next().map(Vec::len).unwrap_or(0)
    }

    pub fn get(&self, m: i64, channel: usize) -> Result<Complex64> {
        self.rows
            .get(&m)
            .and_then(|row| row.get(channel))
            .copied()
            .ok_or(Error::MissingTableEntry { m, channel })
    }

    /// Parses the delimited text form: `#` comments, then one line per
    /// frequency with `m` followed by `re,im` pairs separated by whitespace
    /// or `;`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line
                .split(|c: char| c.is_whitespace() || c == ';')
                .filter(|s| !s.is_empty());
            let bad = |what: &str| Error::Parse(format!("kernel table line {}: {what}", lineno + 1));
            let m: i64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("expected integer frequency"))?;
            let row = fields
                .map(|pair| {
                    let (re, im) = pair.split_once(',').ok_or_else(|| bad("expected re,im pair"))?;
                    Ok(Complex64::new(
                        re.trim().parse().map_err(|_| bad("bad real part"))?,
                        im.trim().parse().map_err(|_| bad("bad imaginary part"))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(m, row).is_some() {
                return Err(bad("duplicate frequency"));
            }
        }
        Self::new(rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# m  re,im per channel\n");
        for (m, row) in &self.rows {
            let _ = write!(out, "{m}");
            for c in row {
                let _ = write!(out, "\t{:.17e},{:.17e}", c.re, c.im);
            }
            out.push('\n');
        }
        out
    }
}

/// Functional Fourier coefficients `g_m(u)` of the blurring kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlurKernel {
    /// Heat equation initial condition: `g_m(u) = exp(-4π²m²u)`.
    Heat,
    /// Dirichlet problem on the unit disc: `g_m(u) = C·u^{|m|}`, `r1 ≤ u ≤ r2`.
    Dirichlet { r1: f64, r2: f64, c: f64 },
    /// Box-car `g(u,t) = q(u)/2 · 1(|t| < u)`.
    BoxCar {
        #[serde(default)]
        weight: BoxCarWeight,
    },
    Table(KernelTable),
}

impl BlurKernel {
    pub fn boxcar() -> Self {
        BlurKernel::BoxCar {
            weight: BoxCarWeight::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BlurKernel::Heat | BlurKernel::Table(_) => Ok(()),
            BlurKernel::Dirichlet { r1, r2, c } => {
                if !(0.0 < *r1 && r1 <= r2 && *r2 < 1.0 && c.is_finite() && *c != 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "Dirichlet kernel needs 0 < r1 <= r2 < 1 and C != 0, got r1 = {r1}, r2 = {r2}, C = {c}"
                    )));
                }
                Ok(())
            }
            BlurKernel::BoxCar { weight } => {
                let (q1, q2) = weight.bounds();
                if !(q1 > 0.0 && q2.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "box-car weight must satisfy 0 < q1 <= q(u) <= q2 < inf, got [{q1}, {q2}]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `g_m(u)` for channel `channel` located at `u`.
    pub fn fourier(&self, channel: usize, u: f64, m: i64) -> Result<Complex64> {
        let mf = m as f64;
        match self {
            BlurKernel::Heat => {
                if !(u > 0.0) {
                    return Err(Error::KernelDomain {
                        u,
                        reason: "heat kernel needs u > 0".into(),
                    });
                }
                Ok(Complex64::new((-4.0 * PI * PI * mf * mf * u).exp(), 0.0))
            }
            BlurKernel::Dirichlet { r1, r2, c } => {
                if !(*r1..=*r2).contains(&u) {
                    return Err(Error::KernelDomain {
                        u,
                        reason: format!("Dirichlet kernel needs {r1} <= u <= {r2}"),
                    });
                }
                Ok(Complex64::new(c * u.powi(m.unsigned_abs() as i32), 0.0))
            }
            BlurKernel::BoxCar { weight } => {
                if !(0.0..=1.0).contains(&u) {
                    return Err(Error::KernelDomain {
                        u,
                        reason: "box-car kernel needs 0 <= u <= 1".into(),
                    });
                }
                if m == 0 {
                    return Ok(Complex64::new(1.0, 0.0));
                }
                Ok(Complex64::new(
                    weight.eval(u) * sin_two_pi(mf * u) / (2.0 * PI * mf),
                    0.0,
                ))
            }
            BlurKernel::Table(table) => table.get(m, channel),
        }
    }

    pub fn check_design(&self, design: &ChannelDesign) -> Result<()> {
        self.validate()?;
        if let BlurKernel::Table(t) = self {
            if t.channels() != design.channels() {
                return Err(Error::Shape(format!(
                    "kernel table has {} channels, design has {}",
                    t.channels(),
                    design.channels()
                )));
            }
            return Ok(());
        }
        for (l, &u) in design.u.iter().enumerate() {
            self.fourier(l, u, 1)?;
        }
        Ok(())
    }
}

/// `sin(2πx)` with the argument reduced modulo one first, exact zeros at
/// half-integers.
fn sin_two_pi(x: f64) -> f64 {
    let r = x - x.round();
    if r == 0.0 || r.abs() == 0.5 {
        0.0
    } else {
        (2.0 * PI * r).sin()
    }
}

/// `g_m(u)` for one channel point, ignoring table kernels' channel index.
pub fn kernel_fourier(kernel: &BlurKernel, u: f64, m: i64) -> Result<Complex64> {
    kernel.fourier(0, u, m)
}

/// `M×N` observation matrix, row-major by channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations<T> {
    channels: usize,
    samples: usize,
    data: Vec<T>,
}

impl<T: Real> Observations<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let channels = rows.len();
        let samples = rows.first().map(Vec::len).unwrap_or(0);
        if channels == 0 || samples == 0 || rows.iter().any(|r| r.len() != samples) {
            return Err(Error::Shape("observation rows must be non-empty and equal length".into()));
        }
        Ok(Self {
            channels,
            samples,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn row(&self, l: usize) -> &[T] {
        &self.data[l * self.samples..(l + 1) * self.samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.samples)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            channels: self.channels,
            samples: self.samples,
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.channels != other.channels || self.samples != other.samples {
            return Err(Error::Shape("observation matrices differ in shape".into()));
        }
        Ok(Self {
            channels: self.channels,
            samples: self.samples,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Noiseless channel outputs `h(u_l, t_i)`.
pub fn simulate_signal<T: Real>(
    f: &FourierSeries<T>,
    design: &ChannelDesign,
    kernel: &BlurKernel,
) -> Result<Observations<T>> {
    design.validate()?;
    kernel.check_design(design)?;
    let n = design.samples_per_channel;
    let rows = design
        .u
        .par_iter()
        .enumerate()
        .map(|(l, &u)| {
            let mut err = None;
            let blurred = f.map(|m, c| {
                if c.re == T::zero() && c.im == T::zero() {
                    return c;
                }
                match kernel.fourier(l, u, m) {
                    Ok(g) => c * Complex::new(T::lit(g.re), T::lit(g.im)),
                    Err(e) => {
                        err.get_or_insert(e);
                        c
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(blurred.evaluate_grid(n)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Observations::from_rows(rows)
}

/// Independent error rows, one seeded stream per channel.
pub fn simulate_noise<T: Real>(design: &ChannelDesign, seed: u64) -> Result<Observations<T>> {
    let samplers = channel_samplers(design)?;
    noise_from_samplers(design, &samplers, seed)
}

/// One sampler per channel, shared between channels with identical laws.
pub fn channel_samplers(design: &ChannelDesign) -> Result<Vec<std::sync::Arc<GaussianSampler>>> {
    design.validate()?;
    let n = design.samples_per_channel;
    let mut cache: HashMap<(NoiseKind, u64, u64), std::sync::Arc<GaussianSampler>> = HashMap::new();
    design
        .noise
        .iter()
        .map(|model| {
            let key = (model.kind, model.d.to_bits(), model.scale.to_bits());
            if let Some(s) = cache.get(&key) {
                return Ok(s.clone());
            }
            let s = std::sync::Arc::new(GaussianSampler::new(model, n)?);
            cache.insert(key, s.clone());
            Ok(s)
        })
        .collect()
}

pub fn noise_from_samplers<T: Real>(
    design: &ChannelDesign,
    samplers: &[std::sync::Arc<GaussianSampler>],
    seed: u64,
) -> Result<Observations<T>> {
    let rows = (0..design.channels())
        .into_par_iter()
        .map(|l| {
            let mut rng = seed::stream(seed, &[l as u64]);
            samplers[l].sample(&mut rng).into_iter().map(T::lit).collect()
        })
        .collect();
    Observations::from_rows(rows)
}

/// `y(u_l, t_i) = h(u_l, t_i) + ξ_{li}`.
pub fn simulate_observations<T: Real>(
    f: &FourierSeries<T>,
    design: &ChannelDesign,
    kernel: &BlurKernel,
    seed: u64,
) -> Result<Observations<T>> {
    simulate_signal(f, design, kernel)?.add(&simulate_noise(design, seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kappa {
    One = 1,
    Two = 2,
    Four = 4,
}

impl Kappa {
    fn value(self) -> f64 {
        self as i32 as f64
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.filter(|t| *t > f64::NEG_INFINITY).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln τ_κ(m, n)`, evaluated in log space so super-smooth kernels do not
/// underflow.
pub fn log_tau_kappa(design: &ChannelDesign, kernel: &BlurKernel, m: i64, kappa: Kappa) -> Result<f64> {
    let k = kappa.value();
    let ln_n = (design.samples_per_channel as f64).ln();
    let mut terms = Vec::with_capacity(design.channels());
    for (l, &u) in design.u.iter().enumerate() {
        let g = kernel.fourier(l, u, m)?.norm();
        let log_g = if g > 0.0 {
            g.ln()
        } else if let BlurKernel::Heat = kernel {
            -4.0 * PI * PI * (m as f64).powi(2) * u
        } else {
            f64::NEG_INFINITY
        };
        terms.push(-2.0 * k * design.memory(l) * ln_n + 2.0 * k * log_g);
    }
    Ok(log_sum_exp(terms.into_iter()) - (design.channels() as f64).ln())
}

/// `τ_κ(m,n) = M^{-1} Σ_l N^{-2κd_l} |g_m(u_l)|^{2κ}`.
pub fn tau_kappa(design: &ChannelDesign, kernel: &BlurKernel, m: i64, kappa: Kappa) -> Result<f64> {
    Ok(log_tau_kappa(design, kernel, m, kappa)?.exp())
}

fn delta_term(design: &ChannelDesign, kernel: &BlurKernel, m: i64, kappa: Kappa) -> Result<f64> {
    let log_t1 = log_tau_kappa(design, kernel, m, Kappa::One)?;
    if log_t1 <= ILL_POSED_TAU.ln() {
        return Err(Error::IllPosed {
            m,
            tau1: log_t1.exp(),
        });
    }
    let log_tk = log_tau_kappa(design, kernel, m, kappa)?;
    Ok((log_tk - 2.0 * kappa.value() * log_t1).exp())
}

fn check_delta_kappa(kappa: Kappa) -> Result<()> {
    if kappa == Kappa::Four {
        return Err(Error::InvalidParameter("Delta_kappa is defined for kappa in {1, 2}".into()));
    }
    Ok(())
}

/// `Δ_κ(j,n) = |C_j|^{-1} Σ_{m∈C_j} τ_κ(m,n) τ₁(m,n)^{-2κ}`.
pub fn delta_kappa(design: &ChannelDesign, kernel: &BlurKernel, j: u32, kappa: Kappa) -> Result<f64> {
    check_delta_kappa(kappa)?;
    let spec = MeyerSpec::new(0, j + 1)?;
    let set = spec.frequency_set(j);
    let total = set
        .members
        .iter()
        .map(|&m| delta_term(design, kernel, m, kappa))
        .sum::<Result<f64>>()?;
    Ok(total / set.len() as f64)
}

/// Same value as [`delta_kappa`], scanning the support window without
/// materialising `C_j`.
pub fn delta_kappa_streaming(
    design: &ChannelDesign,
    kernel: &BlurKernel,
    j: u32,
    kappa: Kappa,
) -> Result<f64> {
    check_delta_kappa(kappa)?;
    let scale = 2f64.powi(j as i32);
    let bound = (4i64 << j) / 3 + 1;
    let (mut total, mut count) = (0.0, 0usize);
    for m in -bound..=bound {
        if wavelet_ft(AuxFunction::default(), 2.0 * PI * m as f64 / scale).norm() > SUPPORT_TOL {
            total += delta_term(design, kernel, m, kappa)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `(ε_n, n*)` with `ε_n = M^{-1} Σ_l N^{-2d_l}` and `n* = n·ε_n`.
pub fn epsilon_n(design: &ChannelDesign) -> (f64, f64) {
    let w = design.weights();
    let eps = w.iter().sum::<f64>() / w.len() as f64;
    (eps, eps * design.total_samples() as f64)
}

/// Smallest `h1` with `ln ε_n ≥ -h1 ln n`; errors unless it lies in `[0, 1)`.
pub fn epsilon_window(design: &ChannelDesign) -> Result<f64> {
    let (eps, _) = epsilon_n(design);
    let h1 = (-eps.ln() / (design.total_samples() as f64).ln()).max(0.0);
    if h1 >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon_n = {eps:e} violates the growth window: ln(eps) / ln(n) = {:.4} <= -1",
            -h1
        )));
    }
    Ok(h1)
}

/// Box-car channel sum `S(m,n) = M^{-1} Σ_{l=1}^M sin²(2πml/M) N^{-2a1 l/M}`
/// in closed form.
pub fn boxcar_s_closed_form(m: i64, channels: usize, samples: usize, a1: f64) -> f64 {
    let big_m = channels as i64;
    if (2 * m).rem_euclid(big_m) == 0 {
        return 0.0;
    }
    let mf = channels as f64;
    if a1 == 0.0 {
        return (1..=channels)
            .map(|l| (2.0 * PI * m as f64 * l as f64 / mf).sin().powi(2))
            .sum::<f64>()
            / mf;
    }
    let log_p = -2.0 * a1 * (samples as f64).ln() / mf;
    let p = log_p.exp();
    let one_minus_p = -log_p.exp_m1();
    let one_minus_pm = -(mf * log_p).exp_m1();
    let x = 4.0 * PI * (m.rem_euclid(big_m) as f64) / mf;
    let one_minus_cos = 2.0 * (x / 2.0).sin().powi(2);
    p * (p + 1.0) * one_minus_pm * one_minus_cos
        / (2.0 * mf * one_minus_p * (one_minus_p * one_minus_p + 2.0 * p * one_minus_cos))
}

/// τ and Δ tables over the frequencies of levels `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFunctionals {
    pub tau1: BTreeMap<i64, f64>,
    pub tau2: BTreeMap<i64, f64>,
    pub tau4: BTreeMap<i64, f64>,
    pub delta1: BTreeMap<u32, f64>,
    pub delta2: BTreeMap<u32, f64>,
    pub epsilon_n: f64,
    pub n_star: f64,
}

pub fn design_functionals(
    design: &ChannelDesign,
    kernel: &BlurKernel,
    levels: std::ops::Range<u32>,
) -> Result<DesignFunctionals> {
    let (epsilon_n, n_star) = epsilon_n(design);
    let mut out = DesignFunctionals {
        tau1: BTreeMap::new(),
        tau2: BTreeMap::new(),
        tau4: BTreeMap::new(),
        delta1: BTreeMap::new(),
        delta2: BTreeMap::new(),
        epsilon_n,
        n_star,
    };
    let spec = MeyerSpec::new(0, levels.end.max(1))?;
    for j in levels {
        for m in spec.frequency_set(j).members {
            if let std::collections::btree_map::Entry::Vacant(e) = out.tau1.entry(m) {
                e.insert(tau_kappa(design, kernel, m, Kappa::One)?);
                out.tau2.insert(m, tau_kappa(design, kernel, m, Kappa::Two)?);
                out.tau4.insert(m, tau_kappa(design, kernel, m, Kappa::Four)?);
            }
        }
        out.delta1.insert(j, delta_kappa(design, kernel, j, Kappa::One)?);
        out.delta2.insert(j, delta_kappa(design, kernel, j, Kappa::Two)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Regular,
    SuperSmooth,
}

/// Fitted decay `τ₁(m) ≈ C |m|^{-2ν} (ln|m|)^{-λ} e^{-α|m|^β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub nu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub log_scale: f64,
    pub regime: Regime,
    pub rss: f64,
    pub r_squared: f64,
    pub points: usize,
    /// Ratio of the log-log slope over the upper and lower thirds of the range.
    pub slope_ratio: f64,
}

fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(y.len(), columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let resid = &a * &coef - &b;
    Some((coef.iter().copied().collect(), resid.norm_squared()))
}

fn local_slope(logm: &[f64], y: &[f64]) -> f64 {
    let ones = vec![1.0; y.len()];
    least_squares(&[ones, logm.to_vec()], y).map_or(0.0, |(c, _)| c[1])
}

/// Fits the decay of `τ₁(m, n)` over `m_range` and classifies the kernel.
///
/// The regime is read off the curvature of `ln τ₁` against `ln m`: a
/// polynomial decay has a constant log-log slope, an exponential one has a
/// slope growing like `m^β`.
pub fn characterize_kernel(
    design: &ChannelDesign,
    kernel: &BlurKernel,
    m_range: RangeInclusive<i64>,
) -> Result<KernelFit> {
    let (lo, hi) = (m_range.start().abs().max(2), m_range.end().abs());
    if hi < 2 * lo {
        return Err(Error::DegenerateFit(format!(
            "frequency range [{lo}, {hi}] spans less than one octave"
        )));
    }
    let mut ms = Vec::new();
    let mut y = Vec::new();
    for m in lo..=hi {
        let lt = log_tau_kappa(design, kernel, m, Kappa::One)?;
        if lt.is_finite() && lt > ILL_POSED_TAU.ln() {
            ms.push(m as f64);
            y.push(lt);
        }
    }
    if ms.len() < 5 {
        return Err(Error::DegenerateFit(format!(
            "only {} frequencies with positive tau_1 in [{lo}, {hi}]",
            ms.len()
        )));
    }
    let logm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let loglogm: Vec<f64> = logm.iter().map(|l| l.ln()).collect();
    let ones = vec![1.0; ms.len()];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let third = ms.len() / 3;
    let s_lo = local_slope(&logm[..third.max(2)], &y[..third.max(2)]);
    let s_hi = local_slope(&logm[ms.len() - third.max(2)..], &y[ms.len() - third.max(2)..]);
    let scale_free = s_lo.abs().max(s_hi.abs()) < 1e-6;
    let slope_ratio = if scale_free { 1.0 } else { s_hi / s_lo };
    let super_smooth = !scale_free && s_hi < 0.0 && slope_ratio > 1.5;

    let r2 = |rss: f64| if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    if !super_smooth {
        let (c, rss) = least_squares(&[ones, logm, loglogm], &y)
            .ok_or_else(|| Error::DegenerateFit("regular model least squares failed".into()))?;
        return Ok(KernelFit {
            nu: -c[1] / 2.0,
            lambda: -c[2],
            alpha: 0.0,
            beta: 0.0,
            log_scale: c[0],
            regime: Regime::Regular,
            rss,
            r_squared: r2(rss),
            points: ms.len(),
            slope_ratio,
        });
    }
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for step in 0..=350 {
        let beta = 0.5 + step as f64 * 0.01;
        let pow: Vec<f64> = ms.iter().map(|m| m.powf(beta)).collect();
        if let Some((c, rss)) = least_squares(&[ones.clone(), logm.clone(), loglogm.clone(), pow], &y) {
            if best.as_ref().map_or(true, |b| rss < b.2) {
                best = Some((beta, c, rss));
            }
        }
    }
    let (beta, c, rss) = best.ok_or_else(|| Error::DegenerateFit("super-smooth fit failed".into()))?;
    Ok(KernelFit {
        nu: -c[1] / 2.0,
        lambda: -c[2],
        alpha: -c[3],
        beta,
        log_scale: c[0],
        regime: Regime::SuperSmooth,
        rss,
        r_squared: r2(rss),
        points: ms.len(),
        slope_ratio,
    })
}
