//! Periodized Meyer wavelets on `T = [0, 1]`, handled entirely through
//! Fourier coefficients.
//!
//! The periodized elements have discrete Fourier coefficients
//!
//! ```text
//! ψ_{mjk} = 2^{-j/2} e^{-i2πmk/2^j} ψ̂(2πm/2^j)
//! φ_{mjk} = 2^{-j/2} e^{-i2πmk/2^j} φ̂(2πm/2^j)
//! ```
//!
//! so each level touches only the finite frequency set `C_j`, and analysis
//! and synthesis reduce to one length-`2^j` FFT per level. Meyer wavelets
//! decay slowly in time; nothing here evaluates them pointwise.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::{Complex, Complex64};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{bin, FourierSeries};
use crate::scalar::Real;

/// Relative magnitude below which a coefficient is treated as zero.
pub const SUPPORT_TOL: f64 = 1e-14;

/// Auxiliary function `ν` of the Meyer construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxFunction {
    /// `ν(x) = x⁴(35 − 84x + 70x² − 20x³)` on `[0, 1]`.
    #[default]
    Polynomial7,
}

impl AuxFunction {
    pub fn eval(self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            AuxFunction::Polynomial7 => {
                let x2 = x * x;
                x2 * x2 * (35.0 - 84.0 * x + 70.0 * x2 - 20.0 * x2 * x)
            }
        }
    }
}

/// `φ̂(ω)`, normalised so that `φ̂(0) = 1`.
pub fn scaling_ft(aux: AuxFunction, omega: f64) -> Complex64 {
    let w = omega.abs();
    let re = if w <= 2.0 * PI / 3.0 {
        1.0
    } else if w < 4.0 * PI / 3.0 {
        (0.5 * PI * aux.eval(3.0 * w / (2.0 * PI) - 1.0)).cos()
    } else {
        0.0
    };
    Complex64::new(re, 0.0)
}

/// `ψ̂(ω)`, supported on `2π/3 ≤ |ω| ≤ 8π/3`.
pub fn wavelet_ft(aux: AuxFunction, omega: f64) -> Complex64 {
    Complex64::from_polar(wavelet_ft_abs(aux, omega), omega / 2.0)
}

fn wavelet_ft_abs(aux: AuxFunction, omega: f64) -> f64 {
    let w = omega.abs();
    if w <= 2.0 * PI / 3.0 || w >= 8.0 * PI / 3.0 {
        0.0
    } else if w <= 4.0 * PI / 3.0 {
        (0.5 * PI * aux.eval(3.0 * w / (2.0 * PI) - 1.0)).sin()
    } else {
        (0.5 * PI * aux.eval(3.0 * w / (4.0 * PI) - 1.0)).cos()
    }
}

/// Which family a periodized element belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    Scaling,
    Wavelet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeyerSpec {
    #[serde(default)]
    pub aux: AuxFunction,
    pub j0: u32,
    /// Finest level, exclusive.
    pub j_max: u32,
}

impl MeyerSpec {
    pub fn new(j0: u32, j_max: u32) -> Result<Self> {
        if j0 > j_max {
            return Err(Error::InvalidParameter(format!(
                "coarse level j0 = {j0} exceeds finest level J = {j_max}"
            )));
        }
        if j_max > 30 {
            return Err(Error::InvalidParameter(format!("level J = {j_max} too large")));
        }
        Ok(Self {
            aux: AuxFunction::default(),
            j0,
            j_max,
        })
    }

    fn ft(&self, element: Element, omega: f64) -> Complex64 {
        match element {
            Element::Scaling => scaling_ft(self.aux, omega),
            Element::Wavelet => wavelet_ft(self.aux, omega),
        }
    }

    /// `m`-th Fourier coefficient of the periodized element `(j, k)`.
    pub fn periodized_coeff(&self, element: Element, j: u32, k: u64, m: i64) -> Complex64 {
        let scale = 2f64.powi(j as i32);
        let shift = Complex64::from_polar(1.0, -2.0 * PI * ((m as f64 * k as f64) / scale).fract());
        self.ft(element, 2.0 * PI * m as f64 / scale) * shift / scale.sqrt()
    }

    pub fn wavelet_coeff(&self, j: u32, k: u64, m: i64) -> Complex64 {
        self.periodized_coeff(Element::Wavelet, j, k, m)
    }

    pub fn scaling_coeff(&self, j: u32, k: u64, m: i64) -> Complex64 {
        self.periodized_coeff(Element::Scaling, j, k, m)
    }

    fn support(&self, element: Element, j: u32) -> FrequencySet {
        let scale = 2f64.powi(j as i32);
        let bound = match element {
            Element::Scaling => (2 << j) / 3 + 1,
            Element::Wavelet => (4 << j) / 3 + 1,
        } as i64;
        let members = (-bound..=bound)
            .filter(|&m| self.ft(element, 2.0 * PI * m as f64 / scale).norm() > SUPPORT_TOL)
            .collect();
        FrequencySet { level: j, members }
    }

    /// `C_j`: frequencies where the level-`j` wavelets have nonzero coefficients.
    pub fn frequency_set(&self, j: u32) -> FrequencySet {
        self.support(Element::Wavelet, j)
    }

    /// Frequencies carried by the level-`j` scaling functions.
    pub fn scaling_frequency_set(&self, j: u32) -> FrequencySet {
        self.support(Element::Scaling, j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencySet {
    pub level: u32,
    /// Sorted ascending.
    pub members: Vec<i64>,
}

impl FrequencySet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, m: i64) -> bool {
        self.members.binary_search(&m).is_ok()
    }

    pub fn max_abs(&self) -> i64 {
        self.members.iter().map(|m| m.abs()).max().unwrap_or(0)
    }
}

/// Scaling coefficients `a_{j0,k}` and wavelet coefficients `b_{jk}` for
/// `j0 ≤ j < J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoefficients<T> {
    pub j0: u32,
    pub j_max: u32,
    pub scaling: Vec<Complex<T>>,
    /// `detail[j - j0]` has length `2^j`.
    pub detail: Vec<Vec<Complex<T>>>,
}

impl<T: Real> WaveletCoefficients<T> {
    pub fn zeros(j0: u32, j_max: u32) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            j0,
            j_max,
            scaling: vec![zero; 1 << j0],
            detail: (j0..j_max).map(|j| vec![zero; 1 << j]).collect(),
        }
    }

    pub fn level(&self, j: u32) -> &[Complex<T>] {
        &self.detail[(j - self.j0) as usize]
    }

    pub fn level_mut(&mut self, j: u32) -> &mut [Complex<T>] {
        &mut self.detail[(j - self.j0) as usize]
    }

    pub fn levels(&self) -> impl Iterator<Item = (u32, &[Complex<T>])> + '_ {
        (self.j0..self.j_max).zip(self.detail.iter().map(Vec::as_slice))
    }

    fn all(&self) -> impl Iterator<Item = &Complex<T>> + '_ {
        self.scaling.iter().chain(self.detail.iter().flatten())
    }

    /// `Σ|a|² + Σ|b|²`.
    pub fn energy(&self) -> T {
        self.all().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_imag(&self) -> T {
        self.all().map(|c| c.im.abs()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.all()
            .zip(other.all())
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// `Σ|Δa|² + Σ|Δb|²` against another coefficient set on the same levels.
    pub fn distance_sqr(&self, other: &Self) -> T {
        self.all().zip(other.all()).map(|(a, b)| (*a - *b).norm_sqr()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.j0 == other.j0 && self.j_max == other.j_max
    }
}

struct LevelTable<T> {
    level: u32,
    freqs: Vec<i64>,
    /// `2^{-j/2} ψ̂(2πm/2^j)` (or `φ̂`) for each member of `freqs`.
    weights: Vec<Complex<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> LevelTable<T> {
    fn new(spec: &MeyerSpec, element: Element, j: u32, planner: &mut FftPlanner<T>) -> Self {
        let set = spec.support(element, j);
        let scale = 2f64.powi(j as i32);
        let weights = set
            .members
            .iter()
            .map(|&m| {
                let w = spec.ft(element, 2.0 * PI * m as f64 / scale) / scale.sqrt();
                Complex::new(T::lit(w.re), T::lit(w.im))
            })
            .collect();
        let len = 1usize << j;
        Self {
            level: j,
            freqs: set.members,
            weights,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    fn len(&self) -> usize {
        1 << self.level
    }

    fn analyze(&self, f: &FourierSeries<T>) -> Vec<Complex<T>> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len()];
        for (&m, w) in self.freqs.iter().zip(&self.weights) {
            let b = bin(m, self.len());
            buf[b] = buf[b] + f.get(m) * w.conj();
        }
        self.inverse.process(&mut buf);
        buf
    }

    fn accumulate(&self, coeffs: &[Complex<T>], out: &mut FourierSeries<T>) {
        let mut buf = coeffs.to_vec();
        self.forward.process(&mut buf);
        for (&m, w) in self.freqs.iter().zip(&self.weights) {
            let v = out.get(m) + *w * buf[bin(m, self.len())];
            out.set(m, v);
        }
    }

    fn max_freq(&self) -> i64 {
        self.freqs.iter().map(|m| m.abs()).max().unwrap_or(0)
    }
}

/// Precomputed periodized Meyer basis for levels `j0..J`.
pub struct MeyerBasis<T> {
    spec: MeyerSpec,
    scaling: LevelTable<T>,
    details: Vec<LevelTable<T>>,
}

impl<T> std::fmt::Debug for MeyerBasis<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeyerBasis").field("spec", &self.spec).finish()
    }
}

impl<T: Real> MeyerBasis<T> {
    pub fn new(spec: MeyerSpec) -> Self {
        let mut planner = FftPlanner::new();
        let scaling = LevelTable::new(&spec, Element::Scaling, spec.j0, &mut planner);
        let details = (spec.j0..spec.j_max)
            .map(|j| LevelTable::new(&spec, Element::Wavelet, j, &mut planner))
            .collect();
        Self {
            spec,
            scaling,
            details,
        }
    }

    pub fn spec(&self) -> &MeyerSpec {
        &self.spec
    }

    /// Largest `|m|` touched by any element of the basis.
    pub fn max_frequency(&self) -> i64 {
        self.details
            .iter()
            .map(LevelTable::max_freq)
            .fold(self.scaling.max_freq(), i64::max)
    }

    /// Union of all frequencies used by the basis, sorted.
    pub fn frequencies(&self) -> Vec<i64> {
        let mut all: Vec<i64> = self
            .scaling
            .freqs
            .iter()
            .chain(self.details.iter().flat_map(|t| t.freqs.iter()))
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn frequency_set(&self, j: u32) -> FrequencySet {
        let table = &self.details[(j - self.spec.j0) as usize];
        FrequencySet {
            level: j,
            members: table.freqs.clone(),
        }
    }

    /// Coefficients `a_{j0,k} = Σ f_m conj(φ_{mj0k})`, `b_{jk} = Σ f_m conj(ψ_{mjk})`.
    pub fn analyze(&self, f: &FourierSeries<T>) -> Result<WaveletCoefficients<T>> {
        let needed = self.max_frequency();
        if !f.contains(needed) {
            return Err(Error::MissingFrequency {
                m: f.band() as i64 + 1,
            });
        }
        Ok(WaveletCoefficients {
            j0: self.spec.j0,
            j_max: self.spec.j_max,
            scaling: self.scaling.analyze(f),
            detail: self.details.iter().map(|t| t.analyze(f)).collect(),
        })
    }

    fn check_shape(&self, coeffs: &WaveletCoefficients<T>) -> Result<()> {
        if coeffs.j0 != self.spec.j0 || coeffs.j_max != self.spec.j_max {
            return Err(Error::Shape(format!(
                "coefficients span levels [{}, {}) but basis spans [{}, {})",
                coeffs.j0, coeffs.j_max, self.spec.j0, self.spec.j_max
            )));
        }
        Ok(())
    }

    /// Fourier coefficients of the truncated expansion.
    pub fn spectrum(&self, coeffs: &WaveletCoefficients<T>) -> Result<FourierSeries<T>> {
        self.check_shape(coeffs)?;
        let mut out = FourierSeries::zeros(self.max_frequency() as usize);
        self.scaling.accumulate(&coeffs.scaling, &mut out);
        for (table, level) in self.details.iter().zip(&coeffs.detail) {
            table.accumulate(level, &mut out);
        }
        Ok(out)
    }

    /// Evaluates the expansion at `t_i = i/grid_size`.
    pub fn synthesize(&self, coeffs: &WaveletCoefficients<T>, grid_size: usize) -> Result<Vec<T>> {
        let required = 1usize << self.spec.j_max;
        if !grid_size.is_power_of_two() || grid_size < required {
            return Err(Error::GridTooSmall {
                grid: grid_size,
                required,
            });
        }
        Ok(self.spectrum(coeffs)?.evaluate_grid(grid_size))
    }
}

/// One-shot analysis with the default auxiliary function.
pub fn analyze<T: Real>(f: &FourierSeries<T>, spec: MeyerSpec) -> Result<WaveletCoefficients<T>> {
    MeyerBasis::new(spec).analyze(f)
}

/// One-shot synthesis with the default auxiliary function.
pub fn synthesize<T: Real>(coeffs: &WaveletCoefficients<T>, grid_size: usize) -> Result<Vec<T>> {
    MeyerBasis::new(MeyerSpec::new(coeffs.j0, coeffs.j_max)?).synthesize(coeffs, grid_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const AUX: AuxFunction = AuxFunction::Polynomial7;

    #[test]
    fn aux_function_properties() {
        assert_eq!(AUX.eval(-0.3), 0.0);
        assert_eq!(AUX.eval(1.7), 1.0);
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            assert!((AUX.eval(x) + AUX.eval(1.0 - x) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn scaling_ft_values() {
        assert_eq!(scaling_ft(AUX, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(scaling_ft(AUX, 3.0 * PI).norm(), 0.0);
        assert_eq!(scaling_ft(AUX, 8.0 * PI / 3.0).norm(), 0.0);
    }

    #[test]
    fn scaling_ft_at_2_5_matches_direct_formula() {
        // 2.5 lies in the transition band (2π/3, 4π/3); frozen value from a 30-digit evaluation.
        let x: f64 = 3.0 * 2.5 / (2.0 * PI) - 1.0;
        let nu = x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3));
        let expected = (PI / 2.0 * nu).cos();
        assert_relative_eq!(scaling_ft(AUX, 2.5).re, expected, epsilon = 1e-12);
        assert_relative_eq!(scaling_ft(AUX, 2.5).re, 0.998_901_830_585_606_4, epsilon = 1e-12);
    }

    #[test]
    fn wavelet_ft_support() {
        assert_eq!(wavelet_ft(AUX, PI / 4.0).norm(), 0.0);
        assert_eq!(wavelet_ft(AUX, 4.0 * PI).norm(), 0.0);
        assert!(wavelet_ft(AUX, 2.0 * PI).norm() > 0.5);
    }

    #[test]
    fn frequency_set_level_zero() {
        let spec = MeyerSpec::new(0, 1).unwrap();
        let set = spec.frequency_set(0);
        assert!(set.members.iter().all(|m| m.abs() <= 4));
        assert_eq!(set.members, vec![-1, 1]);
        assert_eq!(spec.scaling_frequency_set(0).members, vec![0]);
    }

    #[test]
    fn modulation_only_changes_phase() {
        let spec = MeyerSpec::new(0, 6).unwrap();
        for m in -30..30 {
            let base = spec.wavelet_coeff(4, 0, m).norm();
            for k in [1, 5, 15] {
                assert!((spec.wavelet_coeff(4, k, m).norm() - base).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parseval_for_single_element() {
        let spec = MeyerSpec::new(0, 4).unwrap();
        let sum: f64 = spec
            .frequency_set(3)
            .members
            .iter()
            .map(|&m| spec.wavelet_coeff(3, 0, m).norm_sqr())
            .sum();
        assert!((sum - 1.0).abs() < 1e-9, "{sum}");
    }

    #[test]
    fn analyze_zero_and_missing() {
        let basis = MeyerBasis::<f64>::new(MeyerSpec::new(2, 5).unwrap());
        let zero = FourierSeries::zeros(basis.max_frequency() as usize);
        let c = basis.analyze(&zero).unwrap();
        assert_eq!(c.energy(), 0.0);
        let short = FourierSeries::<f64>::zeros(3);
        assert!(matches!(basis.analyze(&short), Err(Error::MissingFrequency { .. })));
    }

    #[test]
    fn synthesize_grid_checks() {
        let c = WaveletCoefficients::<f64>::zeros(2, 5);
        assert!(matches!(synthesize(&c, 16), Err(Error::GridTooSmall { .. })));
        assert!(matches!(synthesize(&c, 48), Err(Error::GridTooSmall { .. })));
        assert!(synthesize(&c, 32).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spec_rejects_inverted_levels() {
        assert!(MeyerSpec::new(4, 3).is_err());
    }
}
