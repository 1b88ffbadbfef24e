//! Discrete Fourier coefficients on `T = [0, 1]`.
//!
//! Convention: `f(t) = Σ_m f_m e^{i2πmt}` and, for a vector sampled at
//! `t_i = i/N`, `y_m = N^{-1} Σ_i y(t_i) e^{-i2πm t_i}`. Frequencies are
//! integers; on an `N`-point grid they are identified modulo `N`.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bin of frequency `m` in a length-`n` DFT.
#[inline]
pub fn bin(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Symmetric frequency of DFT bin `k`, in `(-n/2, n/2]`.
#[inline]
pub fn frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Fourier coefficients `f_m` for `|m| ≤ band`; zero outside the band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries<T> {
    band: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> FourierSeries<T> {
    pub fn zeros(band: usize) -> Self {
        Self {
            band,
            coeffs: vec![Complex::new(T::zero(), T::zero()); 2 * band + 1],
        }
    }

    pub fn from_fn(band: usize, mut f: impl FnMut(i64) -> Complex<T>) -> Self {
        let b = band as i64;
        Self {
            band,
            coeffs: (-b..=b).map(&mut f).collect(),
        }
    }

    /// Builds from `2·band + 1` coefficients ordered `m = -band..=band`.
    pub fn from_vec(coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::Shape(format!(
                "Fourier vector must have odd length 2B+1, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            band: coeffs.len() / 2,
            coeffs,
        })
    }

    pub fn band(&self) -> usize {
        self.band
    }

    #[inline]
    pub fn contains(&self, m: i64) -> bool {
        m.unsigned_abs() as usize <= self.band
    }

    #[inline]
    pub fn get(&self, m: i64) -> Complex<T> {
        if self.contains(m) {
            self.coeffs[(m + self.band as i64) as usize]
        } else {
            Complex::new(T::zero(), T::zero())
        }
    }

    #[inline]
    pub fn set(&mut self, m: i64, value: Complex<T>) {
        assert!(self.contains(m), "frequency {m} outside band {}", self.band);
        self.coeffs[(m + self.band as i64) as usize] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex<T>)> + '_ {
        let b = self.band as i64;
        (-b..=b).zip(self.coeffs.iter().copied())
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    /// `Σ_m |f_m|²`, the squared `L²(T)` norm.
    pub fn energy(&self) -> T {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest `|f_{-m} - conj(f_m)|`; zero for real-valued functions.
    pub fn hermitian_defect(&self) -> T {
        let b = self.band as i64;
        (0..=b)
            .map(|m| (self.get(-m) - self.get(m).conj()).norm())
            .fold(T::zero(), T::max)
    }

    pub fn map(&self, mut f: impl FnMut(i64, Complex<T>) -> Complex<T>) -> Self {
        let b = self.band as i64;
        Self {
            band: self.band,
            coeffs: (-b..=b).zip(&self.coeffs).map(|(m, &c)| f(m, c)).collect(),
        }
    }

    /// Values `f(i/n)`, `i = 0..n`. Frequencies beyond `n/2` are folded,
    /// which is exact for point evaluation.
    pub fn evaluate_grid(&self, n: usize) -> Vec<T> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for (m, c) in self.iter() {
            buf[bin(m, n)] = buf[bin(m, n)] + c;
        }
        FftPlanner::<T>::new().plan_fft_inverse(n).process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> FourierSeries<U> {
        FourierSeries {
            band: self.band,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| Complex::new(U::lit(c.re.to_f64_lossy()), U::lit(c.im.to_f64_lossy())))
                .collect(),
        }
    }
}

/// Normalised DFT `y_m = N^{-1} Σ_i y_i e^{-i2πmi/N}`, returned by bin.
pub fn dft<T: Real>(values: &[T], planner: &mut FftPlanner<T>) -> Vec<Complex<T>> {
    let n = values.len();
    let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    buf.iter_mut().for_each(|c| *c = *c * scale);
    buf
}

/// Squared grid norm `N^{-1} Σ_i v_i²`, a Riemann sum for `‖v‖²_{L²(T)}`.
pub fn grid_norm_sqr<T: Real>(values: &[T]) -> T {
    values.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(values.len())
}
