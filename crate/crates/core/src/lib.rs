//! Wavelet deconvolution for multichannel observations with long-range
//! dependent Gaussian errors.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod fourier;
pub mod meyer;
pub mod noise;
pub mod riskbench;
pub mod scalar;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type FourierSeries64 = fourier::FourierSeries<f64>;
pub type MeyerBasis64 = meyer::MeyerBasis<f64>;
pub type WaveletCoefficients64 = meyer::WaveletCoefficients<f64>;
pub type Observations64 = channel::Observations<f64>;
pub type Estimator64 = estimator::Estimator<f64>;
pub type Estimate64 = estimator::Estimate<f64>;
pub type Estimator32 = estimator::Estimator<f32>;
