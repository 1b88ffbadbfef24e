//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use lrd_deconv::channel::{self, characterize_kernel, BlurKernel, BoxCarWeight, ChannelDesign, KernelFit, KernelTable, Regime};
use lrd_deconv::estimator::{choose_levels, EstimatorConfig};
use lrd_deconv::fourier::FourierSeries;
use lrd_deconv::noise::{NoiseModel, EIGEN_SIZE_LIMIT};
use lrd_deconv::riskbench::{make_test_function, BesovBall, DesignRule, Regressor, TestFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub design: DesignSpec,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSpec>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigencheck: Option<EigencheckSpec>,
    #[serde(default)]
    pub characterize: CharacterizeSpec,
}

/// Channel layout at sample size `n`; benches reuse the rule over their grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    #[serde(flatten)]
    pub rule: DesignRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Heat,
    Dirichlet { r1: f64, r2: f64, c: f64 },
    BoxCar {
        #[serde(default)]
        weight: BoxCarWeight,
    },
    /// Text table of `g_m(u_l)`, path relative to the config file.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub band: usize,
    #[serde(flatten)]
    pub function: TestFunction,
}

impl TruthSpec {
    pub fn series(&self) -> FourierSeries<f64> {
        make_test_function(&self.function, self.band)
    }
}

/// Estimator settings; kernel exponents left out are fitted from `τ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub denom_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_override: Option<(u32, u32)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSpec>,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let base = EstimatorConfig::default();
        Self {
            mu: base.mu,
            nu: None,
            lambda1: None,
            alpha1: None,
            beta: None,
            denom_tol: base.denom_tol,
            level_override: None,
            calibrate: None,
        }
    }
}

/// Pilot simulation choosing `μ` from `mu_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub mu_grid: Vec<f64>,
    #[serde(default = "default_calibration_reps")]
    pub reps: usize,
    #[serde(default = "default_max_rate")]
    pub max_rate: f64,
}

fn default_calibration_reps() -> usize {
    200
}

fn default_max_rate() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub ball: BesovBall,
    /// Coarsest level of the truth's Besov certificate.
    #[serde(default = "default_certify_j0")]
    pub certify_j0: u32,
    /// Defaults to `LogNStar` for regular kernels, `LogLogNStar` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regressor: Option<Regressor>,
}

fn default_certify_j0() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigencheckSpec {
    pub models: Vec<NoiseModel>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeSpec {
    pub m_min: i64,
    /// Defaults to the observable band `(N-1)/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<i64>,
}

impl Default for CharacterizeSpec {
    fn default() -> Self {
        Self { m_min: 2, m_max: None }
    }
}

/// Estimator settings after filling fitted kernel exponents.
#[derive(Debug, Clone)]
pub struct ResolvedEstimator {
    pub config: EstimatorConfig,
    pub fit: Option<KernelFit>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, output directory excluded.
    pub fn hash(&self) -> CliResult<String> {
        let canonical = Self {
            out: None,
            ..self.clone()
        }
        .to_toml()?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    pub fn design_at(&self, n: usize) -> CliResult<ChannelDesign> {
        Ok(self.design.rule.design(n)?)
    }

    pub fn design(&self) -> CliResult<ChannelDesign> {
        self.design_at(self.design.n)
    }

    pub fn kernel(&self, base_dir: &Path) -> CliResult<BlurKernel> {
        let kernel = match &self.kernel {
            KernelSpec::Heat => BlurKernel::Heat,
            KernelSpec::Dirichlet { r1, r2, c } => BlurKernel::Dirichlet { r1: *r1, r2: *r2, c: *c },
            KernelSpec::BoxCar { weight } => BlurKernel::BoxCar { weight: *weight },
            KernelSpec::Table { path } => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                BlurKernel::Table(KernelTable::parse(&text)?)
            }
        };
        kernel.validate()?;
        Ok(kernel)
    }

    fn m_range(&self, design: &ChannelDesign) -> std::ops::RangeInclusive<i64> {
        let top = ((design.samples_per_channel - 1) / 2) as i64;
        self.characterize.m_min..=self.characterize.m_max.unwrap_or(top)
    }

    pub fn characterize(&self, design: &ChannelDesign, kernel: &BlurKernel) -> CliResult<KernelFit> {
        Ok(characterize_kernel(design, kernel, self.m_range(design))?)
    }

    /// Estimator settings for `design`, fitting any kernel exponent the
    /// config leaves open. `h1` is read off the design's `ε_n`.
    pub fn estimator(&self, design: &ChannelDesign, kernel: &BlurKernel) -> CliResult<ResolvedEstimator> {
        let spec = &self.estimator;
        let open = spec.nu.is_none() || spec.lambda1.is_none() || spec.alpha1.is_none() || spec.beta.is_none();
        let fit = if open { Some(self.characterize(design, kernel)?) } else { None };
        let fitted = |pick: fn(&KernelFit) -> f64, default: f64| fit.as_ref().map_or(default, pick);
        let super_smooth = fit.as_ref().is_some_and(|f| f.regime == Regime::SuperSmooth);
        let config = EstimatorConfig {
            mu: spec.mu,
            nu: spec.nu.unwrap_or_else(|| fitted(|f| f.nu.max(0.0), 0.0)),
            lambda1: spec.lambda1.unwrap_or_else(|| fitted(|f| f.lambda, 0.0)),
            alpha1: spec.alpha1.unwrap_or_else(|| if super_smooth { fitted(|f| f.alpha, 0.0) } else { 0.0 }),
            beta: spec.beta.unwrap_or_else(|| if super_smooth { fitted(|f| f.beta, 1.0) } else { 1.0 }),
            denom_tol: spec.denom_tol,
            level_override: spec.level_override,
            h1: channel::epsilon_window(design)?,
        };
        config.validate()?;
        Ok(ResolvedEstimator { config, fit })
    }

    /// Checks every downstream invariant before any computation.
    pub fn validate(&self, base_dir: &Path) -> CliResult<()> {
        if self.name.trim().is_empty() {
            return Err(CliError::Config("experiment name must not be empty".into()));
        }
        let kernel = self.kernel(base_dir)?;
        let mut sizes = vec![self.design.n];
        if let Some(bench) = &self.bench {
            if bench.n_grid.is_empty() {
                return Err(CliError::Config("bench.n_grid must not be empty".into()));
            }
            if bench.reps < 30 {
                return Err(CliError::Config(format!("bench.reps must be at least 30, got {}", bench.reps)));
            }
            bench.ball.validate()?;
            sizes.extend(&bench.n_grid);
        }
        let mut designs = Vec::with_capacity(sizes.len());
        for &n in &sizes {
            let design = self.design_at(n)?;
            kernel.check_design(&design)?;
            channel::epsilon_window(&design)?;
            designs.push(design);
        }
        let largest = designs.iter().map(|d| d.samples_per_channel).max().unwrap_or(0);
        let probe = EstimatorConfig {
            mu: self.estimator.mu,
            nu: self.estimator.nu.unwrap_or(0.0),
            lambda1: self.estimator.lambda1.unwrap_or(0.0),
            alpha1: self.estimator.alpha1.unwrap_or(0.0),
            beta: self.estimator.beta.unwrap_or(1.0),
            denom_tol: self.estimator.denom_tol,
            level_override: self.estimator.level_override,
            h1: 0.0,
        };
        probe.validate()?;
        if probe.level_override.is_some() {
            for design in &designs {
                choose_levels(channel::epsilon_n(design).1, design.samples_per_channel, &probe)?;
            }
        }
        if let Some(cal) = &self.estimator.calibrate {
            if cal.mu_grid.is_empty() || cal.mu_grid.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(CliError::Config("estimator.calibrate.mu_grid needs positive finite values".into()));
            }
            if !(0.0..1.0).contains(&cal.max_rate) || cal.reps == 0 {
                return Err(CliError::Config("estimator.calibrate needs reps > 0 and 0 <= max_rate < 1".into()));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.band > largest / 2 {
                return Err(CliError::Config(format!(
                    "truth.band = {} exceeds N/2 = {} of the largest design",
                    truth.band,
                    largest / 2
                )));
            }
        }
        if let Some(eig) = &self.eigencheck {
            for model in &eig.models {
                model.validate()?;
            }
            if let Some(&n) = eig.sizes.iter().find(|&&n| !(2..=EIGEN_SIZE_LIMIT).contains(&n)) {
                return Err(CliError::Config(format!(
                    "eigencheck size N = {n} outside [2, {EIGEN_SIZE_LIMIT}]"
                )));
            }
            if eig.sizes.len() < 2 {
                return Err(CliError::Config("eigencheck needs at least two sizes".into()));
            }
        }
        Ok(())
    }
}
