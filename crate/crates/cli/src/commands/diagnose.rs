use lrd_deconv::channel::{log_tau_kappa, Kappa};
use lrd_deconv::noise::{toeplitz_eigen_bounds, NoiseModel};
use lrd_deconv::stats::{fmt17, ols};
use rayon::prelude::*;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::two_column;

fn model_label(model: &NoiseModel) -> String {
    let kind = serde_json::to_value(model.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    format!("{kind}_d{}", model.d)
}

/// Toeplitz covariance spectra across sizes, with the log-log growth of the
/// extreme eigenvalues per model.
pub fn eigencheck(ctx: &Context) -> CliResult<()> {
    let spec = ctx
        .config
        .eigencheck
        .as_ref()
        .ok_or_else(|| CliError::Config("`eigencheck` needs an [eigencheck] section".into()))?;
    let mut sizes = spec.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if ctx.dry_run {
        println!("eigencheck {}: {} models at sizes {:?}", ctx.config.name, spec.models.len(), sizes);
        return Ok(());
    }
    let jobs: Vec<(usize, usize)> = (0..spec.models.len()).flat_map(|i| sizes.iter().map(move |&n| (i, n))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, n)| toeplitz_eigen_bounds(&spec.models[i], n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = ctx.output()?;
    let mut table = String::from("model,d,N,lambda_min,lambda_max,ratio_min,ratio_max\n");
    let mut slopes = String::from("model,d,slope_lambda_max,slope_se,slope_lambda_min,expected\n");
    for (i, model) in spec.models.iter().enumerate() {
        let rows: Vec<_> = jobs.iter().zip(&results).filter(|((k, _), _)| *k == i).map(|(_, r)| r).collect();
        let label = model_label(model);
        for r in &rows {
            table.push_str(&format!(
                "{label},{},{},{},{},{},{}\n",
                fmt17(model.d),
                r.n_points,
                fmt17(r.lambda_min),
                fmt17(r.lambda_max),
                fmt17(r.ratio_min),
                fmt17(r.ratio_max)
            ));
        }
        let ln_n: Vec<f64> = rows.iter().map(|r| (r.n_points as f64).ln()).collect();
        let ln_max: Vec<f64> = rows.iter().map(|r| r.lambda_max.ln()).collect();
        let ln_min: Vec<f64> = rows.iter().map(|r| r.lambda_min.ln()).collect();
        let top = ols(&ln_n, &ln_max)?;
        let bottom = ols(&ln_n, &ln_min)?;
        slopes.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            fmt17(model.d),
            fmt17(top.slope),
            fmt17(top.slope_se),
            fmt17(bottom.slope),
            fmt17(2.0 * model.d)
        ));
        out.write(
            &format!("eigen_{}_{label}.dat", i + 1),
            &two_column("ln_N", "ln_lambda_max", ln_n.iter().copied().zip(ln_max.iter().copied())),
        )?;
    }
    out.write("eigen.csv", &table)?;
    out.write("slopes.csv", &slopes)?;
    print!("{slopes}");
    ctx.finish(out, "eigencheck")
}

/// Fits the decay class of `τ₁` for the configured design and kernel.
pub fn characterize(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let design = cfg.design()?;
    let kernel = cfg.kernel(&ctx.base_dir)?;
    let top = cfg.characterize.m_max.unwrap_or(((design.samples_per_channel - 1) / 2) as i64);
    if ctx.dry_run {
        println!(
            "characterize {}: M = {}, N = {}, m in [{}, {top}]",
            cfg.name,
            design.channels(),
            design.samples_per_channel,
            cfg.characterize.m_min
        );
        return Ok(());
    }
    let fit = cfg.characterize(&design, &kernel)?;
    let mut out = ctx.output()?;
    let text = format!(
        "item,value\nregime,{:?}\nnu,{}\nlambda,{}\nalpha,{}\nbeta,{}\nlog_scale,{}\nr_squared,{}\nrss,{}\npoints,{}\nslope_ratio,{}\n",
        fit.regime,
        fmt17(fit.nu),
        fmt17(fit.lambda),
        fmt17(fit.alpha),
        fmt17(fit.beta),
        fmt17(fit.log_scale),
        fmt17(fit.r_squared),
        fmt17(fit.rss),
        fit.points,
        fmt17(fit.slope_ratio)
    );
    out.write("characterize.csv", &text)?;
    let mut points = Vec::new();
    for m in cfg.characterize.m_min.max(1)..=top {
        let lt = log_tau_kappa(&design, &kernel, m, Kappa::One)?;
        if lt.is_finite() {
            points.push(((m as f64).ln(), lt));
        }
    }
    out.write("tau1.dat", &two_column("ln_m", "ln_tau1", points.into_iter()))?;
    print!("{}", text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    ctx.finish(out, "characterize")
}
