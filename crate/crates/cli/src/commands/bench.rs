use lrd_deconv::channel::epsilon_window;
use lrd_deconv::riskbench::{certify, fit_rate, mc_risk, plan, theoretical_rate, RateRegime, Regressor};
use lrd_deconv::stats::fmt17;

use super::estimate::calibrated;
use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::two_column;

pub fn bench(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let spec = cfg
        .bench
        .as_ref()
        .ok_or_else(|| CliError::Config("`bench` needs a [bench] section".into()))?;
    let truth = ctx.truth("bench")?;
    let kernel = cfg.kernel(&ctx.base_dir)?;
    let largest = *spec.n_grid.iter().max().expect("validated non-empty");
    let design = cfg.design_at(largest)?;
    let resolved = cfg.estimator(&design, &kernel)?;
    let mut config = resolved.config;
    for &n in &spec.n_grid {
        config.h1 = config.h1.max(epsilon_window(&cfg.design_at(n)?)?);
    }

    if ctx.dry_run {
        println!("bench {}: {} reps per size, estimator {:?}", cfg.name, spec.reps, config);
        println!("{:>10} {:>6} {:>6} {:>14} {:>4} {:>4}  thresholds", "n", "M", "N", "n*", "j0", "J");
        for row in plan(&cfg.design.rule, &config, &spec.n_grid)? {
            let th: Vec<String> = row.thresholds.iter().map(|(j, t)| format!("{j}:{t:.3e}")).collect();
            println!(
                "{:>10} {:>6} {:>6} {:>14.6e} {:>4} {:>4}  {}",
                row.n,
                row.channels,
                row.samples,
                row.n_star,
                row.j0,
                row.j_max,
                th.join(" ")
            );
            for w in &row.warnings {
                println!("{:>10} warning: {w}", "");
            }
        }
        return Ok(());
    }

    let (config, calibration) = calibrated(ctx, &design, &kernel, config)?;
    let f = truth.series();
    let mut report = mc_risk(&f, &cfg.design.rule, &kernel, &config, &spec.n_grid, spec.reps, cfg.seed)?;
    report.certificate = match certify(&f, &spec.ball, spec.certify_j0) {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("warning: Besov certificate unavailable: {e}");
            None
        }
    };
    report.forecast = match theoretical_rate(&spec.ball, config.nu, config.lambda1, config.alpha1, config.beta) {
        Ok(r) => Some(r),
        Err(e) => {
            eprintln!("warning: no rate forecast: {e}");
            None
        }
    };
    let super_smooth = report.forecast.is_some_and(|r| r.regime == RateRegime::SuperSmooth);
    let regressor = spec
        .regressor
        .unwrap_or(if super_smooth { Regressor::LogLogNStar } else { Regressor::LogNStar });
    report.fit = match fit_rate(&report, regressor) {
        Ok(fit) => Some(fit),
        Err(e) => {
            eprintln!("warning: no rate fit: {e}");
            None
        }
    };

    let mut out = ctx.output()?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    out.write("risk.csv", &String::from_utf8_lossy(&buf))?;
    out.write("risk.dat", &two_column("ln_nstar", "ln_risk", report.grid.iter().map(|p| (p.n_star.ln(), p.risk_mean.ln()))))?;
    out.write_json(
        "report.json",
        &serde_json::json!({
            "config_hash": ctx.hash,
            "estimator": config,
            "kernel_fit": resolved.fit,
            "calibration": calibration,
            "regressor": regressor,
            "report": report,
        }),
    )?;

    let mut summary = format!("experiment {}\nreps per size {}\n", cfg.name, spec.reps);
    summary.push_str(&format!(
        "estimator mu={} nu={} lambda1={} alpha1={} beta={}\n",
        fmt17(config.mu),
        fmt17(config.nu),
        fmt17(config.lambda1),
        fmt17(config.alpha1),
        fmt17(config.beta)
    ));
    if let Some(c) = &report.certificate {
        summary.push_str(&format!(
            "besov norm {} on levels [{}, {}) against radius {}: {}\n",
            fmt17(c.norm),
            c.j0,
            c.j_max,
            fmt17(c.ball.radius),
            if c.member { "inside" } else { "OUTSIDE" }
        ));
    }
    if let Some(r) = &report.forecast {
        summary.push_str(&format!(
            "forecast {:?}: n*^-{} (ln n)^{} (rho {})\n",
            r.regime,
            fmt17(r.exponent),
            fmt17(r.log_exponent),
            fmt17(r.rho)
        ));
    }
    if let Some(fit) = &report.fit {
        summary.push_str(&format!(
            "fitted slope {} +/- {} against {:?} (R^2 {})\n",
            fmt17(fit.slope),
            fmt17(fit.slope_se),
            regressor,
            fmt17(fit.r_squared)
        ));
    }
    print!("{summary}");
    out.write("summary.txt", &summary)?;
    ctx.finish(out, "bench")
}
