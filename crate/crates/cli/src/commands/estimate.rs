use std::path::{Path, PathBuf};

use lrd_deconv::channel::{BlurKernel, ChannelDesign, Observations};
use lrd_deconv::estimator::{
    calibrate_mu, write_coefficients_csv, write_decisions_csv, Estimator, EstimatorConfig, MuCalibration,
};
use lrd_deconv::fourier::{grid_norm_sqr, FourierSeries};
use lrd_deconv::seed::derive_seed;
use lrd_deconv::stats::fmt17;
use num_complex::Complex64;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::output::{check_hashes, read_stamped, two_column, StampedFile};

/// Applies the configured `μ` calibration, if any.
pub(super) fn calibrated(
    ctx: &Context,
    design: &ChannelDesign,
    kernel: &BlurKernel,
    config: EstimatorConfig,
) -> CliResult<(EstimatorConfig, Option<MuCalibration>)> {
    let Some(cal) = &ctx.config.estimator.calibrate else {
        return Ok((config, None));
    };
    let seed = derive_seed(ctx.config.seed, &[u64::MAX]);
    let result = calibrate_mu(design, kernel, &config, &cal.mu_grid, cal.reps, cal.max_rate, seed)?;
    eprintln!("calibrated mu = {} from {} pilot replicates", result.mu, result.replicates);
    Ok((EstimatorConfig { mu: result.mu, ..config }, Some(result)))
}

fn schema(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

fn parse_matrix(file: &StampedFile) -> CliResult<Vec<Vec<f64>>> {
    file.body
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| schema(&file.path, format!("row {}: {e}", i + 1))))
                .collect()
        })
        .collect()
}

fn parse_truth(file: &StampedFile) -> CliResult<FourierSeries<f64>> {
    let mut pairs = Vec::new();
    for line in file.body.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || schema(&file.path, format!("malformed row `{line}`"));
        if cols.len() != 3 {
            return Err(bad());
        }
        let m: i64 = cols[0].trim().parse().map_err(|_| bad())?;
        let re: f64 = cols[1].trim().parse().map_err(|_| bad())?;
        let im: f64 = cols[2].trim().parse().map_err(|_| bad())?;
        pairs.push((m, Complex64::new(re, im)));
    }
    let band = pairs.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
    let mut f = FourierSeries::zeros(band);
    for (m, c) in pairs {
        f.set(m, c);
    }
    Ok(f)
}

pub fn estimate(ctx: &Context, input: Option<PathBuf>) -> CliResult<()> {
    let cfg = &ctx.config;
    let input = input.unwrap_or_else(|| ctx.out.clone());
    let y_file = read_stamped(&input.join("y.csv"))?;
    let truth_path = input.join("truth.csv");
    let truth_file = if truth_path.exists() { Some(read_stamped(&truth_path)?) } else { None };
    let mut stamped = vec![&y_file];
    stamped.extend(truth_file.as_ref());
    check_hashes(&stamped, &ctx.hash)?;

    let design = cfg.design()?;
    let kernel = cfg.kernel(&ctx.base_dir)?;
    let rows = parse_matrix(&y_file)?;
    if rows.len() != design.channels() || rows.iter().any(|r| r.len() != design.samples_per_channel) {
        return Err(schema(
            &y_file.path,
            format!(
                "expected {} rows of {} values for this design",
                design.channels(),
                design.samples_per_channel
            ),
        ));
    }
    let y = Observations::from_rows(rows)?;
    let resolved = cfg.estimator(&design, &kernel)?;
    if ctx.dry_run {
        println!("estimate {}: {:?}", cfg.name, resolved.config);
        return Ok(());
    }
    let (config, _) = calibrated(ctx, &design, &kernel, resolved.config)?;
    let result = Estimator::<f64>::new(&design, &kernel, &config)?.run(&y)?;
    let samples = design.samples_per_channel;
    let n = design.total_samples();
    let diag = &result.diagnostics;

    let mut out = ctx.output()?;
    out.write(
        "fhat.dat",
        &two_column("t", "fhat", result.grid.iter().enumerate().map(|(i, &v)| (i as f64 / samples as f64, v))),
    )?;
    let mut buf = Vec::new();
    write_coefficients_csv(&mut buf, &result.coefficients, &result.decisions, n).map_err(|e| CliError::Io(e.to_string()))?;
    out.write("coefficients.csv", &String::from_utf8_lossy(&buf))?;
    buf.clear();
    write_decisions_csv(&mut buf, &result.decisions).map_err(|e| CliError::Io(e.to_string()))?;
    out.write("decisions.csv", &String::from_utf8_lossy(&buf))?;

    let mut text = String::from("item,j,value\n");
    text.push_str(&format!("epsilon_n,,{}\n", fmt17(diag.epsilon_n)));
    text.push_str(&format!("n_star,,{}\n", fmt17(diag.n_star)));
    text.push_str(&format!("j0,,{}\nJ,,{}\n", diag.j0, diag.j_max));
    text.push_str(&format!("mu,,{}\nnu,,{}\n", fmt17(config.mu), fmt17(config.nu)));
    for lv in &diag.levels {
        text.push_str(&format!("threshold,{},{}\n", lv.level, fmt17(lv.threshold)));
        text.push_str(&format!("blocks,{},{}\nkept,{},{}\n", lv.level, lv.blocks, lv.level, lv.kept));
    }
    for m in &diag.ill_posed {
        text.push_str(&format!("ill_posed,,{m}\n"));
    }
    if let Some(file) = &truth_file {
        let truth = parse_truth(file)?;
        let truth_grid = truth.evaluate_grid(samples);
        let diff: Vec<f64> = result.grid.iter().zip(&truth_grid).map(|(a, b)| a - b).collect();
        let rel = (grid_norm_sqr(&diff) / grid_norm_sqr(&truth_grid)).sqrt();
        text.push_str(&format!("relative_l2_error,,{}\n", fmt17(rel)));
        println!("relative L2 error against truth: {rel:.3e}");
    }
    out.write("diagnostics.csv", &text)?;
    for w in &diag.warnings {
        eprintln!("warning: {w}");
    }
    ctx.finish(out, "estimate")
}
