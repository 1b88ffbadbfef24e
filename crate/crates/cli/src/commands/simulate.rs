use lrd_deconv::channel::{simulate_observations, simulate_signal};
use lrd_deconv::fourier::FourierSeries;
use lrd_deconv::stats::fmt17;

use super::Context;
use crate::error::CliResult;
use crate::output::two_column;

pub fn simulate(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let design = cfg.design()?;
    let kernel = cfg.kernel(&ctx.base_dir)?;
    let samples = design.samples_per_channel;
    let full = ctx.truth("simulate")?.series();
    let band = full.band().min((samples - 1) / 2);
    let f = FourierSeries::from_fn(band, |m| full.get(m));
    let tail = full.energy() - f.energy();
    if ctx.dry_run {
        println!(
            "simulate {}: M = {}, N = {}, truth band {band} (tail energy {tail:.3e}), noise {}",
            cfg.name,
            design.channels(),
            samples,
            if cfg.design.rule.noiseless() { "off" } else { "on" }
        );
        return Ok(());
    }
    let y = if cfg.design.rule.noiseless() {
        simulate_signal(&f, &design, &kernel)?
    } else {
        simulate_observations(&f, &design, &kernel, cfg.seed)?
    };

    let mut out = ctx.output()?;
    let mut rows = String::with_capacity(design.total_samples() * 25);
    for row in y.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        rows.push_str(&line.join(","));
        rows.push('\n');
    }
    out.write("y.csv", &rows)?;

    let mut table = String::from("l,u,kind,d,scale\n");
    for (l, (u, model)) in design.u.iter().zip(&design.noise).enumerate() {
        let kind = serde_json::to_value(model.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        table.push_str(&format!("{},{},{kind},{},{}\n", l + 1, fmt17(*u), fmt17(model.d), fmt17(model.scale)));
    }
    out.write("design.csv", &table)?;

    let mut coeffs = String::from("m,re,im\n");
    for (m, c) in f.iter() {
        coeffs.push_str(&format!("{m},{},{}\n", fmt17(c.re), fmt17(c.im)));
    }
    out.write("truth.csv", &coeffs)?;
    let grid = f.evaluate_grid(samples);
    out.write(
        "truth.dat",
        &two_column("t", "f", grid.iter().enumerate().map(|(i, &v)| (i as f64 / samples as f64, v))),
    )?;
    if tail > 0.0 {
        eprintln!("note: truth energy {tail:.3e} lies beyond the observable band |m| <= {band}");
    }
    ctx.finish(out, "simulate")
}
