use lrd_deconv::channel::{simulate_observations, BlurKernel};
use lrd_deconv::estimator::{Estimator, EstimatorConfig};
use lrd_deconv::fourier::{grid_norm_sqr, FourierSeries};
use lrd_deconv::meyer::{analyze, MeyerSpec};
use lrd_deconv::noise::NoiseKind;
use lrd_deconv::riskbench::{
    besov_seminorm, certify, make_test_function, mc_risk, BesovBall, DesignRule, MemoryRule, PointRule, TestFunction,
};
use num_complex::Complex64;

fn boxcar_rule(noise_scale: f64) -> DesignRule {
    DesignRule {
        theta: 0.5,
        channels: None,
        points: PointRule::Interval { a: 0.0, b: 1.0 },
        memory: MemoryRule::Linear { a1: 0.2, a2: 0.1 },
        noise_kind: NoiseKind::Farima,
        noise_scale,
    }
}

fn sawtooth(band: usize) -> FourierSeries<f64> {
    make_test_function(
        &TestFunction::SawtoothSmoothed {
            decay: 2.6,
            amplitude: 1.0,
        },
        band,
    )
}

fn shipped_config() -> EstimatorConfig {
    EstimatorConfig {
        mu: 1.0,
        nu: 2.0,
        ..Default::default()
    }
}

#[test]
fn zero_noise_risk_vanishes() {
    let f = make_test_function(&TestFunction::SmoothSine { freq: 3, amplitude: 1.0 }, 3);
    let config = EstimatorConfig {
        mu: 0.0,
        nu: 2.0,
        level_override: Some((2, 4)),
        ..Default::default()
    };
    let grid: Vec<usize> = (10..=14).map(|k| 1 << k).collect();
    let report = mc_risk(&f, &boxcar_rule(0.0), &BlurKernel::boxcar(), &config, &grid, 30, 1).unwrap();
    for p in &report.grid {
        assert!(p.risk_mean <= 1e-10, "n {}: {}", p.n, p.risk_mean);
        assert_eq!(p.tail, 0.0);
    }
}

#[test]
fn disjoint_seeds_agree() {
    let f = sawtooth(2000);
    let grid = [1usize << 12, 1 << 14];
    let kernel = BlurKernel::boxcar();
    let a = mc_risk(&f, &boxcar_rule(0.05), &kernel, &shipped_config(), &grid, 200, 1).unwrap();
    let b = mc_risk(&f, &boxcar_rule(0.05), &kernel, &shipped_config(), &grid, 200, 2).unwrap();
    for (p, q) in a.grid.iter().zip(&b.grid) {
        assert_ne!(p.risk_mean, q.risk_mean);
        let pooled = (p.risk_se.powi(2) + q.risk_se.powi(2)).sqrt();
        assert!((p.risk_mean - q.risk_mean).abs() < 3.0 * pooled, "n {}", p.n);
    }
}

#[test]
fn standard_error_shrinks_with_replicates() {
    let f = sawtooth(2000);
    let grid = [1usize << 12];
    let kernel = BlurKernel::boxcar();
    let a = mc_risk(&f, &boxcar_rule(0.05), &kernel, &shipped_config(), &grid, 500, 3).unwrap();
    let b = mc_risk(&f, &boxcar_rule(0.05), &kernel, &shipped_config(), &grid, 1000, 3).unwrap();
    let ratio = b.grid[0].risk_se / a.grid[0].risk_se;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn risk_decreases_along_shipped_grid() {
    let f = sawtooth(1 << 12);
    let grid: Vec<usize> = (14..=18).map(|k| 1 << k).collect();
    let report = mc_risk(&f, &boxcar_rule(0.02), &BlurKernel::boxcar(), &shipped_config(), &grid, 30, 9).unwrap();
    for w in report.grid.windows(2) {
        let slack = 2.0 * (w[0].risk_se.powi(2) + w[1].risk_se.powi(2)).sqrt();
        assert!(w[1].risk_mean <= w[0].risk_mean + slack, "n {} -> {}", w[0].n, w[1].n);
    }
}

#[test]
fn grid_risk_splits_into_coefficient_error_and_band_tail() {
    let rule = boxcar_rule(0.05);
    let design = rule.design(1 << 14).unwrap();
    let kernel = BlurKernel::boxcar();
    let samples = design.samples_per_channel;
    let f = sawtooth((samples - 1) / 2);
    let config = EstimatorConfig {
        level_override: Some((2, 5)),
        ..shipped_config()
    };
    let est = Estimator::<f64>::new(&design, &kernel, &config).unwrap();
    let out = est.run(&simulate_observations(&f, &design, &kernel, 4).unwrap()).unwrap();
    let truth = analyze(&f, MeyerSpec::new(2, 5).unwrap()).unwrap();
    let f_grid = f.evaluate_grid(samples);
    let diff: Vec<f64> = out.grid.iter().zip(&f_grid).map(|(a, b)| a - b).collect();
    let tail = f.energy() - truth.energy();
    let lhs = grid_norm_sqr(&diff);
    let rhs = out.coefficients.distance_sqr(&truth) + tail;
    assert!(tail > 0.0);
    assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
}

#[test]
fn dense_rate_never_beats_sparse_rate_in_dense_zone() {
    let mut checked = 0;
    for s in [0.6, 1.0, 1.5, 2.0, 3.0, 5.0] {
        for p in [1.0, 1.2, 1.5, 2.0, 3.0, 8.0, f64::INFINITY] {
            for nu in [0.0, 0.5, 1.0, 2.0, 4.0] {
                let ball = BesovBall::new(s, p, 2.0, 1.0).unwrap();
                let s_star = ball.s_star();
                if nu * (2.0 / p - 1.0) > s_star || s_star <= 0.0 {
                    continue;
                }
                let dense = 2.0 * s / (2.0 * s + 2.0 * nu + 1.0);
                let sparse = 2.0 * s_star / (2.0 * s_star + 2.0 * nu);
                assert!(dense <= sparse + 1e-12, "s {s} p {p} nu {nu}");
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn cosine_seminorm_is_stable_in_finest_level() {
    let f = FourierSeries::<f64>::from_fn(1400, |m| {
        if m.abs() == 1 {
            Complex64::new(0.5, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let ball = BesovBall::new(2.0, 2.0, 2.0, 10.0).unwrap();
    let at = |j_max| besov_seminorm(&analyze(&f, MeyerSpec::new(0, j_max).unwrap()).unwrap(), &ball).unwrap();
    let (coarse, fine) = (at(8), at(10));
    assert!(coarse.is_finite() && coarse > 0.0);
    assert!((fine / coarse - 1.0).abs() < 0.01);
}

#[test]
fn bump_mix_lies_in_declared_ball() {
    let f = make_test_function(&TestFunction::BumpMix { width: 0.05, amplitude: 1.0 }, 1024);
    let ball = BesovBall::new(1.5, 2.0, 2.0, 10.0).unwrap();
    let cert = certify(&f, &ball, 2).unwrap();
    assert!(cert.member, "{cert:?}");
    assert!(cert.j_max >= 9);
}
