//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use aoa_core::beam::{AngularGain, CosinePattern, FreeSpaceLink, LinkGeometry, Pointing};
use aoa_core::crlb::{
    crlb_rmse_curve, default_grid, efficiency_check, max_derivative_rel_error, AlphaSpec, CrlbConfig, CrlbScenario,
    EfficiencyConfig,
};
use aoa_core::estimators::{aoa_samples, fit_directivity, fit_estimator, AoaEstimator, FitConfig, EstimatorMode};
use aoa_core::metrics::{mae, rmse};
use aoa_core::rng::{stream, DEFAULT_SEED};
use aoa_core::scalar::{deg, to_deg};
use aoa_core::sr::{self, SrConfig};
use aoa_core::synth::presets::*;
use aoa_core::synth::{generate_sweep, ks_distance, monte_carlo_pl_cdf, Plane, RotatingEnd, SweepDataset};
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn forward_model_identity() -> Outcome {
    let base = stage1_link::<f64>();
    let mut worst = 0f64;
    for n in [1.0, 4.0, 28.0] {
        let link = FreeSpaceLink {
            rx_pattern: CosinePattern::symmetric(n, 23.5).unwrap(),
            ..base
        };
        for d in 0..=85 {
            let rx = Pointing::azimuth(deg(d as f64));
            let tx = Pointing::azimuth(deg(10.0));
            let a = link.total_pl_db(tx, rx).unwrap();
            let b = link.total_pl_db_from_gains(tx, rx).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst < 1e-9, format!("max |log-expanded - gain form| = {worst:.3e} dB"))
}

/// Receive and transmit rotations in both planes.
fn four_cuts(spec_fn: impl Fn(RotatingEnd, Plane) -> SweepDataset<f64>) -> Vec<SweepDataset<f64>> {
    [
        (RotatingEnd::Rx, Plane::H),
        (RotatingEnd::Rx, Plane::V),
        (RotatingEnd::Tx, Plane::H),
        (RotatingEnd::Tx, Plane::V),
    ]
    .into_iter()
    .map(|(e, p)| spec_fn(e, p))
    .collect()
}

fn directivity_recovery() -> Outcome {
    let g1 = LinkGeometry::FreeSpace(stage1_link::<f64>());
    let stage1 = four_cuts(|end, plane| {
        let mut spec = stage1_spec(0.0);
        spec.rotating = end;
        spec.planes = vec![plane];
        generate_sweep(&g1, &spec, DEFAULT_SEED).unwrap()
    });
    let refs: Vec<&SweepDataset<f64>> = stage1.iter().collect();
    let fit1 = fit_directivity(&refs).unwrap().integers();

    let g2 = LinkGeometry::Ris(stage2_link::<f64>(2.0));
    let ris = four_cuts(|end, plane| {
        let mut spec = stage1_spec(0.0);
        spec.angle_start_deg = 0.0;
        spec.angle_stop_deg = 84.0;
        spec.boresight_deg = 0.0;
        spec.freqs_hz = stage2_freqs();
        spec.rotating = end;
        spec.planes = vec![plane];
        generate_sweep(&g2, &spec, DEFAULT_SEED).unwrap()
    });
    let refs: Vec<&SweepDataset<f64>> = ris.iter().collect();
    let fit2 = fit_directivity(&refs).unwrap();
    let ok = fit1 == (1, 1, 28, 28) && fit2.n_t.value == 4 && fit2.n_r.value == 1;
    outcome(
        ok,
        format!(
            "stage I (n_t, m_t, n_r, m_r) = {fit1:?}; RIS n_t = {}, n_r = {}",
            fit2.n_t.value, fit2.n_r.value
        ),
    )
}

fn direct_round_trip() -> Outcome {
    let sweep = stage1_sweep::<f64>(0.0, DEFAULT_SEED).unwrap();
    let model = fit_estimator(&sweep, &[], &FitConfig::default()).unwrap();
    let AoaEstimator::DirectInv(m) = &model.estimator else {
        return outcome(false, "fit did not return a direct-inversion model");
    };
    let mut worst = 0f64;
    for s in aoa_samples(&sweep).unwrap() {
        if s.theta_rad >= deg(2.4) - 1e-12 && s.theta_rad <= deg(57.6) + 1e-12 {
            worst = worst.max(to_deg((m.predict(s.delta_pl_db) - s.theta_rad).abs()));
        }
    }
    outcome(
        worst < 1e-6 && m.offset_rad.abs() < 1e-9,
        format!("max error {worst:.3e} deg, offset {:.3e} rad", m.offset_rad),
    )
}

fn noisy_ordering() -> Outcome {
    let sweep = stage1_sweep::<f64>(0.5, DEFAULT_SEED).unwrap();
    let fit = |mode| {
        fit_estimator(
            &sweep,
            &[],
            &FitConfig {
                mode,
                ..FitConfig::default()
            },
        )
        .unwrap()
        .diagnostics
        .mae_deg
    };
    let direct = fit(EstimatorMode::DirectInv);
    let poly = fit(EstimatorMode::PolyCos);
    outcome(
        direct < 1.0 && poly > direct && poly <= 10.0,
        format!("sigma 0.5 dB, seed {DEFAULT_SEED}: MAE direct {direct:.4} deg, poly {poly:.4} deg"),
    )
}

fn stage2_constant() -> Outcome {
    let sweep = stage2_samples::<f64>(2.0, 0.0, DEFAULT_SEED).unwrap();
    let samples = aoa_samples(&sweep).unwrap();
    let run = |mode| {
        fit_estimator(
            &sweep,
            &[],
            &FitConfig {
                mode,
                sr: SrConfig {
                    iterations: 5000,
                    max_size: 10,
                    ..SrConfig::default()
                },
                ..FitConfig::default()
            },
        )
        .unwrap()
    };
    let sr_model = run(EstimatorMode::UnconstrainedSr);
    let direct = run(EstimatorMode::DirectInv);
    let poly = run(EstimatorMode::PolyCos);
    let value = |m: &aoa_core::estimators::AoaModel<f64>| m.estimator.predict(&m.features.row(&samples[0])).unwrap().0;
    let (v_sr, v_di) = (value(&sr_model), value(&direct));
    let near = |v: f64| (v - 0.9599).abs() <= 1e-3;
    let ok = sr_model.diagnostics.mae_deg < 1e-3
        && direct.diagnostics.mae_deg < 1e-3
        && near(v_sr)
        && near(v_di)
        && poly.diagnostics.mae_deg < 2.0;
    outcome(
        ok,
        format!(
            "SR `{}` = {v_sr:.6} rad (MAE {:.2e} deg); direct = {v_di:.6} rad (MAE {:.2e} deg); poly MAE {:.2e} deg",
            sr_model.estimator.describe(),
            sr_model.diagnostics.mae_deg,
            direct.diagnostics.mae_deg,
            poly.diagnostics.mae_deg
        ),
    )
}

fn sr_sanity() -> Outcome {
    let x: Vec<Vec<f64>> = (0..51).map(|i| vec![-3.0 + 6.0 * i as f64 / 50.0]).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0].cos()).collect();
    let cfg = SrConfig::default();
    let a = sr::fit(&x, &y, &cfg).unwrap();
    let b = sr::fit(&x, &y, &cfg).unwrap();
    let hit = a.entries.iter().find(|e| e.complexity <= 2 && e.loss < 1e-12);
    let valid = a.validate();
    let same = a.to_csv() == b.to_csv();
    outcome(
        hit.is_some() && valid.is_ok() && same,
        format!(
            "low-complexity exact entry: {}; dominance check: {:?}; identical reruns: {same}",
            hit.map(|e| e.expr.to_text()).unwrap_or_else(|| "none".into()),
            valid
        ),
    )
}

fn crlb_correctness() -> Outcome {
    let grid = default_grid::<f64>();
    let mut fd = 0f64;
    for n in [1.0, 4.0, 28.0] {
        fd = fd.max(max_derivative_rel_error(&AngularGain { scale: 1.0, exponent: n }, &grid, 1e-6));
    }
    let cos = AngularGain {
        scale: 1.0,
        exponent: 1.0,
    };
    let base = CrlbConfig::with_alpha(1e-3, 1000, 1.0);
    let c = crlb_rmse_curve(CrlbScenario::Pattern, &cos, &grid, &base).unwrap();
    let c_sigma = crlb_rmse_curve(CrlbScenario::Pattern, &cos, &grid, &CrlbConfig::with_alpha(4e-3, 1000, 1.0)).unwrap();
    let c_m = crlb_rmse_curve(CrlbScenario::Pattern, &cos, &grid, &CrlbConfig::with_alpha(1e-3, 4000, 1.0)).unwrap();
    let mut scaling = 0f64;
    for i in 0..grid.len() {
        let b = c.bound_rmse_rad[i];
        scaling = scaling
            .max((c_sigma.bound_rmse_rad[i] / (2.0 * b) - 1.0).abs())
            .max((c_m.bound_rmse_rad[i] * 2.0 / b - 1.0).abs());
    }
    let at60 = c.at(deg(60.0)).unwrap();
    let oracle = (1e-3f64 / (2.0 * 1000.0 * 0.75)).sqrt();
    let rel = (at60 / oracle - 1.0).abs();
    outcome(
        fd < 1e-6 && scaling < 1e-12 && rel < 1e-9 && (at60 / 8.165e-4 - 1.0).abs() < 1e-4,
        format!("FD rel err {fd:.2e}; scaling err {scaling:.2e}; sqrt CRLB(60 deg) = {at60:.6e} rad (rel {rel:.1e})"),
    )
}

fn efficiency() -> Outcome {
    let gain = stage1_link::<f64>().rx_angular_gain().unwrap();
    let cfg = CrlbConfig {
        noise_var: 1e-3,
        snapshots: 1000,
        alpha: AlphaSpec::PeakCalibrated { s21_peak_lin: 1.0 },
    };
    let curve = crlb_rmse_curve(CrlbScenario::FreeSpace, &gain, &default_grid(), &cfg).unwrap();
    let pts = efficiency_check(
        &curve,
        &EfficiencyConfig {
            trials: 10_000,
            seed: DEFAULT_SEED,
            ..EfficiencyConfig::default()
        },
    );
    let compared: Vec<_> = pts.iter().filter(|p| p.compared).collect();
    let fails: Vec<f64> = compared.iter().filter(|p| !p.passes).map(|p| p.theta_deg).collect();
    let rising = curve.strictly_increasing_on(deg(75.0), deg(89.0));
    let worst = compared
        .iter()
        .map(|p| (p.empirical_rmse_deg - p.crlb_rmse_deg) / p.std_err_deg)
        .fold(f64::INFINITY, f64::min);
    outcome(
        !compared.is_empty() && fails.is_empty() && rising,
        format!(
            "n = 28: {} of {} angles in the small-error regime, below-band at {fails:?}, min z = {worst:.2}; bound rising on [75, 89]: {rising}",
            compared.len(),
            pts.len()
        ),
    )
}

fn monte_carlo_cdf() -> Outcome {
    let link = stage2_link::<f64>(2.0);
    let sample = monte_carlo_pl_cdf(&link, 3.0, 3000, DEFAULT_SEED).unwrap();
    let reference = monte_carlo_pl_cdf(&link, 3.0, 100_000, DEFAULT_SEED ^ 0xFFFF).unwrap();
    let ks = ks_distance(&sample, &reference);
    let inv = sample.validate().and(reference.validate());
    let bore = link.total_pl_db(Pointing::boresight(), Pointing::boresight()).unwrap();
    outcome(
        ks < 0.05 && inv.is_ok() && sample.len() == 3000,
        format!(
            "KS = {ks:.4}; invariants {inv:?}; median {:.3} dB vs boresight {bore:.3} dB",
            sample.median()
        ),
    )
}

fn metrics() -> Outcome {
    let e = mae::<f64>(&[1.0, 2.0, 3.0], &[1.0, 1.0, 3.0]).unwrap();
    let r = rmse::<f64>(&[1.0, 2.0, 3.0], &[1.0, 1.0, 3.0]).unwrap();
    let mut ok = (e - 1.0 / 3.0).abs() < 1e-15 && (r - (1.0f64 / 3.0).sqrt()).abs() < 1e-15;
    ok &= mae(&[1.0], &[1.0, 2.0]).is_err() && mae::<f64>(&[], &[]).is_err();
    let mut rng = stream(DEFAULT_SEED, &[0xAE]);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let (m, r) = (mae(&a, &b).unwrap(), rmse(&a, &b).unwrap());
        if m > r * (1.0 + 1e-12) {
            violations += 1;
        }
        let bias: Vec<f64> = b.iter().map(|v| v + 2.5).collect();
        let (m, r) = (mae(&bias, &b).unwrap(), rmse(&bias, &b).unwrap());
        if (m - 2.5).abs() > 1e-9 || (r - 2.5).abs() > 1e-9 {
            violations += 1;
        }
    }
    outcome(ok && violations == 0, format!("examples ok: {ok}; MAE > RMSE in {violations} of 1000 draws"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("forward-model identity", forward_model_identity, Duration::from_secs(1)),
        ("directivity recovery", directivity_recovery, Duration::from_secs(5)),
        ("direct-inversion round trip", direct_round_trip, Duration::from_secs(1)),
        ("noisy ordering", noisy_ordering, Duration::from_secs(10)),
        ("stage II constant recovery", stage2_constant, Duration::from_secs(60)),
        ("symbolic regression sanity", sr_sanity, Duration::from_secs(60)),
        ("bound correctness", crlb_correctness, Duration::from_secs(1)),
        ("estimator efficiency", efficiency, Duration::from_secs(120)),
        ("Monte-Carlo path-loss CDF", monte_carlo_cdf, Duration::from_secs(5)),
        ("metrics", metrics, Duration::from_secs(1)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let out = run();
        let took = t0.elapsed();
        let ok = out.ok && took <= *limit;
        failed += !ok as usize;
        println!(
            "{} criterion {:>2} {name}: {} [{:.2}s / {}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
