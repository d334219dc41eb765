use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use aoa_core::bench::{self, BenchConfig};
use aoa_core::beam::LinkGeometry;
use aoa_core::crlb::{crlb_rmse_curve, CrlbScenario};
use aoa_core::estimators::{fit_estimator_report, AoaModel, EstimatorMode, MODEL_SCHEMA_VERSION};
use aoa_core::scalar::{deg, to_deg};
use aoa_core::synth::{monte_carlo_pl_cdf, Scenario, SweepDataset, SweepMeta};

use crate::config::{self, RunConfig};
use crate::output::{manifest_path, read_input, sidecar_path, Classify, Failure, Staged};
use crate::ConfigArgs;

type Outcome = Result<(), Failure>;

fn load_cfg(args: &ConfigArgs, fallback: &str) -> Result<RunConfig, Failure> {
    config::load(args.config.as_deref(), args.preset.as_deref(), fallback)
}

fn load_dataset(path: &Path, staged: &mut Staged) -> Result<SweepDataset<f64>, Failure> {
    let bytes = read_input(path)?;
    staged.input(path, &bytes);
    let rows = SweepDataset::read_rows(&bytes[..])
        .with_context(|| format!("parsing {}", path.display()))
        .io()?;
    let meta_path = sidecar_path(path);
    let meta_bytes = read_input(&meta_path)?;
    staged.input(&meta_path, &meta_bytes);
    let meta: SweepMeta<f64> = serde_json::from_slice(&meta_bytes)
        .with_context(|| format!("parsing {}", meta_path.display()))
        .io()?;
    let data = SweepDataset { rows, meta };
    data.validate().with_context(|| format!("dataset {}", path.display())).io()?;
    Ok(data)
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

/// Platform angle of the strongest reading per (plane, frequency).
fn peak_summary(d: &SweepDataset<f64>) -> Vec<String> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in &d.rows {
        let k = (format!("{:?}", r.plane), r.freq_hz);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .map(|(plane, f)| {
            let best = d
                .rows
                .iter()
                .filter(|r| format!("{:?}", r.plane) == *plane && r.freq_hz == *f)
                .max_by(|a, b| a.s21_db.total_cmp(&b.s21_db))
                .expect("key taken from rows");
            format!("  {plane} {:.3} GHz: peak {:.2} dB at {} deg", f / 1e9, best.s21_db, best.angle_deg)
        })
        .collect()
}

pub fn generate(args: &ConfigArgs, seed: Option<u64>, out: &Path, noise: Option<f64>) -> Outcome {
    let mut cfg = load_cfg(args, "stage1_chamber")?;
    if let Some(n) = noise {
        *cfg.generator.noise_sigma_db_mut() = n;
    }
    let seed = config::resolve_seed(seed, &cfg).config()?;
    cfg.seed = Some(seed);
    cfg.validate().config()?;
    let data = cfg.generate(seed).compute()?;
    let mut staged = Staged::default();
    staged.add(out, data.to_csv_string());
    staged.add(sidecar_path(out), json_bytes(&data.meta));
    staged.commit("generate", Some(seed), Some(&cfg), manifest_path(out))?;
    println!(
        "wrote {} rows to {} ({} dropped at pattern nulls)",
        data.len(),
        out.display(),
        data.meta.dropped_rows
    );
    for line in peak_summary(&data) {
        println!("{line}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn fit_aoa(
    args: &ConfigArgs,
    seed: Option<u64>,
    data_path: &Path,
    mode: Option<EstimatorMode>,
    out_model: &Path,
    front: Option<PathBuf>,
    iterations: Option<usize>,
) -> Outcome {
    let mut cfg = load_cfg(args, "stage1_chamber")?;
    let seed = config::resolve_seed(seed, &cfg).config()?;
    cfg.seed = Some(seed);
    if let Some(m) = mode {
        cfg.fit.mode = m;
    }
    if let Some(i) = iterations {
        cfg.fit.sr.iterations = i;
    }
    cfg.fit.sr.seed = seed;
    cfg.fit.sr.validate().context("fit.sr").config()?;
    let mut staged = Staged::default();
    let data = load_dataset(data_path, &mut staged)?;
    let (mut model, report) = fit_estimator_report(&data, &[], &cfg.fit)
        .with_context(|| format!("{:?} fit on {}", cfg.fit.mode, data_path.display()))
        .compute()?;
    model.diagnostics.data_hash = Some(bench::dataset_hash(&data));
    staged.add(out_model, json_bytes(&model));
    if let Some(r) = &report {
        let path = front.unwrap_or_else(|| out_model.with_extension("front.csv"));
        staged.add(path, r.front.to_csv());
    }
    staged.commit("fit-aoa", Some(seed), Some(&cfg.fit), manifest_path(out_model))?;
    println!("mode: {:?}", cfg.fit.mode);
    println!("expression: {}", model.estimator.describe());
    println!("complexity: {}", model.estimator.complexity());
    println!(
        "MAE: {:e} deg  RMSE: {:e} deg  clamped: {}",
        model.diagnostics.mae_deg, model.diagnostics.rmse_deg, model.diagnostics.clamp_count
    );
    if let Some(v) = model.diagnostics.validation_mae_deg {
        println!("validation MAE: {v:e} deg");
    }
    if let Some(note) = &model.diagnostics.directivity_note {
        println!("note: {note}");
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PredictIn {
    freq_hz: f64,
    s21_db: f64,
    #[serde(default)]
    theta_t_deg: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PredictOut {
    freq_hz: f64,
    s21_db: f64,
    theta_deg: f64,
}

pub fn predict(model_path: &Path, input: &Path, out: &Path) -> Outcome {
    let mut staged = Staged::default();
    let model_bytes = read_input(model_path)?;
    staged.input(model_path, &model_bytes);
    let model: AoaModel<f64> = serde_json::from_slice(&model_bytes)
        .with_context(|| format!("parsing {}", model_path.display()))
        .io()?;
    if model.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Failure::io(anyhow!(
            "{}: model schema {} is not supported (expected {MODEL_SCHEMA_VERSION})",
            model_path.display(),
            model.schema_version
        )));
    }
    let in_bytes = read_input(input)?;
    staged.input(input, &in_bytes);
    let mut rd = csv::Reader::from_reader(&in_bytes[..]);
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut n = 0;
    for (i, rec) in rd.deserialize::<PredictIn>().enumerate() {
        let r = rec.with_context(|| format!("{} row {}", input.display(), i + 1)).io()?;
        let theta = model
            .predict_s21(r.freq_hz, r.s21_db, deg(r.theta_t_deg.unwrap_or(0.0)))
            .with_context(|| format!("row {}", i + 1))
            .compute()?;
        wr.serialize(PredictOut {
            freq_hz: r.freq_hz,
            s21_db: r.s21_db,
            theta_deg: to_deg(theta),
        })
        .expect("writing to memory");
        n += 1;
    }
    let bytes = wr.into_inner().expect("in-memory writer");
    staged.add(out, bytes);
    staged.commit::<()>("predict", None, None, manifest_path(out))?;
    println!("wrote {n} predictions to {}", out.display());
    Ok(())
}

pub fn crlb(args: &ConfigArgs, out: &Path, noise_var: Option<f64>, snapshots: Option<usize>) -> Outcome {
    let mut cfg = load_cfg(args, "cos_sanity")?;
    let Some(req) = cfg.crlb.as_mut() else {
        return Err(Failure::config(anyhow!("crlb: block missing from the configuration")));
    };
    if let Some(v) = noise_var {
        req.noise_var = v;
    }
    if let Some(m) = snapshots {
        req.snapshots = m;
    }
    cfg.validate().config()?;
    let req = cfg.crlb.as_ref().expect("checked above");
    let (gain, scenario) = match req.gain {
        Some(g) => (g, CrlbScenario::Pattern),
        None => (
            cfg.geometry
                .rx_angular_gain(cfg.generator.first_freq_hz())
                .context("receive gain")
                .compute()?,
            match Scenario::from(&cfg.geometry) {
                Scenario::FreeSpace => CrlbScenario::FreeSpace,
                Scenario::Ris => CrlbScenario::Ris,
            },
        ),
    };
    let curve = crlb_rmse_curve(scenario, &gain, &req.grid_rad(), &req.crlb_config()).config()?;
    let mut staged = Staged::default();
    staged.add(out, curve.to_csv());
    staged.commit("crlb", None, Some(&cfg), manifest_path(out))?;
    println!("wrote {} grid points to {}", curve.grid_rad.len(), out.display());
    if let Some(b) = curve.at(deg(60.0)) {
        println!("sqrt CRLB at 60 deg: {:.6e} rad = {:.6} deg", b, to_deg(b));
    }
    Ok(())
}

pub fn mc_cdf(args: &ConfigArgs, seed: Option<u64>, out: &Path, sigma_deg: f64, draws: usize) -> Outcome {
    let mut cfg = load_cfg(args, "stage2_ris_2m")?;
    let seed = config::resolve_seed(seed, &cfg).config()?;
    cfg.seed = Some(seed);
    let LinkGeometry::Ris(link) = &cfg.geometry else {
        return Err(Failure::config(anyhow!("geometry: mc-cdf needs a ris scenario")));
    };
    if draws == 0 || !(sigma_deg >= 0.0) {
        return Err(Failure::config(anyhow!("--draws must be >= 1 and --sigma-deg >= 0")));
    }
    let cdf = monte_carlo_pl_cdf(link, sigma_deg, draws, seed).compute()?;
    let mut staged = Staged::default();
    staged.add(out, cdf.to_csv());
    staged.commit("mc-cdf", Some(seed), Some(&cfg), manifest_path(out))?;
    println!(
        "wrote {} draws to {} (median path loss {:.3} dB)",
        cdf.len(),
        out.display(),
        cdf.median()
    );
    Ok(())
}

pub fn benchmark(
    args: &ConfigArgs,
    seed: Option<u64>,
    data_path: Option<&Path>,
    out_dir: Option<PathBuf>,
    iterations: Option<usize>,
    trials: Option<usize>,
) -> Outcome {
    let mut cfg = load_cfg(args, "stage1_chamber")?;
    let seed = config::resolve_seed(seed, &cfg).config()?;
    cfg.seed = Some(seed);
    cfg.fit.sr.seed = seed;
    if let Some(i) = iterations {
        cfg.fit.sr.iterations = i;
    }
    if let Some(req) = cfg.crlb.as_mut() {
        req.monte_carlo.seed = seed;
        if let Some(t) = trials {
            req.monte_carlo.trials = t;
        }
    }
    cfg.validate().config()?;
    let Some(dir) = out_dir.or_else(|| cfg.output.dir.clone()) else {
        return Err(Failure::config(anyhow!("no output directory: pass --out-dir or set output.dir")));
    };
    let mut staged = Staged::default();
    let data = match data_path {
        Some(p) => load_dataset(p, &mut staged)?,
        None => cfg.generate(seed).compute()?,
    };
    let block = cfg.benchmark.clone().unwrap_or(config::BenchBlock {
        estimators: BenchConfig::<f64>::default().estimators,
        cdf: None,
    });
    let bench_cfg = BenchConfig {
        estimators: block.estimators,
        fit: cfg.fit.clone(),
        efficiency: cfg.crlb.clone(),
        cdf: block.cdf.map(|c| c.request(seed)),
    };
    let report = bench::benchmark(&data, &bench_cfg).compute()?;
    if let Err(e) = bench::verify_report(&report, &data) {
        return Err(Failure::compute(anyhow!("report does not reproduce from its serialised models: {e}")));
    }
    let table = report.render_table();
    if data_path.is_none() {
        staged.add(dir.join("dataset.csv"), data.to_csv_string());
        staged.add(dir.join("dataset.meta.json"), json_bytes(&data.meta));
    }
    staged.add(dir.join("report.json"), json_bytes(&report));
    staged.add(dir.join("report.txt"), table.clone());
    staged.add(dir.join("predictions.csv"), report.predictions_csv(&data).compute()?);
    if data.meta.scenario() == Scenario::FreeSpace || data_has_sweep(&data) {
        staged.add(dir.join("fig6_pattern_fit.csv"), report.pattern_fit_csv(&data).compute()?);
    }
    if let Some(c) = report.cdf_csv() {
        staged.add(dir.join("fig7_cdf.csv"), c);
    }
    if let Some(curve) = &report.crlb {
        staged.add(dir.join("fig8_crlb.csv"), curve.to_csv());
    }
    if let Some(e) = report.efficiency_csv() {
        staged.add(dir.join("fig8_efficiency.csv"), e);
    }
    let written = staged.commit("benchmark", Some(seed), Some(&cfg), dir.join("manifest.json"))?;
    print!("{table}");
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

/// More than one distinct angle, so a pattern cut is meaningful.
fn data_has_sweep(d: &SweepDataset<f64>) -> bool {
    d.rows.iter().any(|r| r.angle_deg != d.rows[0].angle_deg)
}
