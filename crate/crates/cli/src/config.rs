//! Run configuration: JSON schema, presets and seed resolution.

use std::path::{Path, PathBuf};

use aoa_core::beam::{AngularGain, CosinePattern, LinkGeometry};
use aoa_core::bench::{CdfRequest, EfficiencyRequest};
use aoa_core::crlb::AlphaSpec;
use aoa_core::estimators::{FitConfig, EstimatorMode};
use aoa_core::rng::DEFAULT_SEED;
use aoa_core::synth::presets::{self, RIS_AOA_DEG, STAGE2_SAMPLES_PER_FREQ};
use aoa_core::synth::{generate_ris_samples, generate_sweep, SweepDataset, SweepSpec};
use anyhow::{anyhow, bail, Context, Result};

use crate::output::{Classify, Failure};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "AOA_SEED";
pub const PRESETS: [&str; 4] = ["stage1_chamber", "stage2_ris_2m", "stage2_ris_3m", "cos_sanity"];

/// How the dataset is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Rotating-platform sweep.
    Sweep(SweepSpec<f64>),
    /// Fixed-angle readings (RIS links only).
    Samples(SampleSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub theta_r_deg: f64,
    pub freqs_hz: Vec<f64>,
    pub samples_per_freq: usize,
    pub noise_sigma_db: f64,
}

impl Generator {
    pub fn noise_sigma_db_mut(&mut self) -> &mut f64 {
        match self {
            Self::Sweep(s) => &mut s.noise_sigma_db,
            Self::Samples(s) => &mut s.noise_sigma_db,
        }
    }

    pub fn first_freq_hz(&self) -> f64 {
        match self {
            Self::Sweep(s) => s.freqs_hz[0],
            Self::Samples(s) => s.freqs_hz[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchBlock {
    pub estimators: Vec<EstimatorMode>,
    /// Path-loss CDF with this pointing-error spread (RIS only).
    #[serde(default)]
    pub cdf: Option<CdfBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfBlock {
    pub sigma_point_deg: f64,
    pub draws: usize,
}

impl CdfBlock {
    pub fn request(&self, seed: u64) -> CdfRequest<f64> {
        CdfRequest {
            sigma_point_deg: self.sigma_point_deg,
            draws: self.draws,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Default directory for commands that write several files.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub label: Option<String>,
    pub geometry: LinkGeometry<f64>,
    pub generator: Generator,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub crlb: Option<EfficiencyRequest<f64>>,
    #[serde(default)]
    pub benchmark: Option<BenchBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!(
                "schema_version: expected {CONFIG_SCHEMA_VERSION}, found {}",
                self.schema_version
            );
        }
        self.geometry.validate().context("geometry")?;
        match (&self.generator, &self.geometry) {
            (Generator::Sweep(s), _) => s.validate().context("generator")?,
            (Generator::Samples(s), LinkGeometry::Ris(_)) => {
                if s.samples_per_freq == 0 {
                    bail!("generator.samples_per_freq: must be >= 1");
                }
                if s.freqs_hz.is_empty() || s.freqs_hz.iter().any(|f| !(*f > 0.0)) {
                    bail!("generator.freqs_hz: must be a non-empty list of positive frequencies");
                }
                if !(s.noise_sigma_db >= 0.0) {
                    bail!("generator.noise_sigma_db: must be >= 0");
                }
                if !(0.0..90.0).contains(&s.theta_r_deg) {
                    bail!("generator.theta_r_deg: must lie in [0, 90)");
                }
            }
            (Generator::Samples(_), LinkGeometry::FreeSpace(_)) => {
                bail!("generator: fixed-angle samples need a ris geometry")
            }
        }
        self.fit.sr.validate().context("fit.sr")?;
        if let Some(c) = &self.crlb {
            c.crlb_config().validate().context("crlb")?;
            if let Some(g) = &c.gain {
                if !(g.scale > 0.0 && g.exponent > 0.0) {
                    bail!("crlb.gain: scale and exponent must be > 0");
                }
            }
        }
        if let Some(b) = &self.benchmark {
            if b.estimators.is_empty() {
                bail!("benchmark.estimators: must not be empty");
            }
            if let Some(c) = &b.cdf {
                if c.draws == 0 || !(c.sigma_point_deg >= 0.0) {
                    bail!("benchmark.cdf: draws must be >= 1 and sigma_point_deg >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<SweepDataset<f64>> {
        let mut d = match (&self.generator, &self.geometry) {
            (Generator::Sweep(s), g) => generate_sweep(g, s, seed)?,
            (Generator::Samples(s), LinkGeometry::Ris(link)) => generate_ris_samples(
                link,
                s.theta_r_deg,
                &s.freqs_hz,
                s.samples_per_freq,
                s.noise_sigma_db,
                seed,
            )?,
            (Generator::Samples(_), LinkGeometry::FreeSpace(_)) => bail!("fixed-angle samples need a ris geometry"),
        };
        d.meta.label = self.label.clone();
        Ok(d)
    }
}

fn standard_crlb(alpha: AlphaSpec<f64>, gain: Option<AngularGain<f64>>) -> EfficiencyRequest<f64> {
    EfficiencyRequest {
        noise_var: 1e-3,
        snapshots: 1000,
        alpha,
        gain,
        grid_deg: None,
        monte_carlo: Default::default(),
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let stage2 = |d: f64| RunConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        label: Some(name.to_string()),
        geometry: LinkGeometry::Ris(presets::stage2_link(d)),
        generator: Generator::Samples(SampleSpec {
            theta_r_deg: RIS_AOA_DEG,
            freqs_hz: presets::stage2_freqs(),
            samples_per_freq: STAGE2_SAMPLES_PER_FREQ,
            noise_sigma_db: 0.0,
        }),
        seed: None,
        fit: FitConfig::default(),
        crlb: Some(standard_crlb(AlphaSpec::PeakCalibrated { s21_peak_lin: 1.0 }, None)),
        benchmark: Some(BenchBlock {
            estimators: vec![EstimatorMode::UnconstrainedSr, EstimatorMode::DirectInv, EstimatorMode::PolyCos],
            cdf: Some(CdfBlock {
                sigma_point_deg: 3.0,
                draws: 3000,
            }),
        }),
        output: OutputBlock::default(),
    };
    let cfg = match name {
        "stage1_chamber" => RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            label: Some(name.to_string()),
            geometry: LinkGeometry::FreeSpace(presets::stage1_link()),
            generator: Generator::Sweep(presets::stage1_spec(0.1)),
            seed: None,
            fit: FitConfig::default(),
            crlb: Some(standard_crlb(AlphaSpec::PeakCalibrated { s21_peak_lin: 1.0 }, None)),
            benchmark: Some(BenchBlock {
                estimators: vec![EstimatorMode::DirectInv, EstimatorMode::PolyCos, EstimatorMode::UnconstrainedSr],
                cdf: None,
            }),
            output: OutputBlock::default(),
        },
        "stage2_ris_2m" => stage2(2.0),
        "stage2_ris_3m" => stage2(3.0),
        "cos_sanity" => {
            let mut link = presets::stage1_link();
            link.rx_pattern = CosinePattern::symmetric(1.0, 23.5)?;
            RunConfig {
                schema_version: CONFIG_SCHEMA_VERSION,
                label: Some(name.to_string()),
                geometry: LinkGeometry::FreeSpace(link),
                generator: Generator::Sweep(presets::stage1_spec(0.0)),
                seed: None,
                fit: FitConfig::default(),
                crlb: Some(standard_crlb(
                    AlphaSpec::Magnitude(1.0),
                    Some(AngularGain {
                        scale: 1.0,
                        exponent: 1.0,
                    }),
                )),
                benchmark: Some(BenchBlock {
                    estimators: vec![EstimatorMode::DirectInv, EstimatorMode::PolyCos],
                    cdf: None,
                }),
                output: OutputBlock::default(),
            }
        }
        other => bail!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
    };
    Ok(cfg)
}

/// `--config` file if given, else the named preset, else `fallback`.
pub fn load(config: Option<&Path>, preset_name: Option<&str>, fallback: &str) -> Result<RunConfig, Failure> {
    match (config, preset_name) {
        (Some(_), Some(_)) => Err(Failure::config(anyhow!("--config and --preset are mutually exclusive"))),
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).io()?;
            RunConfig::parse(&text).with_context(|| format!("config {}", p.display())).config()
        }
        (None, name) => preset(name.unwrap_or(fallback)).config(),
    }
}

/// `--seed`, then the config, then the environment, then the built-in default.
pub fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    if let Some(s) = flag.or(cfg.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}
