//! End-to-end benchmark: fit several estimators on one dataset, score them,
//! and optionally compare direct inversion with the Cramér-Rao bound.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::beam::{AngularGain, BeamError};
use crate::crlb::{self, AlphaSpec, CrlbConfig, CrlbCurve, CrlbError, CrlbScenario, EfficiencyConfig, EfficiencyPoint};
use crate::estimators::{aoa_samples, fit_estimator, AoaEstimator, AoaModel, EstimatorError, FitConfig, EstimatorMode};
use crate::expr::Expression;
use crate::metrics::{mae, rmse};
use crate::scalar::{deg, to_deg, Scalar};
use crate::synth::{monte_carlo_pl_cdf, CdfSeries, Scenario, SweepDataset, SynthError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no estimators requested")]
    NoEstimators,
    #[error("dataset: {0}")]
    Dataset(#[from] SynthError),
    #[error("{mode:?}: {source}")]
    Fit {
        mode: EstimatorMode,
        #[source]
        source: EstimatorError,
    },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error(transparent)]
    Beam(#[from] BeamError),
}

/// Bound and Monte-Carlo settings for the efficiency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct EfficiencyRequest<T> {
    pub noise_var: T,
    pub snapshots: usize,
    pub alpha: AlphaSpec<T>,
    /// Receive gain to bound; defaults to the dataset geometry at its first
    /// frequency.
    #[serde(default)]
    pub gain: Option<AngularGain<T>>,
    /// Degrees; defaults to 1..89 in half-degree steps.
    #[serde(default)]
    pub grid_deg: Option<Vec<T>>,
    #[serde(default)]
    pub monte_carlo: EfficiencyConfig,
}

impl<T: Scalar> EfficiencyRequest<T> {
    pub fn crlb_config(&self) -> CrlbConfig<T> {
        CrlbConfig {
            noise_var: self.noise_var,
            snapshots: self.snapshots,
            alpha: self.alpha,
        }
    }

    pub fn grid_rad(&self) -> Vec<T> {
        match &self.grid_deg {
            Some(g) => g.iter().map(|&d| deg(d)).collect(),
            None => crlb::default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct BenchConfig<T> {
    pub estimators: Vec<EstimatorMode>,
    /// Shared settings; `mode` is overridden per estimator.
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub efficiency: Option<EfficiencyRequest<T>>,
    /// Pointing-error spread for the path-loss CDF (RIS datasets only).
    #[serde(default)]
    pub cdf: Option<CdfRequest<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct CdfRequest<T> {
    pub sigma_point_deg: T,
    pub draws: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for BenchConfig<T> {
    fn default() -> Self {
        Self {
            estimators: vec![EstimatorMode::DirectInv, EstimatorMode::PolyCos, EstimatorMode::UnconstrainedSr],
            fit: FitConfig::default(),
            efficiency: None,
            cdf: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EstimatorReport<T> {
    pub mode: EstimatorMode,
    pub mae_deg: T,
    pub rmse_deg: T,
    pub expression: String,
    pub complexity: usize,
    pub clamp_count: usize,
    pub validation_mae_deg: Option<T>,
    pub model: AoaModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BenchReport<T> {
    pub schema_version: u32,
    pub label: Option<String>,
    pub scenario: Scenario,
    pub data_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub estimators: Vec<EstimatorReport<T>>,
    pub crlb: Option<CrlbCurve<T>>,
    pub efficiency: Option<Vec<EfficiencyPoint>>,
    #[serde(skip)]
    pub cdf: Option<(CdfSeries<T>, CdfSeries<T>)>,
}

/// SHA-256 over the CSV rows and the metadata JSON, hex encoded.
pub fn dataset_hash<T: Scalar>(data: &SweepDataset<T>) -> String {
    let mut h = Sha256::new();
    h.update(data.to_csv_string().as_bytes());
    h.update(serde_json::to_vec(&data.meta).expect("metadata serialises"));
    hex::encode(h.finalize())
}

/// Fits each requested estimator on `data` and scores it against the
/// ground-truth angles.
pub fn benchmark<T: Scalar>(data: &SweepDataset<T>, cfg: &BenchConfig<T>) -> Result<BenchReport<T>, BenchError> {
    if cfg.estimators.is_empty() {
        return Err(BenchError::NoEstimators);
    }
    data.validate()?;
    let hash = dataset_hash(data);
    let mut estimators = Vec::with_capacity(cfg.estimators.len());
    for &mode in &cfg.estimators {
        let fit = FitConfig {
            mode,
            ..cfg.fit.clone()
        };
        let mut model = fit_estimator(data, &[], &fit).map_err(|source| BenchError::Fit { mode, source })?;
        model.diagnostics.data_hash = Some(hash.clone());
        estimators.push(EstimatorReport {
            mode,
            mae_deg: model.diagnostics.mae_deg,
            rmse_deg: model.diagnostics.rmse_deg,
            expression: model.estimator.describe(),
            complexity: model.estimator.complexity(),
            clamp_count: model.diagnostics.clamp_count,
            validation_mae_deg: model.diagnostics.validation_mae_deg,
            model,
        });
    }

    let (crlb, efficiency) = match &cfg.efficiency {
        Some(req) => {
            let (gain, scenario) = match req.gain {
                Some(g) => (g, CrlbScenario::Pattern),
                None => (
                    data.meta.geometry.rx_angular_gain(data.rows[0].freq_hz)?,
                    match data.meta.scenario() {
                        Scenario::FreeSpace => CrlbScenario::FreeSpace,
                        Scenario::Ris => CrlbScenario::Ris,
                    },
                ),
            };
            let curve = crlb::crlb_rmse_curve(scenario, &gain, &req.grid_rad(), &req.crlb_config())?;
            let points = crlb::efficiency_check(&curve, &req.monte_carlo);
            (Some(curve), Some(points))
        }
        None => (None, None),
    };

    let cdf = match (&cfg.cdf, &data.meta.geometry) {
        (Some(req), crate::beam::LinkGeometry::Ris(link)) => {
            let measured = CdfSeries::from_samples(data.rows.iter().map(|r| -r.s21_db).collect());
            let model = monte_carlo_pl_cdf(link, req.sigma_point_deg, req.draws, req.seed)?;
            Some((measured, model))
        }
        _ => None,
    };

    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: data.meta.label.clone(),
        scenario: data.meta.scenario(),
        data_hash: hash,
        seed: data.meta.seed,
        samples: data.len(),
        estimators,
        crlb,
        efficiency,
        cdf,
    })
}

/// Re-derives every reported error from the serialised models (and, for
/// symbolic regression, from the expression text). Returns the first
/// mismatch.
pub fn verify_report<T: Scalar>(report: &BenchReport<T>, data: &SweepDataset<T>) -> Result<(), String> {
    let samples = aoa_samples(data).map_err(|e| e.to_string())?;
    let truth: Vec<T> = samples.iter().map(|s| to_deg(s.theta_rad)).collect();
    for e in &report.estimators {
        let text = serde_json::to_string(&e.model).map_err(|e| e.to_string())?;
        let model: AoaModel<T> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if let AoaEstimator::UnconstrainedSr { expr, .. } = &model.estimator {
            let parsed: Expression<T> = e.expression.parse().map_err(|e| format!("{e}"))?;
            if &parsed != expr {
                return Err(format!("{:?}: expression text does not reproduce the model", e.mode));
            }
        }
        let (pred, clamps) = model.predict_samples(&samples).map_err(|e| e.to_string())?;
        let pred: Vec<T> = pred.into_iter().map(to_deg).collect();
        let m = mae(&pred, &truth).map_err(|e| e.to_string())?;
        let r = rmse(&pred, &truth).map_err(|e| e.to_string())?;
        if m != e.mae_deg || r != e.rmse_deg || clamps != e.clamp_count {
            return Err(format!(
                "{:?}: recomputed mae {m} / rmse {r} / clamps {clamps} differ from reported {} / {} / {}",
                e.mode, e.mae_deg, e.rmse_deg, e.clamp_count
            ));
        }
    }
    Ok(())
}

fn short(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(n - 3).collect();
        t.push_str("...");
        t
    }
}

impl<T: Scalar> BenchReport<T> {
    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut s = format!(
            "dataset {} ({} rows, seed {}, sha256 {})\n",
            self.label.as_deref().unwrap_or("-"),
            self.samples,
            self.seed,
            &self.data_hash[..12]
        );
        s.push_str(&format!(
            "{:<18} {:>12} {:>12} {:>6} {:>6}  {}\n",
            "estimator", "mae_deg", "rmse_deg", "cplx", "clamp", "expression"
        ));
        for e in &self.estimators {
            s.push_str(&format!(
                "{:<18} {:>12.6} {:>12.6} {:>6} {:>6}  {}\n",
                format!("{:?}", e.mode),
                e.mae_deg.as_f64(),
                e.rmse_deg.as_f64(),
                e.complexity,
                e.clamp_count,
                short(&e.expression, 60)
            ));
        }
        if let Some(pts) = &self.efficiency {
            let compared: Vec<_> = pts.iter().filter(|p| p.compared).collect();
            let fails = compared.iter().filter(|p| !p.passes).count();
            s.push_str(&format!(
                "efficiency: {} of {} grid angles in the small-error regime, {} below the bound\n",
                compared.len(),
                pts.len(),
                fails
            ));
        }
        s
    }

    /// Measured against modelled `S21` per row (pattern-fit figure).
    /// `freq_hz,angle_deg,plane,s21_db,model_s21_db`
    pub fn pattern_fit_csv(&self, data: &SweepDataset<T>) -> Result<String, BenchError> {
        let n_r = self
            .estimators
            .iter()
            .find_map(|e| e.model.diagnostics.directivity.as_ref())
            .map(|d| T::lit(d.n_r.value as f64))
            .ok_or(EstimatorError::NoBaseline)?;
        let mut s = String::from("freq_hz,angle_deg,plane,s21_db,model_s21_db\n");
        for r in &data.rows {
            let theta = data.off_boresight_rad(r);
            let model = data.meta.geometry.boresight_s21_db(r.freq_hz)? + T::lit(10.0) * n_r * theta.cos().log10();
            s.push_str(&format!("{},{},{:?},{},{}\n", r.freq_hz, r.angle_deg, r.plane, r.s21_db, model));
        }
        Ok(s)
    }

    /// Measured and simulated path-loss CDFs.
    /// `value_db,cum_prob,series`
    pub fn cdf_csv(&self) -> Option<String> {
        let (measured, model) = self.cdf.as_ref()?;
        let mut s = String::from("value_db,cum_prob,series\n");
        for (name, c) in [("measured", measured), ("model", model)] {
            for (v, p) in c.values.iter().zip(&c.probs) {
                s.push_str(&format!("{v},{p},{name}\n"));
            }
        }
        Some(s)
    }

    /// Bound against empirical error per angle.
    /// `theta_deg,crlb_rmse_deg,empirical_rmse_deg,std_err_deg,compared`
    pub fn efficiency_csv(&self) -> Option<String> {
        let pts = self.efficiency.as_ref()?;
        let mut s = String::from("theta_deg,crlb_rmse_deg,empirical_rmse_deg,std_err_deg,compared\n");
        for p in pts {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                p.theta_deg, p.crlb_rmse_deg, p.empirical_rmse_deg, p.std_err_deg, p.compared
            ));
        }
        Some(s)
    }

    /// Per-sample predictions of every estimator.
    /// `freq_hz,true_deg,estimator,predicted_deg`
    pub fn predictions_csv(&self, data: &SweepDataset<T>) -> Result<String, BenchError> {
        let samples = aoa_samples(data)?;
        let mut s = String::from("freq_hz,true_deg,estimator,predicted_deg\n");
        for e in &self.estimators {
            let (pred, _) = e.model.predict_samples(&samples)?;
            for (x, p) in samples.iter().zip(pred) {
                s.push_str(&format!("{},{},{:?},{}\n", x.freq_hz, to_deg(x.theta_rad), e.mode, to_deg(p)));
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::presets::*;

    fn fast() -> BenchConfig<f64> {
        BenchConfig {
            estimators: vec![EstimatorMode::DirectInv, EstimatorMode::PolyCos],
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_stage1_direct_is_exact() {
        let d = stage1_sweep::<f64>(0.0, 1).unwrap();
        let r = benchmark(&d, &fast()).unwrap();
        assert!(r.estimators[0].mae_deg < 1e-6);
        verify_report(&r, &d).unwrap();
        assert!(r.render_table().contains("DirectInv"));
        let fig = r.pattern_fit_csv(&d).unwrap();
        assert_eq!(fig.lines().count(), d.len() + 1);
        assert!(r.efficiency_csv().is_none());
    }

    #[test]
    fn report_is_deterministic_and_verifiable() {
        let d = stage1_sweep::<f64>(0.5, 9).unwrap();
        let a = benchmark(&d, &fast()).unwrap();
        let b = benchmark(&d, &fast()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        verify_report(&a, &d).unwrap();
        let mut tampered = a.clone();
        tampered.estimators[1].mae_deg += 1e-9;
        assert!(verify_report(&tampered, &d).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = stage1_sweep::<f64>(0.1, 1).unwrap();
        let mut b = a.clone();
        assert_eq!(dataset_hash(&a), dataset_hash(&b));
        b.rows[3].s21_db += 0.01;
        assert_ne!(dataset_hash(&a), dataset_hash(&b));
        assert_eq!(dataset_hash(&a).len(), 64);
    }

    #[test]
    fn ris_report_with_cdf_and_efficiency() {
        let d = stage2_samples::<f64>(2.0, 0.0, 1).unwrap();
        let cfg = BenchConfig {
            estimators: vec![EstimatorMode::DirectInv],
            fit: FitConfig::default(),
            efficiency: Some(EfficiencyRequest {
                noise_var: 1e-3,
                snapshots: 1000,
                alpha: AlphaSpec::PeakCalibrated { s21_peak_lin: 1.0 },
                gain: None,
                grid_deg: Some(vec![5.0, 30.0, 60.0]),
                monte_carlo: EfficiencyConfig {
                    trials: 500,
                    ..Default::default()
                },
            }),
            cdf: Some(CdfRequest {
                sigma_point_deg: 3.0,
                draws: 200,
                seed: 3,
            }),
        };
        let r = benchmark(&d, &cfg).unwrap();
        assert!(r.estimators[0].mae_deg < 1e-3);
        assert_eq!(r.efficiency.as_ref().unwrap().len(), 3);
        assert_eq!(r.cdf_csv().unwrap().lines().count(), 1 + d.len() + 200);
        assert!(matches!(
            benchmark(&d, &BenchConfig { estimators: vec![], ..cfg }),
            Err(BenchError::NoEstimators)
        ));
    }
}
