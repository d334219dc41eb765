//! Path-loss-to-angle estimators and directivity fitting.
//!
//! The estimator input is the differential path loss in gain sign,
//! `dPL = S21_measured - S21_model(boresight)` in dB, which for a `cos^n`
//! receive pattern equals `10 n log10 cos(theta)` and is never positive on
//! noiseless data.
//!
//! Three estimators:
//! * direct inversion, `theta = arccos(10^(dPL / (10 n))) + offset`;
//! * poly-cos inversion, `theta = arccos(a dPL^2 + b dPL + c)`;
//! * unconstrained symbolic regression of `theta` on the features.
//!
//! Every `arccos` argument is clamped to `[-1, 1]`; clamps are counted.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamError, LinkGeometry};
use crate::expr::Expression;
use crate::linalg::lstsq_min_norm;
use crate::metrics::{mae, rmse};
use crate::scalar::{to_deg, Scalar};
use crate::sr::{self, FitOptions, SelectionPolicy, SrConfig, SrError};
use crate::synth::{Plane, RotatingEnd, SweepDataset};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Integer exponent search range.
pub const EXPONENT_GRID: std::ops::RangeInclusive<u32> = 1..=64;
/// Minimum distinct off-boresight angles for a directivity fit.
pub const MIN_DISTINCT_ANGLES: usize = 5;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { got: usize, required: usize },
    #[error("need at least {required} distinct angles, got {distinct}")]
    InsufficientDiversity { distinct: usize, required: usize },
    #[error("exponent is unidentifiable: no angular variation away from boresight")]
    Unidentifiable,
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error("sweep has no receive-rotation azimuth rows; angle estimation needs them")]
    NoReceiveRows,
    #[error("model has no baseline geometry")]
    NoBaseline,
    #[error("expression is invalid at input {0:?}")]
    InvalidPrediction(Vec<f64>),
    #[error("model expects {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Sr(#[from] SrError),
}

fn check_lengths<T: Scalar>(a: &[T], b: &[T]) -> Result<(), EstimatorError> {
    if a.len() != b.len() {
        return Err(EstimatorError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(EstimatorError::Empty);
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            return Err(EstimatorError::NonFinite(i));
        }
    }
    Ok(())
}

/// `arccos` of `x` clamped to `[-1, 1]`, and whether the clamp was active.
#[inline]
pub fn arccos_clamped<T: Scalar>(x: T) -> (T, bool) {
    if x > T::one() {
        (T::zero(), true)
    } else if x < -T::one() {
        (T::PI(), true)
    } else {
        (x.acos(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentSource {
    /// Least-squares fit to sweep rows.
    Fitted,
    /// Copied from the other plane of the same antenna.
    SymmetryAssumed,
    /// Taken from the geometry the data was described with.
    GeometryPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ExponentEstimate<T> {
    /// Best integer on the search grid.
    pub value: u32,
    /// Continuous least-squares value.
    pub refined: T,
    pub source: ExponentSource,
}

/// Transmit and receive exponents, azimuth (`n`) and elevation (`m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DirectivityFit<T> {
    pub n_t: ExponentEstimate<T>,
    pub m_t: ExponentEstimate<T>,
    pub n_r: ExponentEstimate<T>,
    pub m_r: ExponentEstimate<T>,
}

impl<T: Scalar> DirectivityFit<T> {
    /// `(n_t, m_t, n_r, m_r)` integers.
    pub fn integers(&self) -> (u32, u32, u32, u32) {
        (self.n_t.value, self.m_t.value, self.n_r.value, self.m_r.value)
    }

    /// Exponents taken straight from `geometry`.
    pub fn from_geometry(geometry: &LinkGeometry<T>) -> Self {
        let prior = |e: T| ExponentEstimate {
            value: e.as_f64().round().max(0.0) as u32,
            refined: e,
            source: ExponentSource::GeometryPrior,
        };
        let (tx, rx) = (geometry.tx_pattern(), geometry.rx_pattern());
        Self {
            n_t: prior(tx.n),
            m_t: prior(tx.m),
            n_r: prior(rx.n),
            m_r: prior(rx.m),
        }
    }
}

/// One exponent from `(group, log10 cos theta, s21_db)` samples, where each
/// group carries its own unknown dB offset.
///
/// The dB model is `s21 = offset_group + 10 e log10 cos theta`; offsets are
/// profiled out, the integer grid is scanned, and the continuous optimum is the
/// closed-form least-squares slope.
fn fit_exponent<T: Scalar>(samples: &[(u64, T, T, T)]) -> Result<(u32, T), EstimatorError> {
    // (group, theta, log10 cos theta, s21)
    if samples.iter().all(|s| s.1 == T::zero()) {
        return Err(EstimatorError::Unidentifiable);
    }
    // angles closer than 1 nrad count as one
    let distinct: HashSet<i64> = samples.iter().map(|s| (s.1.as_f64() * 1e9).round() as i64).collect();
    if distinct.len() < MIN_DISTINCT_ANGLES {
        return Err(EstimatorError::InsufficientDiversity {
            distinct: distinct.len(),
            required: MIN_DISTINCT_ANGLES,
        });
    }
    let mut groups: BTreeMap<u64, (T, T, usize)> = BTreeMap::new();
    for &(g, _, l, s) in samples {
        let e = groups.entry(g).or_insert((T::zero(), T::zero(), 0));
        e.0 = e.0 + l;
        e.1 = e.1 + s;
        e.2 += 1;
    }
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(g, _, l, s) in samples {
        let (sl, ss, k) = groups[&g];
        let k = T::from_usize_lossy(k);
        let (dl, ds) = (l - sl / k, s - ss / k);
        sxx = sxx + dl * dl;
        sxy = sxy + dl * ds;
        syy = syy + ds * ds;
    }
    if sxx <= T::zero() {
        return Err(EstimatorError::Unidentifiable);
    }
    let ten = T::lit(10.0);
    let sse = |e: T| syy - T::lit(2.0) * ten * e * sxy + ten * ten * e * e * sxx;
    let mut best = *EXPONENT_GRID.start();
    let mut best_sse = sse(T::lit(best as f64));
    for e in EXPONENT_GRID {
        let v = sse(T::lit(e as f64));
        if v < best_sse {
            best = e;
            best_sse = v;
        }
    }
    Ok((best, sxy / (ten * sxx)))
}

/// `(sweep and frequency group, off-boresight angle, log10 cos, S21 dB)`.
type Reading<T> = (u64, T, T, T);

/// Fits the cosine exponents from one or more sweeps.
///
/// Each sweep identifies the exponent of its rotating antenna in each plane
/// it covers: H rows give `n`, V rows give `m`. An exponent without rows is
/// copied from the other plane of the same antenna when that one was fitted,
/// otherwise taken from the first sweep's geometry. Each (sweep, frequency)
/// gets its own dB offset, so absolute gains and losses need not be known.
pub fn fit_directivity<T: Scalar>(sweeps: &[&SweepDataset<T>]) -> Result<DirectivityFit<T>, EstimatorError> {
    let first = sweeps.first().ok_or(EstimatorError::Empty)?;
    if sweeps.iter().all(|s| s.is_empty()) {
        return Err(EstimatorError::Empty);
    }
    let mut buckets: BTreeMap<(u8, u8), Vec<Reading<T>>> = BTreeMap::new();
    for (si, sweep) in sweeps.iter().enumerate() {
        let end = match sweep.meta.rotating {
            RotatingEnd::Tx => 0u8,
            RotatingEnd::Rx => 1u8,
        };
        for r in &sweep.rows {
            let plane = match r.plane {
                Plane::H => 0u8,
                Plane::V => 1u8,
            };
            let theta = sweep.off_boresight_rad(r);
            let c = theta.cos();
            if !(c > T::zero()) {
                continue;
            }
            let group = ((si as u64) << 40) ^ r.freq_hz.as_f64().to_bits().rotate_left(7);
            buckets
                .entry((end, plane))
                .or_default()
                .push((group, theta, c.log10(), r.s21_db));
        }
    }
    let mut fitted: BTreeMap<(u8, u8), ExponentEstimate<T>> = BTreeMap::new();
    for (key, samples) in &buckets {
        let (value, refined) = fit_exponent(samples)?;
        fitted.insert(
            *key,
            ExponentEstimate {
                value,
                refined,
                source: ExponentSource::Fitted,
            },
        );
    }
    let prior = DirectivityFit::from_geometry(&first.meta.geometry);
    let pick = |end: u8, plane: u8, fallback: ExponentEstimate<T>| -> ExponentEstimate<T> {
        if let Some(e) = fitted.get(&(end, plane)) {
            return *e;
        }
        if let Some(e) = fitted.get(&(end, 1 - plane)) {
            return ExponentEstimate {
                source: ExponentSource::SymmetryAssumed,
                ..*e
            };
        }
        fallback
    };
    Ok(DirectivityFit {
        n_t: pick(0, 0, prior.n_t),
        m_t: pick(0, 1, prior.m_t),
        n_r: pick(1, 0, prior.n_r),
        m_r: pick(1, 1, prior.m_r),
    })
}

/// One estimator training/test point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AoaSample<T> {
    pub freq_hz: T,
    pub delta_pl_db: T,
    pub theta_rad: T,
    pub theta_t_rad: T,
}

/// `dPL` and ground-truth angle for every receive-rotation azimuth row, with the
/// boresight baseline computed from the sweep geometry at each row's frequency.
pub fn aoa_samples<T: Scalar>(sweep: &SweepDataset<T>) -> Result<Vec<AoaSample<T>>, EstimatorError> {
    if sweep.meta.rotating != RotatingEnd::Rx {
        return Err(EstimatorError::NoReceiveRows);
    }
    let mut out = Vec::new();
    for r in sweep.rows.iter().filter(|r| r.plane == Plane::H) {
        let baseline = sweep.meta.geometry.boresight_s21_db(r.freq_hz)?;
        out.push(AoaSample {
            freq_hz: r.freq_hz,
            delta_pl_db: r.s21_db - baseline,
            theta_rad: sweep.off_boresight_rad(r),
            theta_t_rad: T::zero(),
        });
    }
    if out.is_empty() {
        return Err(EstimatorError::NoReceiveRows);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct DirectInversionModel<T> {
    pub n_r: T,
    pub offset_rad: T,
}

impl<T: Scalar> DirectInversionModel<T> {
    pub fn new(n_r: T, offset_rad: T) -> Result<Self, EstimatorError> {
        if !(n_r > T::zero() && n_r.is_finite()) {
            return Err(EstimatorError::InvalidParameter {
                name: "n_r",
                value: n_r.as_f64(),
            });
        }
        if !offset_rad.is_finite() {
            return Err(EstimatorError::InvalidParameter {
                name: "offset_rad",
                value: offset_rad.as_f64(),
            });
        }
        Ok(Self { n_r, offset_rad })
    }

    /// Angle before the offset, and whether the `arccos` argument was clamped.
    pub fn invert(&self, delta_pl_db: T) -> (T, bool) {
        arccos_clamped(T::lit(10.0).powf(delta_pl_db / (T::lit(10.0) * self.n_r)))
    }

    pub fn predict(&self, delta_pl_db: T) -> T {
        self.invert(delta_pl_db).0 + self.offset_rad
    }
}

/// Offset = mean of `theta_i - arccos(10^(dPL_i / (10 n_r)))`.
pub fn fit_direct_inversion<T: Scalar>(
    delta_pl_db: &[T],
    theta_rad: &[T],
    n_r: T,
) -> Result<DirectInversionModel<T>, EstimatorError> {
    check_lengths(delta_pl_db, theta_rad)?;
    let base = DirectInversionModel::new(n_r, T::zero())?;
    let sum: T = delta_pl_db
        .iter()
        .zip(theta_rad)
        .map(|(&d, &t)| t - base.invert(d).0)
        .sum();
    DirectInversionModel::new(n_r, sum / T::from_usize_lossy(theta_rad.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyForm {
    /// `theta = arccos(q(dPL))`.
    #[default]
    Cosine,
    /// `theta = arccos(10^(q(dPL) / (10 n_r)))`, with `q` fitted to `10 n_r log10 cos theta`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct PolyCosineModel<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    #[serde(default)]
    pub form: PolyForm,
    /// Only used by [`PolyForm::Exponential`].
    #[serde(default)]
    pub n_r: Option<T>,
}

impl<T: Scalar> PolyCosineModel<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self {
            a,
            b,
            c,
            form: PolyForm::Cosine,
            n_r: None,
        }
    }

    pub fn q(&self, delta_pl_db: T) -> T {
        (self.a * delta_pl_db + self.b) * delta_pl_db + self.c
    }

    pub fn predict_clamped(&self, delta_pl_db: T) -> (T, bool) {
        let q = self.q(delta_pl_db);
        let arg = match (self.form, self.n_r) {
            (PolyForm::Exponential, Some(n)) => T::lit(10.0).powf(q / (T::lit(10.0) * n)),
            _ => q,
        };
        let arg = if arg.is_nan() { T::one() } else { arg };
        arccos_clamped(arg)
    }

    pub fn predict(&self, delta_pl_db: T) -> T {
        self.predict_clamped(delta_pl_db).0
    }
}

/// Least squares of `cos(theta)` on `[dPL^2, dPL, 1]`.
pub fn fit_poly_cosine<T: Scalar>(delta_pl_db: &[T], theta_rad: &[T]) -> Result<PolyCosineModel<T>, EstimatorError> {
    fit_poly(delta_pl_db, theta_rad, PolyForm::Cosine, None).map(|(m, _)| m)
}

/// Poly fit in either form; also returns the design rank.
///
/// Needs at least 3 samples. A rank-deficient design (fewer than 3 distinct
/// `dPL` values) is solved in the minimum-norm sense rather than rejected.
pub fn fit_poly<T: Scalar>(
    delta_pl_db: &[T],
    theta_rad: &[T],
    form: PolyForm,
    n_r: Option<T>,
) -> Result<(PolyCosineModel<T>, usize), EstimatorError> {
    check_lengths(delta_pl_db, theta_rad)?;
    if delta_pl_db.len() < 3 {
        return Err(EstimatorError::TooFewSamples {
            got: delta_pl_db.len(),
            required: 3,
        });
    }
    let rows: Vec<Vec<T>> = delta_pl_db.iter().map(|&d| vec![d * d, d, T::one()]).collect();
    let target: Vec<T> = match form {
        PolyForm::Cosine => theta_rad.iter().map(|t| t.cos()).collect(),
        PolyForm::Exponential => {
            let n = n_r.ok_or(EstimatorError::InvalidParameter {
                name: "n_r",
                value: f64::NAN,
            })?;
            theta_rad
                .iter()
                .map(|t| T::lit(10.0) * n * t.cos().max(T::min_positive_value()).log10())
                .collect()
        }
    };
    let sol = lstsq_min_norm(&rows, &target);
    let model = PolyCosineModel {
        a: sol.coef[0],
        b: sol.coef[1],
        c: sol.coef[2],
        form,
        n_r: if form == PolyForm::Exponential { n_r } else { None },
    };
    Ok((model, sol.rank))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// `[dPL]`
    #[default]
    DeltaPl,
    /// `[dPL, theta_T]`
    DeltaPlThetaT,
}

impl FeatureSet {
    pub fn width(self) -> usize {
        match self {
            Self::DeltaPl => 1,
            Self::DeltaPlThetaT => 2,
        }
    }

    pub fn row<T: Scalar>(self, s: &AoaSample<T>) -> Vec<T> {
        match self {
            Self::DeltaPl => vec![s.delta_pl_db],
            Self::DeltaPlThetaT => vec![s.delta_pl_db, s.theta_t_rad],
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::DeltaPl => "x0 = S21 - S21_model(boresight) [dB]",
            Self::DeltaPlThetaT => "x0 = S21 - S21_model(boresight) [dB], x1 = theta_T [rad]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", bound = "T: Scalar")]
pub enum AoaEstimator<T> {
    UnconstrainedSr {
        expr: Expression<T>,
        complexity: usize,
        validation_loss: T,
    },
    DirectInv(DirectInversionModel<T>),
    PolyCos(PolyCosineModel<T>),
}

impl<T: Scalar> AoaEstimator<T> {
    /// Angle in radians from one feature row; `dPL` is always `x[0]`.
    pub fn predict(&self, x: &[T]) -> Result<(T, bool), EstimatorError> {
        let d = *x.first().ok_or(EstimatorError::FeatureCount { expected: 1, got: 0 })?;
        match self {
            Self::DirectInv(m) => {
                let (t, c) = m.invert(d);
                Ok((t + m.offset_rad, c))
            }
            Self::PolyCos(m) => Ok(m.predict_clamped(d)),
            Self::UnconstrainedSr { expr, .. } => expr
                .eval_row(x)
                .map(|v| (v, false))
                .ok_or_else(|| EstimatorError::InvalidPrediction(x.iter().map(|v| v.as_f64()).collect())),
        }
    }

    /// Closed form as text.
    pub fn describe(&self) -> String {
        match self {
            Self::UnconstrainedSr { expr, .. } => expr.to_text(),
            Self::DirectInv(m) => format!("arccos(10^(x0 / (10 * {}))) + {}", m.n_r, m.offset_rad),
            Self::PolyCos(m) => match m.form {
                PolyForm::Cosine => format!("arccos({} * x0^2 + {} * x0 + {})", m.a, m.b, m.c),
                PolyForm::Exponential => format!(
                    "arccos(10^(({} * x0^2 + {} * x0 + {}) / (10 * {})))",
                    m.a,
                    m.b,
                    m.c,
                    m.n_r.unwrap_or(T::nan())
                ),
            },
        }
    }

    pub fn complexity(&self) -> usize {
        match self {
            Self::UnconstrainedSr { complexity, .. } => *complexity,
            // arccos(10^(x0 / (10 n)) + offset: 8 nodes
            Self::DirectInv(_) => 8,
            // arccos(((a x0 + b) x0) + c): 8 nodes; the exponential form wraps 4 more
            Self::PolyCos(m) => match m.form {
                PolyForm::Cosine => 8,
                PolyForm::Exponential => 12,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    #[default]
    #[serde(alias = "direct")]
    DirectInv,
    #[serde(alias = "poly")]
    PolyCos,
    #[serde(alias = "sr")]
    UnconstrainedSr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentChoice {
    /// Grid integer.
    #[default]
    Integer,
    /// Continuous least-squares value.
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub mode: EstimatorMode,
    pub exponent: ExponentChoice,
    pub poly_form: PolyForm,
    pub features: FeatureSet,
    pub selection: SelectionPolicy,
    pub sr: SrConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: EstimatorMode::DirectInv,
            exponent: ExponentChoice::Integer,
            poly_form: PolyForm::Cosine,
            features: FeatureSet::DeltaPl,
            selection: SelectionPolicy::Score,
            sr: SrConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitDiagnostics<T> {
    pub samples: usize,
    pub clamp_count: usize,
    /// On all fit samples.
    pub mae_deg: T,
    pub rmse_deg: T,
    /// Symbolic regression only: error on the held-out rows.
    pub validation_mae_deg: Option<T>,
    pub directivity: Option<DirectivityFit<T>>,
    /// Why the directivity came from the geometry, if it did.
    pub directivity_note: Option<String>,
    pub design_rank: Option<usize>,
    pub seed: Option<u64>,
    pub data_hash: Option<String>,
}

/// A fitted estimator plus what is needed to apply it to raw `S21`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AoaModel<T> {
    pub schema_version: u32,
    pub estimator: AoaEstimator<T>,
    pub features: FeatureSet,
    pub feature_definition: String,
    pub baseline: Option<LinkGeometry<T>>,
    pub diagnostics: FitDiagnostics<T>,
}

impl<T: Scalar> AoaModel<T> {
    /// Angles (radians) for a batch of samples, and the clamp count.
    pub fn predict_samples(&self, samples: &[AoaSample<T>]) -> Result<(Vec<T>, usize), EstimatorError> {
        let mut out = Vec::with_capacity(samples.len());
        let mut clamps = 0;
        for s in samples {
            let (t, c) = self.estimator.predict(&self.features.row(s))?;
            clamps += c as usize;
            out.push(t);
        }
        Ok((out, clamps))
    }

    /// Angle from a raw reading, using the stored baseline geometry.
    pub fn predict_s21(&self, freq_hz: T, s21_db: T, theta_t_rad: T) -> Result<T, EstimatorError> {
        let g = self.baseline.as_ref().ok_or(EstimatorError::NoBaseline)?;
        let s = AoaSample {
            freq_hz,
            delta_pl_db: s21_db - g.boresight_s21_db(freq_hz)?,
            theta_rad: T::nan(),
            theta_t_rad,
        };
        Ok(self.estimator.predict(&self.features.row(&s))?.0)
    }
}

/// Symbolic regression of `theta` on feature rows; the front entry is picked
/// with `policy`. Returns the estimator and the full fit report.
pub fn fit_unconstrained<T: Scalar>(
    features: &[Vec<T>],
    theta_rad: &[T],
    cfg: &SrConfig,
    policy: SelectionPolicy,
) -> Result<(AoaEstimator<T>, sr::FitReport<T>), EstimatorError> {
    if features.is_empty() || features.iter().any(|r| r.is_empty()) {
        return Err(EstimatorError::Empty);
    }
    let report = sr::fit_with(features, theta_rad, cfg, FitOptions::default())?;
    let chosen = sr::select_model(&report.front, policy)?;
    Ok((
        AoaEstimator::UnconstrainedSr {
            expr: chosen.expr.clone(),
            complexity: chosen.complexity,
            validation_loss: chosen.loss,
        },
        report,
    ))
}

/// Full pipeline: differential path loss, directivity, then the chosen mode.
///
/// `directivity_sweeps` are extra sweeps (for example transmit rotations)
/// used only for exponent fitting. When the sweep has no angular diversity
/// (fixed-angle samples) the exponents come from its geometry.
pub fn fit_estimator<T: Scalar>(
    sweep: &SweepDataset<T>,
    directivity_sweeps: &[&SweepDataset<T>],
    cfg: &FitConfig,
) -> Result<AoaModel<T>, EstimatorError> {
    fit_estimator_report(sweep, directivity_sweeps, cfg).map(|(m, _)| m)
}

/// [`fit_estimator`], also returning the symbolic-regression run in that mode.
pub fn fit_estimator_report<T: Scalar>(
    sweep: &SweepDataset<T>,
    directivity_sweeps: &[&SweepDataset<T>],
    cfg: &FitConfig,
) -> Result<(AoaModel<T>, Option<sr::FitReport<T>>), EstimatorError> {
    if sweep.is_empty() {
        return Err(EstimatorError::Empty);
    }
    let samples = aoa_samples(sweep)?;
    let mut all: Vec<&SweepDataset<T>> = vec![sweep];
    all.extend_from_slice(directivity_sweeps);
    let (directivity, note) = match fit_directivity(&all) {
        Ok(d) => (d, None),
        Err(e @ (EstimatorError::InsufficientDiversity { .. } | EstimatorError::Unidentifiable)) => (
            DirectivityFit::from_geometry(&sweep.meta.geometry),
            Some(format!("{e}; exponents taken from the geometry")),
        ),
        Err(e) => return Err(e),
    };
    let n_r = match cfg.exponent {
        ExponentChoice::Integer => T::lit(directivity.n_r.value as f64),
        ExponentChoice::Refined => directivity.n_r.refined,
    };
    let d: Vec<T> = samples.iter().map(|s| s.delta_pl_db).collect();
    let theta: Vec<T> = samples.iter().map(|s| s.theta_rad).collect();

    let mut design_rank = None;
    let mut validation_mae_deg = None;
    let mut sr_report = None;
    let estimator = match cfg.mode {
        EstimatorMode::DirectInv => AoaEstimator::DirectInv(fit_direct_inversion(&d, &theta, n_r)?),
        EstimatorMode::PolyCos => {
            let (m, rank) = fit_poly(&d, &theta, cfg.poly_form, Some(n_r))?;
            design_rank = Some(rank);
            AoaEstimator::PolyCos(m)
        }
        EstimatorMode::UnconstrainedSr => {
            let x: Vec<Vec<T>> = samples.iter().map(|s| cfg.features.row(s)).collect();
            let (est, report) = fit_unconstrained(&x, &theta, &cfg.sr, cfg.selection)?;
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for &i in &report.validation_rows {
                if let Ok((p, _)) = est.predict(&x[i]) {
                    pred.push(to_deg(p));
                    truth.push(to_deg(theta[i]));
                }
            }
            validation_mae_deg = mae(&pred, &truth).ok();
            sr_report = Some(report);
            est
        }
    };
    let features = match cfg.mode {
        EstimatorMode::UnconstrainedSr => cfg.features,
        _ => FeatureSet::DeltaPl,
    };
    let mut model = AoaModel {
        schema_version: MODEL_SCHEMA_VERSION,
        estimator,
        features,
        feature_definition: features.describe().to_string(),
        baseline: Some(sweep.meta.geometry),
        diagnostics: FitDiagnostics {
            samples: samples.len(),
            clamp_count: 0,
            mae_deg: T::nan(),
            rmse_deg: T::nan(),
            validation_mae_deg,
            directivity: Some(directivity),
            directivity_note: note,
            design_rank,
            seed: Some(sweep.meta.seed),
            data_hash: None,
        },
    };
    let (pred, clamps) = model.predict_samples(&samples)?;
    let pred_deg: Vec<T> = pred.iter().map(|&p| to_deg(p)).collect();
    let truth_deg: Vec<T> = theta.iter().map(|&t| to_deg(t)).collect();
    model.diagnostics.clamp_count = clamps;
    model.diagnostics.mae_deg = mae(&pred_deg, &truth_deg).expect("non-empty, equal lengths");
    model.diagnostics.rmse_deg = rmse(&pred_deg, &truth_deg).expect("non-empty, equal lengths");
    Ok((model, sr_report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::LinkGeometry;
    use crate::scalar::deg;
    use crate::synth::presets::*;
    use crate::synth::{generate_sweep, RotatingEnd};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn forward(theta: f64, n: f64) -> f64 {
        10.0 * n * theta.cos().log10()
    }

    #[test]
    fn direct_inversion_examples() {
        let m = DirectInversionModel::new(28.0, 0.0).unwrap();
        assert_eq!(m.predict(0.0), 0.0);
        assert_relative_eq!(m.predict(-84.288), 60f64.to_radians(), epsilon = 1e-4);
        assert_eq!(m.invert(5.0), (0.0, true));
        let m = fit_direct_inversion(&[-84.288], &[61f64.to_radians()], 28.0).unwrap();
        assert_relative_eq!(m.offset_rad, 1f64.to_radians(), epsilon = 1e-5);
        assert!(fit_direct_inversion::<f64>(&[], &[], 28.0).is_err());
        assert!(fit_direct_inversion(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn direct_inversion_is_exact_on_noiseless_data() {
        let theta: Vec<f64> = (1..=85).map(|d| (d as f64).to_radians()).collect();
        let d: Vec<f64> = theta.iter().map(|&t| forward(t, 28.0)).collect();
        let m = fit_direct_inversion(&d, &theta, 28.0).unwrap();
        assert!(m.offset_rad.abs() < 1e-9);
        for (&x, &t) in d.iter().zip(&theta) {
            assert!((m.predict(x) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn poly_examples() {
        let m = PolyCosineModel::new(0.0, 0.0, 0.5);
        assert_relative_eq!(m.predict(-13.0), 60f64.to_radians(), epsilon = 1e-12);
        let m = PolyCosineModel::new(0.03879, 0.1165, 0.8303);
        assert_relative_eq!(m.predict(0.0), 0.8303f64.acos(), epsilon = 1e-12);
        assert_relative_eq!(m.predict(0.0), 0.59115, epsilon = 1e-5);
        let m = PolyCosineModel::new(0.0, 0.0, 1.7);
        assert_eq!(m.predict_clamped(3.0), (0.0, true));
    }

    #[test]
    fn poly_recovers_quadratic_and_constant_targets() {
        let d: Vec<f64> = (0..20).map(|i| -0.5 * i as f64).collect();
        let cos: Vec<f64> = d.iter().map(|&x| 0.001 * x * x + 0.02 * x + 0.9).collect();
        let theta: Vec<f64> = cos.iter().map(|c| c.acos()).collect();
        let m = fit_poly_cosine(&d, &theta).unwrap();
        assert!((m.a - 0.001).abs() < 1e-10 && (m.b - 0.02).abs() < 1e-10 && (m.c - 0.9).abs() < 1e-10);

        let theta = vec![0.7; 20];
        let m = fit_poly_cosine(&d, &theta).unwrap();
        assert!(m.a.abs() < 1e-12 && m.b.abs() < 1e-12);
        assert_relative_eq!(m.c, 0.7f64.cos(), epsilon = 1e-12);

        // identical inputs: minimum-norm solution still predicts the constant
        let (m, rank) = fit_poly(&[-2.0; 5], &[0.7; 5], PolyForm::Cosine, None).unwrap();
        assert_eq!(rank, 1);
        assert_relative_eq!(m.predict(-2.0), 0.7, epsilon = 1e-12);

        assert!(matches!(
            fit_poly_cosine(&[-1.0, -2.0], &[0.1, 0.2]),
            Err(EstimatorError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn poly_residuals_are_orthogonal() {
        let d: Vec<f64> = (0..40).map(|i| -2.0 * i as f64).collect();
        let theta: Vec<f64> = d.iter().map(|&x| (10f64.powf(x / 280.0)).acos() + 0.01 * (x * 0.7).sin()).collect();
        let m = fit_poly_cosine(&d, &theta).unwrap();
        for p in 0..3 {
            let g: f64 = d
                .iter()
                .zip(&theta)
                .map(|(&x, &t)| x.powi(2 - p) * (t.cos() - m.q(x)))
                .sum();
            assert!(g.abs() < 1e-9 * d.len() as f64, "column {p}: {g}");
        }
    }

    #[test]
    fn exponential_form_inverts_the_cosine_law() {
        let theta: Vec<f64> = (1..60).map(|d| (d as f64).to_radians()).collect();
        let d: Vec<f64> = theta.iter().map(|&t| forward(t, 28.0)).collect();
        let (m, _) = fit_poly(&d, &theta, PolyForm::Exponential, Some(28.0)).unwrap();
        for (&x, &t) in d.iter().zip(&theta) {
            assert!((m.predict(x) - t).abs() < 1e-8);
        }
    }

    fn rotated(end: RotatingEnd, plane: Plane) -> SweepDataset<f64> {
        let mut spec = stage1_spec(0.0);
        spec.rotating = end;
        spec.planes = vec![plane];
        generate_sweep(&LinkGeometry::FreeSpace(stage1_link()), &spec, 1).unwrap()
    }

    #[test]
    fn directivity_from_stage1_sweeps() {
        let sweeps = [
            rotated(RotatingEnd::Rx, Plane::H),
            rotated(RotatingEnd::Rx, Plane::V),
            rotated(RotatingEnd::Tx, Plane::H),
            rotated(RotatingEnd::Tx, Plane::V),
        ];
        let refs: Vec<&SweepDataset<f64>> = sweeps.iter().collect();
        let fit = fit_directivity(&refs).unwrap();
        assert_eq!(fit.integers(), (1, 1, 28, 28));
        assert!((fit.n_r.refined - 28.0).abs() < 1e-9);
        assert!([fit.n_t, fit.m_t, fit.n_r, fit.m_r]
            .iter()
            .all(|e| e.source == ExponentSource::Fitted));

        let only_rx = fit_directivity(&[&sweeps[0]]).unwrap();
        assert_eq!(only_rx.n_r.value, 28);
        assert_eq!(only_rx.m_r.source, ExponentSource::SymmetryAssumed);
        assert_eq!(only_rx.n_t.source, ExponentSource::GeometryPrior);
    }

    #[test]
    fn directivity_errors() {
        let mut s = rotated(RotatingEnd::Rx, Plane::H);
        s.rows.retain(|r| r.angle_deg == 60.0);
        assert!(matches!(fit_directivity(&[&s]), Err(EstimatorError::Unidentifiable)));
        let mut s = rotated(RotatingEnd::Rx, Plane::H);
        s.rows.retain(|r| (50.0..=70.0).contains(&r.angle_deg));
        // 50.4 ... 69.6 is five off-boresight magnitudes: 0, 2.4, 4.8, 7.2, 9.6
        assert!(fit_directivity(&[&s]).is_ok());
        s.rows.retain(|r| (55.0..=65.0).contains(&r.angle_deg));
        assert!(matches!(
            fit_directivity(&[&s]),
            Err(EstimatorError::InsufficientDiversity { .. })
        ));
    }

    #[test]
    fn directivity_on_ris_sweeps() {
        let g = LinkGeometry::Ris(stage2_link(2.0));
        let mut spec = stage1_spec(0.0);
        spec.angle_start_deg = 0.0;
        spec.angle_stop_deg = 84.0;
        spec.boresight_deg = 0.0;
        spec.freqs_hz = stage2_freqs();
        let rx = generate_sweep(&g, &spec, 1).unwrap();
        spec.rotating = RotatingEnd::Tx;
        let tx = generate_sweep(&g, &spec, 1).unwrap();
        let fit = fit_directivity(&[&rx, &tx]).unwrap();
        assert_eq!(fit.n_t.value, 4);
        assert_eq!(fit.n_r.value, 1);
    }

    #[test]
    fn direct_fit_on_noiseless_stage1() {
        let sweep = stage1_sweep::<f64>(0.0, 1).unwrap();
        let model = fit_estimator(&sweep, &[], &FitConfig::default()).unwrap();
        let AoaEstimator::DirectInv(m) = model.estimator else {
            panic!("wrong variant")
        };
        assert_eq!(m.n_r, 28.0);
        assert!(m.offset_rad.abs() < 1e-9);
        assert!(model.diagnostics.mae_deg < 1e-6);
        let samples = aoa_samples(&sweep).unwrap();
        for s in samples.iter().filter(|s| s.theta_rad >= deg(2.4) && s.theta_rad <= deg(57.6)) {
            let (p, _) = model.estimator.predict(&[s.delta_pl_db]).unwrap();
            assert!(to_deg((p - s.theta_rad).abs()) < 1e-6);
        }
        let r = sweep.rows[10];
        let p = model.predict_s21(r.freq_hz, r.s21_db, 0.0).unwrap();
        assert!((p - sweep.off_boresight_rad(&r)).abs() < 1e-9);
    }

    #[test]
    fn stage2_fit_uses_geometry_exponent() {
        let sweep = stage2_samples::<f64>(2.0, 0.0, 1).unwrap();
        let model = fit_estimator(&sweep, &[], &FitConfig::default()).unwrap();
        assert!(model.diagnostics.directivity_note.is_some());
        let AoaEstimator::DirectInv(m) = model.estimator else {
            panic!("wrong variant")
        };
        assert_eq!(m.n_r, 1.0);
        assert!((m.predict(sweep.rows[0].s21_db - sweep.meta.geometry.boresight_s21_db(28e9).unwrap()) - 0.9599).abs() < 1e-3);
        let cfg = FitConfig {
            mode: EstimatorMode::PolyCos,
            ..FitConfig::default()
        };
        let model = fit_estimator(&sweep, &[], &cfg).unwrap();
        assert!(model.diagnostics.mae_deg < 1e-9, "{:?}", model);
    }

    #[test]
    fn tx_rotation_cannot_be_used_for_aoa() {
        let s = rotated(RotatingEnd::Tx, Plane::H);
        assert!(matches!(
            fit_estimator(&s, &[], &FitConfig::default()),
            Err(EstimatorError::NoReceiveRows)
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let sweep = stage1_sweep(0.2, 3).unwrap();
        let cfg = FitConfig {
            mode: EstimatorMode::PolyCos,
            ..FitConfig::default()
        };
        let model = fit_estimator(&sweep, &[], &cfg).unwrap();
        let j = serde_json::to_string_pretty(&model).unwrap();
        assert!(j.contains("\"variant\": \"poly_cos\""));
        let back: AoaModel<f64> = serde_json::from_str(&j).unwrap();
        assert_eq!(back, model);
    }

    proptest! {
        #[test]
        fn predictors_are_total(x in -1e6f64..1e6, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -2.0f64..2.0) {
            let d = DirectInversionModel::new(28.0, 0.0).unwrap().predict(x);
            prop_assert!(d.is_finite() && (0.0..=std::f64::consts::FRAC_PI_2).contains(&d));
            let p = PolyCosineModel::new(a, b, c).predict(x);
            prop_assert!(p.is_finite() && (0.0..=std::f64::consts::PI).contains(&p));
        }

        #[test]
        fn direct_round_trip(theta_deg in 1.0f64..85.0, n in 1u32..40) {
            let t = theta_deg.to_radians();
            let m = DirectInversionModel::new(n as f64, 0.0).unwrap();
            prop_assert!((m.predict(forward(t, n as f64)) - t).abs() < 1e-9);
        }
    }
}
