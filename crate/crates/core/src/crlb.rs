//! Cramér-Rao bounds for one receive angle.
//!
//! Observation model: `y_k = alpha e^{j phi} h(theta) x + n_k`, `k = 1..M`,
//! with a unit-norm pilot and `n_k ~ CN(0, sigma^2)`. The unknowns are
//! `(theta, phi)`. `h` is an [`AngularGain`] taken from the link budget.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::AngularGain;
use crate::estimators::DirectInversionModel;
use crate::rng::stream;
use crate::scalar::{deg, to_deg, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrlbError {
    #[error("{name} must be > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("snapshots must be >= 1")]
    NoSnapshots,
    #[error("Fisher information is singular at theta = {theta_deg} deg")]
    Singular { theta_deg: f64 },
    #[error("grid point {theta_deg} deg is outside (0, 90) deg")]
    GridOutOfRange { theta_deg: f64 },
    #[error("grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("empty grid")]
    EmptyGrid,
}

/// How `|alpha|` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum AlphaSpec<T> {
    /// Given directly.
    Magnitude(T),
    /// `|S21(peak)| / h(peak)` from an explicit calibration pair.
    Calibration { s21_peak_lin: T, h_peak_lin: T },
    /// `|S21(peak)| / h(0)` using the curve's own gain at boresight.
    PeakCalibrated { s21_peak_lin: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct CrlbConfig<T> {
    /// Per-snapshot noise power `sigma^2`.
    pub noise_var: T,
    pub snapshots: usize,
    pub alpha: AlphaSpec<T>,
}

fn positive<T: Scalar>(name: &'static str, v: T) -> Result<T, CrlbError> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(CrlbError::NonPositive {
            name,
            value: v.as_f64(),
        })
    }
}

/// `|alpha| = |S21(theta_pk)| / h(theta_pk)`.
pub fn calibrate_alpha<T: Scalar>(s21_peak_lin: T, h_peak_lin: T) -> Result<T, CrlbError> {
    Ok(positive("s21_peak_lin", s21_peak_lin)? / positive("h_peak_lin", h_peak_lin)?)
}

impl<T: Scalar> CrlbConfig<T> {
    pub fn with_alpha(noise_var: T, snapshots: usize, alpha_mag: T) -> Self {
        Self {
            noise_var,
            snapshots,
            alpha: AlphaSpec::Magnitude(alpha_mag),
        }
    }

    pub fn validate(&self) -> Result<(), CrlbError> {
        positive("noise_var", self.noise_var)?;
        if self.snapshots == 0 {
            return Err(CrlbError::NoSnapshots);
        }
        match self.alpha {
            AlphaSpec::Magnitude(a) => positive("alpha", a).map(|_| ()),
            AlphaSpec::Calibration {
                s21_peak_lin,
                h_peak_lin,
            } => calibrate_alpha(s21_peak_lin, h_peak_lin).map(|_| ()),
            AlphaSpec::PeakCalibrated { s21_peak_lin } => positive("s21_peak_lin", s21_peak_lin).map(|_| ()),
        }
    }

    /// `|alpha|` for a curve over `gain`.
    pub fn alpha_mag(&self, gain: &AngularGain<T>) -> Result<T, CrlbError> {
        match self.alpha {
            AlphaSpec::Magnitude(a) => positive("alpha", a),
            AlphaSpec::Calibration {
                s21_peak_lin,
                h_peak_lin,
            } => calibrate_alpha(s21_peak_lin, h_peak_lin),
            AlphaSpec::PeakCalibrated { s21_peak_lin } => calibrate_alpha(s21_peak_lin, gain.value(T::zero())),
        }
    }
}

/// Fisher information over `(theta, phi)`:
/// `(2 M |alpha|^2 / sigma^2) [[|h'|^2, -Im(conj(h') h)], [-Im(conj(h') h), |h|^2]]`.
pub fn fisher_info<T: Scalar>(h: Complex<T>, h_prime: Complex<T>, noise_var: T, snapshots: usize, alpha: T) -> [[T; 2]; 2] {
    let k = T::lit(2.0) * T::from_usize_lossy(snapshots) * alpha * alpha / noise_var;
    let cross = -(h_prime.conj() * h).im;
    [[k * h_prime.norm_sqr(), k * cross], [k * cross, k * h.norm_sqr()]]
}

/// Variance bound for `theta`: the (1, 1) entry of the inverse information.
pub fn crlb_var<T: Scalar>(
    theta_rad: T,
    h: Complex<T>,
    h_prime: Complex<T>,
    noise_var: T,
    snapshots: usize,
    alpha: T,
) -> Result<T, CrlbError> {
    let f = fisher_info(h, h_prime, noise_var, snapshots, alpha);
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    if !(det > T::zero()) || !(f[0][0] > T::zero()) {
        return Err(CrlbError::Singular {
            theta_deg: to_deg(theta_rad).as_f64(),
        });
    }
    Ok(f[1][1] / det)
}

/// `sigma^2 / (2 M |alpha|^2 |h'|^2)`, valid when the pattern phase is constant.
pub fn crlb_var_simplified<T: Scalar>(
    theta_rad: T,
    h_prime: T,
    noise_var: T,
    snapshots: usize,
    alpha: T,
) -> Result<T, CrlbError> {
    let d = T::lit(2.0) * T::from_usize_lossy(snapshots) * alpha * alpha * h_prime * h_prime;
    if !(d > T::zero()) {
        return Err(CrlbError::Singular {
            theta_deg: to_deg(theta_rad).as_f64(),
        });
    }
    Ok(noise_var / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrlbScenario {
    FreeSpace,
    Ris,
    /// A bare pattern, not tied to a link budget.
    Pattern,
}

impl CrlbScenario {
    pub fn tag(self) -> &'static str {
        match self {
            Self::FreeSpace => "free_space",
            Self::Ris => "ris",
            Self::Pattern => "pattern",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CrlbCurve<T> {
    pub grid_rad: Vec<T>,
    pub bound_rmse_rad: Vec<T>,
    pub config: CrlbConfig<T>,
    pub alpha_mag: T,
    pub gain: AngularGain<T>,
    pub scenario: CrlbScenario,
}

impl<T: Scalar> CrlbCurve<T> {
    /// `theta_deg,crlb_rmse_deg,scenario`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta_deg,crlb_rmse_deg,scenario\n");
        for (t, b) in self.grid_rad.iter().zip(&self.bound_rmse_rad) {
            s.push_str(&format!("{},{},{}\n", to_deg(*t), to_deg(*b), self.scenario.tag()));
        }
        s
    }

    /// Bound at the grid point nearest to `theta_rad`.
    pub fn at(&self, theta_rad: T) -> Option<T> {
        let i = self
            .grid_rad
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (*a.1 - theta_rad)
                    .abs()
                    .partial_cmp(&(*b.1 - theta_rad).abs())
                    .expect("finite grid")
            })?
            .0;
        Some(self.bound_rmse_rad[i])
    }

    /// Whether the bound strictly increases over grid points in `[lo, hi]`.
    pub fn strictly_increasing_on(&self, lo_rad: T, hi_rad: T) -> bool {
        let pts: Vec<T> = self
            .grid_rad
            .iter()
            .zip(&self.bound_rmse_rad)
            .filter(|(t, _)| **t >= lo_rad && **t <= hi_rad)
            .map(|(_, b)| *b)
            .collect();
        pts.len() >= 2 && pts.windows(2).all(|w| w[1] > w[0])
    }
}

/// `1, 1.5, ..., 89` degrees, in radians.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    (2..=178).map(|k| deg(T::lit(k as f64 * 0.5))).collect()
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<(), CrlbError> {
    if grid.is_empty() {
        return Err(CrlbError::EmptyGrid);
    }
    for &t in grid {
        if !(t > T::zero() && t < T::FRAC_PI_2()) {
            return Err(CrlbError::GridOutOfRange {
                theta_deg: to_deg(t).as_f64(),
            });
        }
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CrlbError::GridNotIncreasing);
    }
    Ok(())
}

/// `sqrt(CRLB(theta))` over `grid_rad` for the gain `h`.
pub fn crlb_rmse_curve<T: Scalar>(
    scenario: CrlbScenario,
    gain: &AngularGain<T>,
    grid_rad: &[T],
    cfg: &CrlbConfig<T>,
) -> Result<CrlbCurve<T>, CrlbError> {
    cfg.validate()?;
    check_grid(grid_rad)?;
    let alpha = cfg.alpha_mag(gain)?;
    let bound: Result<Vec<T>, CrlbError> = grid_rad
        .par_iter()
        .map(|&t| {
            let h = Complex::new(gain.value(t), T::zero());
            let hp = Complex::new(gain.derivative(t), T::zero());
            crlb_var(t, h, hp, cfg.noise_var, cfg.snapshots, alpha).map(|v| v.sqrt())
        })
        .collect();
    Ok(CrlbCurve {
        grid_rad: grid_rad.to_vec(),
        bound_rmse_rad: bound?,
        config: *cfg,
        alpha_mag: alpha,
        gain: *gain,
        scenario,
    })
}

/// Central difference `(h(t + s) - h(t - s)) / 2s`.
pub fn derivative_fd<T: Scalar>(gain: &AngularGain<T>, theta_rad: T, step: T) -> T {
    (gain.value(theta_rad + step) - gain.value(theta_rad - step)) / (T::lit(2.0) * step)
}

/// Largest `|h'_analytic - h'_fd| / max(|h'_analytic|, floor)` over the grid.
pub fn max_derivative_rel_error<T: Scalar>(gain: &AngularGain<T>, grid_rad: &[T], step: T) -> T {
    let floor = T::epsilon() * gain.scale.abs().max(T::min_positive_value());
    grid_rad
        .iter()
        .map(|&t| {
            let a = gain.derivative(t);
            let n = derivative_fd(gain, t, step);
            (a - n).abs() / a.abs().max(floor)
        })
        .fold(T::zero(), |m, e| m.max(e))
}

/// Monte-Carlo settings for the efficiency comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Points with post-integration amplitude SNR below this are outside the
    /// small-error regime and are not compared.
    pub min_snr: f64,
    /// Points whose bound exceeds this fraction of the distance to the nearer
    /// end of `[0, 90]` degrees are not compared either.
    pub max_bound_fraction: f64,
    /// Width of the Monte-Carlo tolerance band in standard errors.
    pub sigma_band: f64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: crate::rng::DEFAULT_SEED,
            min_snr: 10.0,
            max_bound_fraction: 1.0 / 3.0,
            sigma_band: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub theta_deg: f64,
    pub crlb_rmse_deg: f64,
    pub empirical_rmse_deg: f64,
    /// Standard error of the empirical RMSE.
    pub std_err_deg: f64,
    pub snr: f64,
    pub compared: bool,
    /// `empirical + band * std_err >= bound` (always true when not compared).
    pub passes: bool,
}

/// Empirical RMSE of direct inversion under the matched observation model.
///
/// The `M` snapshots are summarised by their mean,
/// `z = alpha e^{j phi} h(theta) + CN(0, sigma^2 / M)`; the estimate inverts
/// `|z| / (|alpha| h(0))` through the `cos^n` law with zero offset.
/// Returns `(rmse_rad, std_err_rad)`.
pub fn mc_direct_inversion_rmse<T: Scalar>(
    gain: &AngularGain<T>,
    theta_rad: f64,
    alpha: f64,
    noise_var: f64,
    snapshots: usize,
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let h = gain.value(T::lit(theta_rad)).as_f64();
    let h0 = gain.value(T::zero()).as_f64();
    let inv = DirectInversionModel {
        n_r: gain.exponent.as_f64(),
        offset_rad: 0.0,
    };
    let sd = (noise_var / snapshots as f64 / 2.0).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite noise");
    let mut rng = stream(seed, &[0xC21B, theta_rad.to_bits()]);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let re = alpha * h * phi.cos() + normal.sample(&mut rng);
        let im = alpha * h * phi.sin() + normal.sample(&mut rng);
        let amp = (re * re + im * im).sqrt();
        let dpl = 10.0 * (amp / (alpha * h0)).log10();
        let e = inv.predict(dpl) - theta_rad;
        sum += e * e;
        sum_sq += e * e * e * e;
    }
    let n = trials as f64;
    let mse = sum / n;
    let var_sq = (sum_sq / n - mse * mse).max(0.0);
    let se_mse = (var_sq / n).sqrt();
    let rmse = mse.sqrt();
    let se = if rmse > 0.0 { se_mse / (2.0 * rmse) } else { 0.0 };
    (rmse, se)
}

/// Empirical direct-inversion RMSE against the bound at every curve point.
pub fn efficiency_check<T: Scalar>(curve: &CrlbCurve<T>, cfg: &EfficiencyConfig) -> Vec<EfficiencyPoint> {
    let alpha = curve.alpha_mag.as_f64();
    let noise_var = curve.config.noise_var.as_f64();
    let m = curve.config.snapshots;
    curve
        .grid_rad
        .par_iter()
        .zip(curve.bound_rmse_rad.par_iter())
        .map(|(&t, &b)| {
            let t = t.as_f64();
            let b = b.as_f64();
            let (rmse, se) = mc_direct_inversion_rmse(&curve.gain, t, alpha, noise_var, m, cfg.trials, cfg.seed);
            let snr = alpha * curve.gain.value(T::lit(t)).as_f64() / (noise_var / m as f64).sqrt();
            let room = t.min(std::f64::consts::FRAC_PI_2 - t);
            let compared = snr >= cfg.min_snr && b <= cfg.max_bound_fraction * room;
            EfficiencyPoint {
                theta_deg: t.to_degrees(),
                crlb_rmse_deg: b.to_degrees(),
                empirical_rmse_deg: rmse.to_degrees(),
                std_err_deg: se.to_degrees(),
                snr,
                compared,
                passes: !compared || rmse + cfg.sigma_band * se >= b,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cos_gain() -> AngularGain<f64> {
        AngularGain {
            scale: 1.0,
            exponent: 1.0,
        }
    }

    #[test]
    fn calibrate_alpha_examples() {
        assert_eq!(calibrate_alpha(0.01, 0.01).unwrap(), 1.0);
        assert_eq!(calibrate_alpha(0.02, 0.01).unwrap(), 2.0);
        assert_relative_eq!(calibrate_alpha(1e-4, 3.7253e-9).unwrap(), 2.684e4, max_relative = 1e-3);
        assert!(calibrate_alpha(0.0, 1.0).is_err());
        assert!(calibrate_alpha(1.0, -1.0).is_err());
    }

    #[test]
    fn fisher_info_examples() {
        let one = Complex::new(1.0, 0.0);
        let f = fisher_info(one, one, 2.0, 1, 1.0);
        assert_eq!(f, [[1.0, 0.0], [0.0, 1.0]]);
        let f10 = fisher_info(Complex::new(0.3, 0.0), Complex::new(-0.7, 0.0), 1e-3, 10, 2.0);
        let f1 = fisher_info(Complex::new(0.3, 0.0), Complex::new(-0.7, 0.0), 1e-3, 1, 2.0);
        assert_eq!(f10[0][1], 0.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(f10[i][j], 10.0 * f1[i][j], max_relative = 1e-15);
            }
        }
        // complex h couples theta and phi
        let f = fisher_info(Complex::new(0.5, 0.2), Complex::new(-0.1, 0.3), 1.0, 1, 1.0);
        assert!(f[0][1] != 0.0);
        assert_eq!(f[0][1], f[1][0]);
    }

    #[test]
    fn crlb_var_examples() {
        let t = 60f64.to_radians();
        let g = cos_gain();
        let h = Complex::new(g.value(t), 0.0);
        let hp = Complex::new(g.derivative(t), 0.0);
        let v = crlb_var(t, h, hp, 1e-3, 1000, 1.0).unwrap();
        assert_relative_eq!(v, 1e-3 / (2000.0 * 0.75), max_relative = 1e-12);
        let s = crlb_var_simplified(t, hp.re, 1e-3, 1000, 1.0).unwrap();
        assert_relative_eq!(v, s, max_relative = 1e-12);
        let g28 = AngularGain {
            scale: 1.0,
            exponent: 28.0,
        };
        assert!(matches!(
            crlb_var(0.0, Complex::new(1.0, 0.0), Complex::new(g28.derivative(0.0), 0.0), 1e-3, 1000, 1.0),
            Err(CrlbError::Singular { .. })
        ));
    }

    #[test]
    fn general_form_equals_simplified_for_real_gains() {
        let g = AngularGain {
            scale: 3e-7,
            exponent: 28.0,
        };
        for &t in &default_grid::<f64>() {
            let h = Complex::new(g.value(t), 0.0);
            let hp = Complex::new(g.derivative(t), 0.0);
            let a = crlb_var(t, h, hp, 1e-3, 1000, 2e6).unwrap();
            let b = crlb_var_simplified(t, hp.re, 1e-3, 1000, 2e6).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn curve_examples() {
        let cfg = CrlbConfig::with_alpha(1e-3, 1000, 1.0);
        let curve = crlb_rmse_curve(CrlbScenario::Pattern, &cos_gain(), &default_grid(), &cfg).unwrap();
        let b = curve.at(60f64.to_radians()).unwrap();
        assert_relative_eq!(b, (1e-3f64 / 1500.0).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(b, 8.165e-4, max_relative = 1e-4);
        assert_relative_eq!(b.to_degrees(), 0.0468, max_relative = 1e-3);

        let half = CrlbConfig::with_alpha(0.5e-3, 1000, 1.0);
        let c2 = crlb_rmse_curve(CrlbScenario::Pattern, &cos_gain(), &default_grid(), &half).unwrap();
        for (x, y) in curve.bound_rmse_rad.iter().zip(&c2.bound_rmse_rad) {
            assert_relative_eq!(*y, x / 2f64.sqrt(), max_relative = 1e-12);
        }
        let g28 = AngularGain {
            scale: 1.0,
            exponent: 28.0,
        };
        let c28 = crlb_rmse_curve(CrlbScenario::FreeSpace, &g28, &default_grid(), &cfg).unwrap();
        assert!(c28.strictly_increasing_on(75f64.to_radians(), 89f64.to_radians()));
        assert!(curve.to_csv().starts_with("theta_deg,crlb_rmse_deg,scenario\n1,"));
    }

    #[test]
    fn grid_validation() {
        let cfg = CrlbConfig::with_alpha(1e-3, 1000, 1.0);
        for grid in [vec![0.0, 0.1], vec![0.2, 0.1], vec![0.1, std::f64::consts::FRAC_PI_2], vec![]] {
            assert!(crlb_rmse_curve(CrlbScenario::Pattern, &cos_gain(), &grid, &cfg).is_err());
        }
        let bad = CrlbConfig::with_alpha(0.0, 1000, 1.0);
        assert!(crlb_rmse_curve(CrlbScenario::Pattern, &cos_gain(), &default_grid(), &bad).is_err());
    }

    #[test]
    fn peak_calibration_normalises_the_gain() {
        let g = AngularGain {
            scale: 4e-6,
            exponent: 28.0,
        };
        let cfg = CrlbConfig {
            noise_var: 1e-3,
            snapshots: 1000,
            alpha: AlphaSpec::PeakCalibrated { s21_peak_lin: 1.0 },
        };
        let a = cfg.alpha_mag(&g).unwrap();
        assert_relative_eq!(a * g.value(0.3), 0.3f64.cos().powi(28), max_relative = 1e-12);
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        for n in [1.0, 4.0, 28.0] {
            let g = AngularGain {
                scale: 1.0,
                exponent: n,
            };
            assert!(max_derivative_rel_error(&g, &default_grid(), 1e-6) < 1e-6);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_near_the_bound() {
        let g = cos_gain();
        let t = 60f64.to_radians();
        let a = mc_direct_inversion_rmse(&g, t, 1.0, 1e-3, 1000, 4000, 5);
        assert_eq!(a, mc_direct_inversion_rmse(&g, t, 1.0, 1e-3, 1000, 4000, 5));
        let bound = (1e-3f64 / 1500.0).sqrt();
        assert!((a.0 - bound).abs() < 4.0 * a.1 + 0.05 * bound, "{a:?} vs {bound}");
    }
}
