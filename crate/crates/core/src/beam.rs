//! Closed-form forward models: cosine beam patterns, antenna gains, free-space and
//! RIS-aided total path loss, RIS steering angle and differential path loss.
//!
//! Sign convention: every total-path-loss function returns a *loss*. Losses
//! (connector, cable, power divider) are added and gains (antenna, beamforming)
//! are subtracted, so a larger output always means a weaker link.
//!
//! Angles are radians throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("pattern null: gain is -inf at theta = {theta_rad} rad, phi = {phi_rad} rad")]
    NullGain { theta_rad: f64, phi_rad: f64 },
    #[error("RIS incidence angle {theta_axis_rad} rad sits on the cos^2 null")]
    AxisNull { theta_axis_rad: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn invalid<T: Scalar>(name: &'static str, value: T, reason: &'static str) -> BeamError {
    BeamError::InvalidParameter {
        name,
        value: value.as_f64(),
        reason,
    }
}

/// `cos` with values below machine epsilon snapped to zero, so that the
/// closed-form nulls at exactly 90 degrees are reported as nulls.
#[inline]
pub fn cos_snapped<T: Scalar>(x: T) -> T {
    let c = x.cos();
    if c.abs() < T::epsilon() {
        T::zero()
    } else {
        c
    }
}

/// One `cos^e(x)` factor of the pattern; zero-exponent factors are always 1.
#[inline]
fn cos_power<T: Scalar>(x: T, exponent: T) -> T {
    if exponent == T::zero() {
        return T::one();
    }
    let c = cos_snapped(x);
    if c <= T::zero() {
        T::zero()
    } else {
        c.powf(exponent)
    }
}

/// Azimuth/elevation pointing offset from an antenna's boresight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pointing<T> {
    pub theta_rad: T,
    pub phi_rad: T,
}

impl<T: Scalar> Pointing<T> {
    pub fn new(theta_rad: T, phi_rad: T) -> Self {
        Self { theta_rad, phi_rad }
    }

    pub fn boresight() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Pure azimuth offset (elevation zero).
    pub fn azimuth(theta_rad: T) -> Self {
        Self::new(theta_rad, T::zero())
    }

    /// Pure elevation offset (azimuth zero).
    pub fn elevation(phi_rad: T) -> Self {
        Self::new(T::zero(), phi_rad)
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        let half_pi = T::FRAC_PI_2();
        if !(self.theta_rad >= T::zero() && self.theta_rad <= half_pi) {
            return Err(BeamError::Domain {
                what: "theta_rad",
                value: self.theta_rad.as_f64(),
                domain: "[0, pi/2]",
            });
        }
        if !(self.phi_rad >= -T::PI() && self.phi_rad <= T::PI()) {
            return Err(BeamError::Domain {
                what: "phi_rad",
                value: self.phi_rad.as_f64(),
                domain: "[-pi, pi]",
            });
        }
        Ok(())
    }
}

/// `G(theta, phi) = G_max * cos^n(theta) * cos^m(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosinePattern<T> {
    /// Azimuth directivity exponent.
    pub n: T,
    /// Elevation directivity exponent.
    pub m: T,
    /// Peak gain in dBi.
    pub g_max_dbi: T,
}

impl<T: Scalar> CosinePattern<T> {
    pub fn new(n: T, m: T, g_max_dbi: T) -> Result<Self, BeamError> {
        let p = Self { n, m, g_max_dbi };
        p.validate()?;
        Ok(p)
    }

    /// Rotationally symmetric pattern, `n == m`.
    pub fn symmetric(n: T, g_max_dbi: T) -> Result<Self, BeamError> {
        Self::new(n, n, g_max_dbi)
    }

    pub fn isotropic(g_max_dbi: T) -> Self {
        Self {
            n: T::zero(),
            m: T::zero(),
            g_max_dbi,
        }
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        if !(self.n >= T::zero() && self.n.is_finite()) {
            return Err(invalid("n", self.n, "must be finite and >= 0"));
        }
        if !(self.m >= T::zero() && self.m.is_finite()) {
            return Err(invalid("m", self.m, "must be finite and >= 0"));
        }
        if !self.g_max_dbi.is_finite() {
            return Err(invalid("g_max_dbi", self.g_max_dbi, "must be finite"));
        }
        Ok(())
    }

    /// Normalized pattern `cos^n(theta) cos^m(phi)` in `[0, 1]`.
    pub fn normalized(&self, at: Pointing<T>) -> Result<T, BeamError> {
        at.validate()?;
        Ok(cos_power(at.theta_rad, self.n) * cos_power(at.phi_rad, self.m))
    }

    /// Gain in dBi; a pattern null is an error rather than `-inf`.
    pub fn gain_dbi(&self, at: Pointing<T>) -> Result<T, BeamError> {
        let u = self.normalized(at)?;
        if u <= T::zero() {
            return Err(BeamError::NullGain {
                theta_rad: at.theta_rad.as_f64(),
                phi_rad: at.phi_rad.as_f64(),
            });
        }
        Ok(self.g_max_dbi + T::lit(10.0) * u.log10())
    }

    /// Linear gain `G_max * U`.
    pub fn gain_linear(&self, at: Pointing<T>) -> Result<T, BeamError> {
        Ok(db_to_linear(self.g_max_dbi) * self.normalized(at)?)
    }

    /// `10 (n log10 cos theta + m log10 cos phi)`: the pattern's contribution in dB.
    /// Zero exponents contribute exactly zero even on a null.
    pub fn pattern_db(&self, at: Pointing<T>) -> Result<T, BeamError> {
        at.validate()?;
        let ten = T::lit(10.0);
        let mut acc = T::zero();
        for (x, e) in [(at.theta_rad, self.n), (at.phi_rad, self.m)] {
            if e == T::zero() {
                continue;
            }
            let c = cos_snapped(x);
            if c <= T::zero() {
                return Err(BeamError::NullGain {
                    theta_rad: at.theta_rad.as_f64(),
                    phi_rad: at.phi_rad.as_f64(),
                });
            }
            acc = acc + ten * e * c.log10();
        }
        Ok(acc)
    }

    /// Full azimuth half-power beamwidth, `2 arccos(2^(-1/n))`.
    pub fn half_power_beamwidth_rad(&self) -> T {
        if self.n == T::zero() {
            return T::PI();
        }
        T::lit(2.0) * T::lit(0.5).powf(T::one() / self.n).acos()
    }
}

#[inline]
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

#[inline]
pub fn linear_to_db<T: Scalar>(lin: T) -> T {
    T::lit(10.0) * lin.log10()
}

/// Free-space path loss in dB, `20log10 R + 20log10 f + 20log10(4 pi) - 20log10 c`.
pub fn fspl_db<T: Scalar>(distance_m: T, freq_hz: T) -> Result<T, BeamError> {
    if !(distance_m > T::zero() && distance_m.is_finite()) {
        return Err(BeamError::Domain {
            what: "distance_m",
            value: distance_m.as_f64(),
            domain: "(0, inf)",
        });
    }
    if !(freq_hz > T::zero() && freq_hz.is_finite()) {
        return Err(BeamError::Domain {
            what: "freq_hz",
            value: freq_hz.as_f64(),
            domain: "(0, inf)",
        });
    }
    let twenty = T::lit(20.0);
    let four_pi = T::lit(4.0) * T::PI();
    Ok(twenty * distance_m.log10() + twenty * freq_hz.log10() + twenty * four_pi.log10()
        - twenty * T::lit(SPEED_OF_LIGHT).log10())
}

pub fn wavelength_m<T: Scalar>(freq_hz: T) -> T {
    T::lit(SPEED_OF_LIGHT) / freq_hz
}

/// Point-to-point link in free space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceLink<T> {
    pub distance_m: T,
    pub freq_hz: T,
    pub loss_connector_db: T,
    pub loss_cable_db: T,
    pub tx_pattern: CosinePattern<T>,
    pub rx_pattern: CosinePattern<T>,
}

impl<T: Scalar> FreeSpaceLink<T> {
    pub fn validate(&self) -> Result<(), BeamError> {
        if !(self.distance_m > T::zero() && self.distance_m.is_finite()) {
            return Err(invalid("distance_m", self.distance_m, "must be > 0"));
        }
        if !(self.freq_hz > T::zero() && self.freq_hz.is_finite()) {
            return Err(invalid("freq_hz", self.freq_hz, "must be > 0"));
        }
        if !(self.loss_connector_db >= T::zero()) {
            return Err(invalid("loss_connector_db", self.loss_connector_db, "must be >= 0"));
        }
        if !(self.loss_cable_db >= T::zero()) {
            return Err(invalid("loss_cable_db", self.loss_cable_db, "must be >= 0"));
        }
        self.tx_pattern.validate()?;
        self.rx_pattern.validate()
    }

    pub fn at_frequency(&self, freq_hz: T) -> Self {
        Self { freq_hz, ..*self }
    }

    /// Total path loss with the pattern terms expanded as log-cosines.
    pub fn total_pl_db(&self, tx_at: Pointing<T>, rx_at: Pointing<T>) -> Result<T, BeamError> {
        let fspl = fspl_db(self.distance_m, self.freq_hz)?;
        let tx = self.tx_pattern.pattern_db(tx_at)?;
        let rx = self.rx_pattern.pattern_db(rx_at)?;
        Ok(fspl + self.loss_connector_db + self.loss_cable_db
            - self.tx_pattern.g_max_dbi
            - self.rx_pattern.g_max_dbi
            - (tx + rx))
    }

    /// Same total path loss assembled from the two antenna gains in dBi.
    pub fn total_pl_db_from_gains(
        &self,
        tx_at: Pointing<T>,
        rx_at: Pointing<T>,
    ) -> Result<T, BeamError> {
        let fspl = fspl_db(self.distance_m, self.freq_hz)?;
        Ok(fspl + self.loss_connector_db + self.loss_cable_db
            - self.tx_pattern.gain_dbi(tx_at)?
            - self.rx_pattern.gain_dbi(rx_at)?)
    }

    /// End-to-end linear power gain as a function of the receive azimuth,
    /// with the transmitter and receive elevation at boresight.
    pub fn rx_angular_gain(&self) -> Result<AngularGain<T>, BeamError> {
        let pl0 = self.total_pl_db(Pointing::boresight(), Pointing::boresight())?;
        Ok(AngularGain {
            scale: db_to_linear(-pl0),
            exponent: self.rx_pattern.n,
        })
    }
}

/// How the RIS total loss combines the antenna gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RisLossForm {
    /// dB form of the linear RIS link budget: gains subtracted, the `(4 pi)^2`
    /// spreading constant kept.
    #[default]
    Consistent,
    /// Literal printed dB form: antenna gain terms added with a `+` sign and no
    /// `(4 pi)^2` term. Kept for side-by-side comparison only.
    AdditiveGains,
}

/// Transmitter -> RIS -> receiver link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisLink<T> {
    pub a_m: T,
    pub b_m: T,
    pub r_tx_ris_m: T,
    pub r_ris_rx_m: T,
    pub eps_ap: T,
    pub theta_axis_rad: T,
    pub l_pd_db: T,
    pub l_connector_db: T,
    pub l_cable_db: T,
    pub g_bf_db: T,
    pub tx_pattern: CosinePattern<T>,
    pub rx_pattern: CosinePattern<T>,
    pub element_spacing_m: T,
}

impl<T: Scalar> RisLink<T> {
    pub fn validate(&self) -> Result<(), BeamError> {
        for (name, v) in [
            ("a_m", self.a_m),
            ("b_m", self.b_m),
            ("r_tx_ris_m", self.r_tx_ris_m),
            ("r_ris_rx_m", self.r_ris_rx_m),
            ("element_spacing_m", self.element_spacing_m),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(invalid(name, v, "must be > 0"));
            }
        }
        if !(self.eps_ap > T::zero() && self.eps_ap <= T::one()) {
            return Err(invalid("eps_ap", self.eps_ap, "must lie in (0, 1]"));
        }
        if !(self.theta_axis_rad >= T::zero() && self.theta_axis_rad <= T::FRAC_PI_2()) {
            return Err(invalid("theta_axis_rad", self.theta_axis_rad, "must lie in [0, pi/2]"));
        }
        for (name, v) in [
            ("l_pd_db", self.l_pd_db),
            ("l_connector_db", self.l_connector_db),
            ("l_cable_db", self.l_cable_db),
            ("g_bf_db", self.g_bf_db),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, v, "must be finite"));
            }
        }
        self.tx_pattern.validate()?;
        self.rx_pattern.validate()
    }

    /// Linear RIS link coefficient
    /// `G_T G_R / (4 pi)^2 * (ab / (R1 R2))^2 * eps^2 * cos^2(theta_axis)`.
    pub fn pl_linear(&self, g_t_lin: T, g_r_lin: T) -> T {
        let four_pi = T::lit(4.0) * T::PI();
        let geom = self.a_m * self.b_m / (self.r_tx_ris_m * self.r_ris_rx_m);
        let c = cos_snapped(self.theta_axis_rad);
        g_t_lin * g_r_lin / (four_pi * four_pi)
            * geom
            * geom
            * self.eps_ap
            * self.eps_ap
            * c
            * c
    }

    pub fn total_pl_db(&self, tx_at: Pointing<T>, rx_at: Pointing<T>) -> Result<T, BeamError> {
        self.total_pl_db_with(tx_at, rx_at, RisLossForm::Consistent)
    }

    pub fn total_pl_db_with(
        &self,
        tx_at: Pointing<T>,
        rx_at: Pointing<T>,
        form: RisLossForm,
    ) -> Result<T, BeamError> {
        let cos_axis = cos_snapped(self.theta_axis_rad);
        if cos_axis <= T::zero() {
            return Err(BeamError::AxisNull {
                theta_axis_rad: self.theta_axis_rad.as_f64(),
            });
        }
        let g_t = self.tx_pattern.g_max_dbi + self.tx_pattern.pattern_db(tx_at)?;
        let g_r = self.rx_pattern.g_max_dbi + self.rx_pattern.pattern_db(rx_at)?;
        let twenty = T::lit(20.0);
        let geometry = twenty
            * (self.a_m.log10() + self.b_m.log10()
                - self.r_tx_ris_m.log10()
                - self.r_ris_rx_m.log10()
                + self.eps_ap.log10()
                + cos_axis.log10());
        let losses = self.l_pd_db + self.l_connector_db + self.l_cable_db - self.g_bf_db;
        Ok(match form {
            RisLossForm::Consistent => {
                let spreading = twenty * (T::lit(4.0) * T::PI()).log10();
                spreading - g_t - g_r - geometry + losses
            }
            RisLossForm::AdditiveGains => g_t + g_r + geometry + losses,
        })
    }

    /// End-to-end linear power gain versus receive azimuth (transmitter at boresight).
    pub fn rx_angular_gain(&self) -> Result<AngularGain<T>, BeamError> {
        let pl0 = self.total_pl_db(Pointing::boresight(), Pointing::boresight())?;
        Ok(AngularGain {
            scale: db_to_linear(-pl0),
            exponent: self.rx_pattern.n,
        })
    }

    /// Steering angle of this surface at `freq_hz`.
    pub fn steering_angle_rad(&self, freq_hz: T) -> Result<T, BeamError> {
        steering_angle_rad(wavelength_m(freq_hz), self.element_spacing_m)
    }
}

/// Either link type, for code that handles both scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case", bound = "T: Scalar")]
pub enum LinkGeometry<T> {
    FreeSpace(FreeSpaceLink<T>),
    Ris(RisLink<T>),
}

impl<T: Scalar> LinkGeometry<T> {
    pub fn validate(&self) -> Result<(), BeamError> {
        match self {
            Self::FreeSpace(l) => l.validate(),
            Self::Ris(l) => l.validate(),
        }
    }

    pub fn tx_pattern(&self) -> &CosinePattern<T> {
        match self {
            Self::FreeSpace(l) => &l.tx_pattern,
            Self::Ris(l) => &l.tx_pattern,
        }
    }

    pub fn rx_pattern(&self) -> &CosinePattern<T> {
        match self {
            Self::FreeSpace(l) => &l.rx_pattern,
            Self::Ris(l) => &l.rx_pattern,
        }
    }

    /// Total path loss at `freq_hz`. The RIS budget has no frequency term.
    pub fn total_pl_db(&self, freq_hz: T, tx_at: Pointing<T>, rx_at: Pointing<T>) -> Result<T, BeamError> {
        match self {
            Self::FreeSpace(l) => l.at_frequency(freq_hz).total_pl_db(tx_at, rx_at),
            Self::Ris(l) => l.total_pl_db(tx_at, rx_at),
        }
    }

    /// `S21` in dB with both ends at boresight.
    pub fn boresight_s21_db(&self, freq_hz: T) -> Result<T, BeamError> {
        Ok(-self.total_pl_db(freq_hz, Pointing::boresight(), Pointing::boresight())?)
    }

    /// Receive-azimuth angular gain at `freq_hz`.
    pub fn rx_angular_gain(&self, freq_hz: T) -> Result<AngularGain<T>, BeamError> {
        match self {
            Self::FreeSpace(l) => l.at_frequency(freq_hz).rx_angular_gain(),
            Self::Ris(l) => l.rx_angular_gain(),
        }
    }
}

/// Total power-divider loss of a cascade of identical layers.
pub fn power_divider_loss_db<T: Scalar>(layers: u32, per_layer_db: T) -> T {
    T::from_usize_lossy(layers as usize) * per_layer_db
}

/// `h(theta) = scale * cos^exponent(theta)`: end-to-end linear gain as a
/// function of one angle, with its analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularGain<T> {
    pub scale: T,
    pub exponent: T,
}

impl<T: Scalar> AngularGain<T> {
    pub fn value(&self, theta_rad: T) -> T {
        self.scale * cos_power(theta_rad, self.exponent)
    }

    /// `-scale * n * cos^(n-1)(theta) * sin(theta)`.
    pub fn derivative(&self, theta_rad: T) -> T {
        if self.exponent == T::zero() {
            return T::zero();
        }
        let c = cos_snapped(theta_rad);
        let lower = if self.exponent == T::one() {
            T::one()
        } else if c <= T::zero() {
            T::zero()
        } else {
            c.powf(self.exponent - T::one())
        };
        -self.scale * self.exponent * lower * theta_rad.sin()
    }
}

/// RIS beam steering angle `arcsin(lambda / (2 d))`.
pub fn steering_angle_rad<T: Scalar>(wavelength_m: T, spacing_m: T) -> Result<T, BeamError> {
    let ratio = wavelength_m / (T::lit(2.0) * spacing_m);
    if !(ratio > T::zero() && ratio <= T::one()) {
        return Err(BeamError::Domain {
            what: "lambda/(2d)",
            value: ratio.as_f64(),
            domain: "(0, 1]",
        });
    }
    Ok(ratio.asin())
}

/// Differential path loss `pl_tot - pl_baseline`.
#[inline]
pub fn delta_pl<T: Scalar>(pl_tot_db: T, pl_baseline_db: T) -> T {
    pl_tot_db - pl_baseline_db
}
