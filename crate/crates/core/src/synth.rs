//! Synthetic sweeps, fixed-angle RIS samples, measurement presets and the
//! Monte-Carlo path-loss CDF.
//!
//! A sweep row is one `S21` reading at a platform angle. The rotating antenna
//! points `|angle_deg - boresight_deg|` away from the other end; the other
//! antenna stays at boresight.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{
    db_to_linear, power_divider_loss_db, BeamError, CosinePattern, FreeSpaceLink, LinkGeometry,
    Pointing, RisLink,
};
use crate::rng::stream;
use crate::scalar::{deg, Scalar};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    /// Azimuth cut (`theta` varies).
    H,
    /// Elevation cut (`phi` varies).
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotatingEnd {
    Tx,
    #[default]
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FreeSpace,
    Ris,
}

impl<T> From<&LinkGeometry<T>> for Scenario {
    fn from(g: &LinkGeometry<T>) -> Self {
        match g {
            LinkGeometry::FreeSpace(_) => Scenario::FreeSpace,
            LinkGeometry::Ris(_) => Scenario::Ris,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepRow<T> {
    pub freq_hz: T,
    pub angle_deg: T,
    pub plane: Plane,
    pub s21_db: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct SweepMeta<T> {
    pub schema_version: u32,
    pub geometry: LinkGeometry<T>,
    pub rotating: RotatingEnd,
    pub boresight_deg: T,
    pub angle_min_deg: T,
    pub angle_max_deg: T,
    pub noise_sigma_db: T,
    pub seed: u64,
    /// Rows removed because the rotating pattern has a null there.
    pub dropped_rows: usize,
    #[serde(default)]
    pub label: Option<String>,
}

impl<T: Scalar> SweepMeta<T> {
    pub fn scenario(&self) -> Scenario {
        Scenario::from(&self.geometry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepDataset<T> {
    pub rows: Vec<SweepRow<T>>,
    pub meta: SweepMeta<T>,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl<T: Scalar> SweepDataset<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Off-boresight angle of the rotating antenna for `row`, radians.
    pub fn off_boresight_rad(&self, row: &SweepRow<T>) -> T {
        deg((row.angle_deg - self.meta.boresight_deg).abs())
    }

    /// Finite values, angles inside the scan range, rows unique on
    /// `(freq, angle, plane)`.
    pub fn validate(&self) -> Result<(), SynthError> {
        self.meta.geometry.validate()?;
        let mut seen = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !(r.freq_hz.is_finite() && r.angle_deg.is_finite() && r.s21_db.is_finite()) {
                return Err(SynthError::Invalid(format!("row {i} has a non-finite value")));
            }
            if r.angle_deg < self.meta.angle_min_deg || r.angle_deg > self.meta.angle_max_deg {
                return Err(SynthError::Invalid(format!(
                    "row {i}: angle {} outside [{}, {}]",
                    r.angle_deg, self.meta.angle_min_deg, self.meta.angle_max_deg
                )));
            }
            let key = (r.freq_hz.as_f64().to_bits(), r.angle_deg.as_f64().to_bits(), r.plane);
            if !seen.insert(key) {
                return Err(SynthError::Invalid(format!(
                    "row {i} duplicates (freq {}, angle {}, plane {:?})",
                    r.freq_hz, r.angle_deg, r.plane
                )));
            }
        }
        Ok(())
    }

    /// Writes the `freq_hz,angle_deg,plane,s21_db` table.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SynthError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads rows written by [`write_csv`](Self::write_csv).
    pub fn read_rows<R: Read>(r: R) -> Result<Vec<SweepRow<T>>, SynthError> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let expected = ["freq_hz", "angle_deg", "plane", "s21_db"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(SynthError::Invalid(format!(
                "expected header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rd.deserialize() {
            rows.push(rec?);
        }
        Ok(rows)
    }
}

/// Platform-angle grid and measurement settings for [`generate_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct SweepSpec<T> {
    pub angle_start_deg: T,
    pub angle_stop_deg: T,
    pub step_deg: T,
    pub freqs_hz: Vec<T>,
    pub boresight_deg: T,
    pub noise_sigma_db: T,
    pub rotating: RotatingEnd,
    pub planes: Vec<Plane>,
}

impl<T: Scalar> SweepSpec<T> {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::Spec(m.to_string()));
        if !(self.step_deg > T::zero() && self.step_deg.is_finite()) {
            return err("step_deg must be > 0");
        }
        if !(self.angle_stop_deg >= self.angle_start_deg) {
            return err("angle_stop_deg must be >= angle_start_deg");
        }
        if !(self.boresight_deg >= self.angle_start_deg && self.boresight_deg <= self.angle_stop_deg) {
            return err("boresight_deg must lie inside the angle range");
        }
        if self.freqs_hz.is_empty() {
            return err("freqs_hz is empty");
        }
        if self.freqs_hz.iter().any(|f| !(*f > T::zero() && f.is_finite())) {
            return err("every frequency must be > 0");
        }
        if !(self.noise_sigma_db >= T::zero() && self.noise_sigma_db.is_finite()) {
            return err("noise_sigma_db must be >= 0");
        }
        if self.planes.is_empty() {
            return err("planes is empty");
        }
        Ok(())
    }

    /// `start, start + step, ...` up to `stop` (inclusive within 1e-9 step).
    pub fn angles_deg(&self) -> Vec<T> {
        let span = ((self.angle_stop_deg - self.angle_start_deg) / self.step_deg).as_f64();
        let count = (span + 1e-9).floor() as usize + 1;
        // snapped to 1e-9 deg so that 24 * 2.4 reads back as 57.6
        (0..count)
            .map(|i| {
                let a = self.angle_start_deg + T::from_usize_lossy(i) * self.step_deg;
                T::lit((a.as_f64() * 1e9).round() / 1e9)
            })
            .collect()
    }
}

fn pointing<T: Scalar>(plane: Plane, off: T) -> Pointing<T> {
    match plane {
        Plane::H => Pointing::azimuth(off),
        Plane::V => Pointing::elevation(off),
    }
}

fn noise_for<T: Scalar>(sigma: T, seed: u64, keys: &[u64], count: usize) -> Vec<T> {
    if sigma == T::zero() {
        return vec![T::zero(); count];
    }
    let normal = Normal::new(0.0, sigma.as_f64()).expect("sigma validated");
    let mut rng = stream(seed, keys);
    (0..count).map(|_| T::lit(normal.sample(&mut rng))).collect()
}

/// Rows of one (plane, frequency) cut and how many were dropped.
type Shard<T> = (Vec<SweepRow<T>>, usize);

/// `S21 = -total_pl + N(0, sigma^2)` on every (plane, frequency, angle).
///
/// Noise for each (plane, frequency) shard comes from its own stream, so the
/// output does not depend on how shards are scheduled. Rows where the
/// rotating pattern is null are dropped and counted.
pub fn generate_sweep<T: Scalar>(
    geometry: &LinkGeometry<T>,
    spec: &SweepSpec<T>,
    seed: u64,
) -> Result<SweepDataset<T>, SynthError> {
    geometry.validate()?;
    spec.validate()?;
    let angles = spec.angles_deg();
    let shards: Vec<(usize, Plane, usize, T)> = spec
        .planes
        .iter()
        .enumerate()
        .flat_map(|(pi, &plane)| {
            spec.freqs_hz
                .iter()
                .enumerate()
                .map(move |(fi, &f)| (pi, plane, fi, f))
        })
        .collect();
    let results: Vec<Result<Shard<T>, SynthError>> = shards
        .par_iter()
        .map(|&(pi, plane, fi, freq)| {
            let noise = noise_for(spec.noise_sigma_db, seed, &[pi as u64, fi as u64], angles.len());
            let mut rows = Vec::with_capacity(angles.len());
            let mut dropped = 0;
            for (&angle, &z) in angles.iter().zip(&noise) {
                let off = deg((angle - spec.boresight_deg).abs());
                let at = pointing(plane, off);
                let (tx, rx) = match spec.rotating {
                    RotatingEnd::Rx => (Pointing::boresight(), at),
                    RotatingEnd::Tx => (at, Pointing::boresight()),
                };
                match geometry.total_pl_db(freq, tx, rx) {
                    Ok(pl) => rows.push(SweepRow {
                        freq_hz: freq,
                        angle_deg: angle,
                        plane,
                        s21_db: -pl + z,
                    }),
                    Err(BeamError::NullGain { .. } | BeamError::Domain { .. }) => dropped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            Ok((rows, dropped))
        })
        .collect();
    let mut rows = Vec::new();
    let mut dropped_rows = 0;
    for r in results {
        let (mut part, d) = r?;
        rows.append(&mut part);
        dropped_rows += d;
    }
    Ok(SweepDataset {
        rows,
        meta: SweepMeta {
            schema_version: SWEEP_SCHEMA_VERSION,
            geometry: *geometry,
            rotating: spec.rotating,
            boresight_deg: spec.boresight_deg,
            angle_min_deg: spec.angle_start_deg,
            angle_max_deg: angles.last().copied().unwrap_or(spec.angle_start_deg),
            noise_sigma_db: spec.noise_sigma_db,
            seed,
            dropped_rows,
            label: None,
        },
    })
}

/// Free-space receive-rotation sweep in the azimuth plane.
#[allow(clippy::too_many_arguments)]
pub fn generate_fs_sweep<T: Scalar>(
    link: &FreeSpaceLink<T>,
    angle_start_deg: T,
    angle_stop_deg: T,
    step_deg: T,
    freqs_hz: &[T],
    boresight_deg: T,
    noise_sigma_db: T,
    seed: u64,
) -> Result<SweepDataset<T>, SynthError> {
    let spec = SweepSpec {
        angle_start_deg,
        angle_stop_deg,
        step_deg,
        freqs_hz: freqs_hz.to_vec(),
        boresight_deg,
        noise_sigma_db,
        rotating: RotatingEnd::Rx,
        planes: vec![Plane::H],
    };
    generate_sweep(&LinkGeometry::FreeSpace(*link), &spec, seed)
}

/// Spacing between repeated RIS samples at one nominal frequency.
pub const RIS_SAMPLE_SPACING_HZ: f64 = 1.0e6;

/// Fixed-geometry RIS readings with the receiver `theta_r_deg` off boresight.
///
/// Sample `j` of `n` at nominal frequency `f` is stored at
/// `f + (j - (n - 1)/2) * 1 MHz` so that rows stay unique; the link budget has
/// no frequency dependence, so this does not change the noiseless value.
pub fn generate_ris_samples<T: Scalar>(
    link: &RisLink<T>,
    theta_r_deg: T,
    freqs_hz: &[T],
    n_samples: usize,
    noise_sigma_db: T,
    seed: u64,
) -> Result<SweepDataset<T>, SynthError> {
    link.validate()?;
    if n_samples == 0 {
        return Err(SynthError::Spec("n_samples must be >= 1".into()));
    }
    if freqs_hz.is_empty() {
        return Err(SynthError::Spec("freqs_hz is empty".into()));
    }
    if !(noise_sigma_db >= T::zero() && noise_sigma_db.is_finite()) {
        return Err(SynthError::Spec("noise_sigma_db must be >= 0".into()));
    }
    let pl = link.total_pl_db(Pointing::boresight(), Pointing::azimuth(deg(theta_r_deg)))?;
    let mut rows = Vec::with_capacity(freqs_hz.len() * n_samples);
    let centre = T::lit((n_samples as f64 - 1.0) / 2.0);
    for (fi, &f) in freqs_hz.iter().enumerate() {
        let noise = noise_for(noise_sigma_db, seed, &[0, fi as u64], n_samples);
        for (j, z) in noise.into_iter().enumerate() {
            rows.push(SweepRow {
                freq_hz: f + (T::from_usize_lossy(j) - centre) * T::lit(RIS_SAMPLE_SPACING_HZ),
                angle_deg: theta_r_deg,
                plane: Plane::H,
                s21_db: -pl + z,
            });
        }
    }
    Ok(SweepDataset {
        rows,
        meta: SweepMeta {
            schema_version: SWEEP_SCHEMA_VERSION,
            geometry: LinkGeometry::Ris(*link),
            rotating: RotatingEnd::Rx,
            boresight_deg: T::zero(),
            angle_min_deg: theta_r_deg,
            angle_max_deg: theta_r_deg,
            noise_sigma_db,
            seed,
            dropped_rows: 0,
            label: None,
        },
    })
}

/// Constants of the two measurement set-ups.
pub mod presets {
    use super::*;

    pub const STAGE1_FREQS_GHZ: [f64; 6] = [26.0, 27.0, 28.0, 29.0, 30.0, 31.0];
    pub const STAGE2_FREQS_GHZ: [f64; 3] = [28.0, 29.0, 30.0];
    /// RIS side length (a = b), metres.
    pub const RIS_SIDE_M: f64 = 0.20576;
    pub const RIS_ELEMENTS_PER_SIDE: f64 = 32.0;
    pub const RIS_AXIS_DEG: f64 = 35.0;
    pub const RIS_AOA_DEG: f64 = 55.0;
    /// Power divider: 4 layers at 7.5 dB each.
    pub const POWER_DIVIDER_LAYERS: u32 = 4;
    pub const POWER_DIVIDER_LAYER_DB: f64 = 7.5;
    /// Beamforming gain of the 48-element feed, dB.
    pub const BEAMFORMING_ELEMENTS: f64 = 48.0;
    pub const STAGE2_SAMPLES_PER_FREQ: usize = 50;

    /// Chamber link: open-ended waveguide probe (n = m = 1, 4.5 dBi) to a
    /// horn (n = m = 28, 23.5 dBi) at 2 m, 1 dB connector and 1 dB cable loss.
    pub fn stage1_link<T: Scalar>() -> FreeSpaceLink<T> {
        FreeSpaceLink {
            distance_m: T::lit(2.0),
            freq_hz: T::lit(28e9),
            loss_connector_db: T::one(),
            loss_cable_db: T::one(),
            tx_pattern: CosinePattern {
                n: T::one(),
                m: T::one(),
                g_max_dbi: T::lit(4.5),
            },
            rx_pattern: CosinePattern {
                n: T::lit(28.0),
                m: T::lit(28.0),
                g_max_dbi: T::lit(23.5),
            },
        }
    }

    /// 0 to 120 degrees in 2.4 degree steps, boresight at 60, 26 to 31 GHz.
    pub fn stage1_spec<T: Scalar>(noise_sigma_db: T) -> SweepSpec<T> {
        SweepSpec {
            angle_start_deg: T::zero(),
            angle_stop_deg: T::lit(120.0),
            step_deg: T::lit(2.4),
            freqs_hz: STAGE1_FREQS_GHZ.iter().map(|g| T::lit(g * 1e9)).collect(),
            boresight_deg: T::lit(60.0),
            noise_sigma_db,
            rotating: RotatingEnd::Rx,
            planes: vec![Plane::H],
        }
    }

    /// RIS link with both hops `distance_m` long.
    pub fn stage2_link<T: Scalar>(distance_m: T) -> RisLink<T> {
        RisLink {
            a_m: T::lit(RIS_SIDE_M),
            b_m: T::lit(RIS_SIDE_M),
            r_tx_ris_m: distance_m,
            r_ris_rx_m: distance_m,
            eps_ap: T::one(),
            theta_axis_rad: deg(T::lit(RIS_AXIS_DEG)),
            l_pd_db: power_divider_loss_db(POWER_DIVIDER_LAYERS, T::lit(POWER_DIVIDER_LAYER_DB)),
            l_connector_db: T::one(),
            l_cable_db: T::one(),
            g_bf_db: T::lit(10.0 * BEAMFORMING_ELEMENTS.log10()),
            tx_pattern: CosinePattern {
                n: T::lit(4.0),
                m: T::lit(4.0),
                g_max_dbi: T::lit(5.0),
            },
            rx_pattern: CosinePattern {
                n: T::one(),
                m: T::one(),
                g_max_dbi: T::lit(23.5),
            },
            element_spacing_m: T::lit(RIS_SIDE_M / RIS_ELEMENTS_PER_SIDE),
        }
    }

    pub fn stage2_freqs<T: Scalar>() -> Vec<T> {
        STAGE2_FREQS_GHZ.iter().map(|g| T::lit(g * 1e9)).collect()
    }

    pub fn stage1_sweep<T: Scalar>(noise_sigma_db: T, seed: u64) -> Result<SweepDataset<T>, SynthError> {
        let mut d = generate_sweep(
            &LinkGeometry::FreeSpace(stage1_link()),
            &stage1_spec(noise_sigma_db),
            seed,
        )?;
        d.meta.label = Some("stage1_chamber".into());
        Ok(d)
    }

    pub fn stage2_samples<T: Scalar>(
        distance_m: T,
        noise_sigma_db: T,
        seed: u64,
    ) -> Result<SweepDataset<T>, SynthError> {
        let mut d = generate_ris_samples(
            &stage2_link(distance_m),
            T::lit(RIS_AOA_DEG),
            &stage2_freqs(),
            STAGE2_SAMPLES_PER_FREQ,
            noise_sigma_db,
            seed,
        )?;
        d.meta.label = Some(format!("stage2_ris_{}m", distance_m));
        Ok(d)
    }
}

/// Empirical CDF: ascending values with probabilities `1/n, 2/n, ..., 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CdfSeries<T> {
    pub values: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> CdfSeries<T> {
    pub fn from_samples(mut values: Vec<T>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let n = T::from_usize_lossy(values.len());
        let probs = (1..=values.len()).map(|i| T::from_usize_lossy(i) / n).collect();
        Self { values, probs }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted values, non-decreasing probabilities from `1/n` to 1.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.values.len();
        if n == 0 || self.probs.len() != n {
            return Err("empty or mismatched series".into());
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return Err("values not sorted".into());
        }
        if self.probs.windows(2).any(|w| w[1] < w[0]) {
            return Err("probabilities decrease".into());
        }
        let first = T::one() / T::from_usize_lossy(n);
        if (self.probs[0] - first).abs() > T::epsilon() * T::lit(4.0) || self.probs[n - 1] != T::one() {
            return Err("probabilities must run from 1/n to 1".into());
        }
        Ok(())
    }

    /// Empirical CDF at `x`.
    pub fn eval(&self, x: T) -> T {
        let k = self.values.partition_point(|&v| v <= x);
        T::from_usize_lossy(k) / T::from_usize_lossy(self.values.len())
    }

    pub fn median(&self) -> T {
        let n = self.values.len();
        if n % 2 == 1 {
            self.values[n / 2]
        } else {
            (self.values[n / 2 - 1] + self.values[n / 2]) / T::lit(2.0)
        }
    }

    /// `value_db,cum_prob` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value_db,cum_prob\n");
        for (v, p) in self.values.iter().zip(&self.probs) {
            s.push_str(&format!("{v},{p}\n"));
        }
        s
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance<T: Scalar>(a: &CdfSeries<T>, b: &CdfSeries<T>) -> T {
    let (mut i, mut j) = (0, 0);
    let (na, nb) = (a.values.len(), b.values.len());
    let (fa, fb) = (T::from_usize_lossy(na), T::from_usize_lossy(nb));
    let mut d = T::zero();
    while i < na && j < nb {
        let x = a.values[i].min(b.values[j]);
        while i < na && a.values[i] <= x {
            i += 1;
        }
        while j < nb && b.values[j] <= x {
            j += 1;
        }
        let diff = (T::from_usize_lossy(i) / fa - T::from_usize_lossy(j) / fb).abs();
        d = d.max(diff);
    }
    d
}

/// Draw from `N(0, sigma^2)` restricted to `[0, upper)` by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64, upper: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    loop {
        let x = normal.sample(rng);
        if (0.0..upper).contains(&x) {
            return x;
        }
    }
}

const CDF_SHARD: usize = 1024;

/// Path-loss CDF with transmit and receive pointing errors drawn from
/// `N(0, sigma^2)` truncated to `[0, 90)` degrees.
pub fn monte_carlo_pl_cdf<T: Scalar>(
    link: &RisLink<T>,
    sigma_point_deg: T,
    n: usize,
    seed: u64,
) -> Result<CdfSeries<T>, SynthError> {
    link.validate()?;
    if !(sigma_point_deg >= T::zero() && sigma_point_deg.is_finite()) {
        return Err(SynthError::Spec("sigma_point_deg must be >= 0".into()));
    }
    if n == 0 {
        return Err(SynthError::Spec("n must be >= 1".into()));
    }
    let sigma = sigma_point_deg.as_f64();
    let shards = n.div_ceil(CDF_SHARD);
    let parts: Vec<Result<Vec<T>, BeamError>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, &[0xCDF, s as u64]);
            let count = CDF_SHARD.min(n - s * CDF_SHARD);
            (0..count)
                .map(|_| {
                    let t = truncated_normal(&mut rng, sigma, 90.0);
                    let r = truncated_normal(&mut rng, sigma, 90.0);
                    link.total_pl_db(
                        Pointing::azimuth(deg(T::lit(t))),
                        Pointing::azimuth(deg(T::lit(r))),
                    )
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    for p in parts {
        values.extend(p?);
    }
    Ok(CdfSeries::from_samples(values))
}

/// Linear power for a dB `S21`.
pub fn s21_linear<T: Scalar>(s21_db: T) -> T {
    db_to_linear(s21_db)
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stage1_defaults_give_306_rows() {
        let d = stage1_sweep(0.1, 1).unwrap();
        assert_eq!(d.len(), 306);
        assert_eq!(d.meta.dropped_rows, 0);
        d.validate().unwrap();
    }

    #[test]
    fn noiseless_peak_sits_at_boresight() {
        let d = stage1_sweep(0.0, 1).unwrap();
        for f in STAGE1_FREQS_GHZ {
            let best = d
                .rows
                .iter()
                .filter(|r| r.freq_hz == f * 1e9)
                .max_by(|a, b| a.s21_db.partial_cmp(&b.s21_db).unwrap())
                .unwrap();
            assert_relative_eq!(best.angle_deg, 60.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn noiseless_sweeps_ignore_seed_and_noisy_ones_do_not() {
        assert_eq!(stage1_sweep(0.0, 1).unwrap().rows, stage1_sweep(0.0, 2).unwrap().rows);
        assert_eq!(stage1_sweep(0.5, 7).unwrap(), stage1_sweep(0.5, 7).unwrap());
        assert_ne!(stage1_sweep(0.5, 7).unwrap().rows, stage1_sweep(0.5, 8).unwrap().rows);
    }

    #[test]
    fn null_rows_are_dropped() {
        let spec = SweepSpec {
            angle_start_deg: 0.0,
            angle_stop_deg: 180.0,
            step_deg: 10.0,
            freqs_hz: vec![28e9],
            boresight_deg: 60.0,
            noise_sigma_db: 0.0,
            rotating: RotatingEnd::Rx,
            planes: vec![Plane::H],
        };
        let d = generate_sweep(&LinkGeometry::FreeSpace(stage1_link()), &spec, 0).unwrap();
        // 150..=180 are 90 or more degrees off boresight
        assert_eq!(d.meta.dropped_rows, 4);
        assert_eq!(d.len(), 15);
    }

    #[test]
    fn ris_samples_examples() {
        let d2 = stage2_samples(2.0, 0.0, 1).unwrap();
        let d3 = stage2_samples(3.0, 0.0, 1).unwrap();
        d2.validate().unwrap();
        assert_eq!(d2.len(), 150);
        let shift = d2.rows[0].s21_db - d3.rows[0].s21_db;
        assert_relative_eq!(shift, 40.0 * 1.5f64.log10(), epsilon = 1e-9);
        assert_relative_eq!(shift, 7.04, epsilon = 5e-3);
        assert!(d2.rows.iter().all(|r| r.s21_db == d2.rows[0].s21_db));
        for r in &d2.rows {
            assert_relative_eq!(d2.off_boresight_rad(r), 0.9599, epsilon = 1e-4);
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = stage1_sweep(0.3, 5).unwrap();
        let text = d.to_csv_string();
        assert!(text.starts_with("freq_hz,angle_deg,plane,s21_db\n"));
        let rows = SweepDataset::<f64>::read_rows(text.as_bytes()).unwrap();
        assert_eq!(rows, d.rows);
        let meta = serde_json::to_string(&d.meta).unwrap();
        let back: SweepMeta<f64> = serde_json::from_str(&meta).unwrap();
        assert_eq!(back, d.meta);
        assert!(SweepDataset::<f64>::read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut d = stage1_sweep(0.0, 1).unwrap();
        d.rows.push(d.rows[3]);
        assert!(d.validate().is_err());
    }

    #[test]
    fn cdf_degenerate_sigma_is_a_step() {
        let link = stage2_link::<f64>(2.0);
        let c = monte_carlo_pl_cdf(&link, 0.0, 100, 3).unwrap();
        c.validate().unwrap();
        let bs = link.total_pl_db(Pointing::boresight(), Pointing::boresight()).unwrap();
        assert!(c.values.iter().all(|&v| v == bs));
    }

    #[test]
    fn cdf_statistics() {
        let link = stage2_link::<f64>(2.0);
        let c = monte_carlo_pl_cdf(&link, 3.0, 3000, 11).unwrap();
        c.validate().unwrap();
        assert_eq!(c.len(), 3000);
        let bs = link.total_pl_db(Pointing::boresight(), Pointing::boresight()).unwrap();
        assert!((c.median() - bs).abs() < 0.3);
        let reference = monte_carlo_pl_cdf(&link, 3.0, 100_000, 12).unwrap();
        assert!(ks_distance(&c, &reference) < 0.05);
        assert_eq!(c, monte_carlo_pl_cdf(&link, 3.0, 3000, 11).unwrap());
    }

    #[test]
    fn ks_examples() {
        let a = CdfSeries::from_samples(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b = CdfSeries::from_samples(vec![5.0, 6.0]);
        assert_eq!(ks_distance(&a, &b), 1.0);
        assert_eq!(a.eval(2.5), 0.5);
    }

    #[test]
    fn truncation_range() {
        let mut rng = stream(1, &[]);
        for _ in 0..1000 {
            let x = truncated_normal(&mut rng, 60.0, 90.0);
            assert!((0.0..90.0).contains(&x));
        }
    }
}
