//! Clustered multipath channel synthesis and pilot observations.
//!
//! The receive array is a uniform planar array (UPA). A channel realization
//! is a sum of plane-wave paths, each a complex gain times the array
//! steering vector for its (azimuth, elevation). Path gains are scaled so
//! that `E[|h_i|^2] = 1` per receive antenna. A pilot slot observes
//! `y = h s + n` with `n ~ CN(0, sigma^2 I)`, and under that normalization the
//! per-antenna SNR is `1 / sigma^2`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::math::{self, PI, SPEED_OF_LIGHT, TAU};
use crate::rng::{complex_gaussian, uniform};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid path count range [{min}, {max}]")]
    InvalidPathRange { min: u32, max: u32 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("resource constraint: requested {requested} samples, {available} available")]
    ResourceConstraint { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing: f64,
    pub height_m: f64,
}

impl ArrayGeometry {
    /// 8x8 elements at half-wavelength spacing.
    pub fn upa_8x8(height_m: f64) -> Self {
        Self {
            rows: 8,
            cols: 8,
            spacing: 0.5,
            height_m,
        }
    }

    /// Receive antenna count `N_r`.
    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(ChannelError::Config(
                "array needs at least one row and column".into(),
            ));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(ChannelError::Config("element spacing must be positive".into()));
        }
        if !(self.height_m >= 0.0) {
            return Err(ChannelError::Config("array height must be non-negative".into()));
        }
        Ok(())
    }
}

/// Array response for direction cosines: `u_vert = sin(el)` and
/// `u_horiz = sin(az) cos(el)`. Element `(p, q)` sits at index
/// `p * cols + q` and has phase `2 pi spacing (p u_vert + q u_horiz)`.
pub fn steering_vector_cosines(geometry: &ArrayGeometry, u_vert: f64, u_horiz: f64) -> Vec<C64> {
    let vert: Vec<C64> = (0..geometry.rows)
        .map(|p| math::cis(TAU * geometry.spacing * p as f64 * u_vert))
        .collect();
    let horiz: Vec<C64> = (0..geometry.cols)
        .map(|q| math::cis(TAU * geometry.spacing * q as f64 * u_horiz))
        .collect();
    let mut out = Vec::with_capacity(geometry.num_elements());
    for v in &vert {
        for h in &horiz {
            out.push(v * h);
        }
    }
    out
}

/// UPA response toward `(azimuth, elevation)` in radians. Every entry has
/// unit modulus.
pub fn steering_vector(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> Vec<C64> {
    steering_vector_cosines(
        geometry,
        math::sin(elevation),
        math::sin(azimuth) * math::cos(elevation),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    DenseLowNoise,
    OpenArea,
    DenseHighNoise,
    IndoorOffice,
    Custom,
}

impl ScenarioId {
    pub const PRESETS: [ScenarioId; 4] = [
        ScenarioId::DenseLowNoise,
        ScenarioId::OpenArea,
        ScenarioId::DenseHighNoise,
        ScenarioId::IndoorOffice,
    ];

    /// Short label used in file names and tables (`1`..`4` for presets).
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioId::DenseLowNoise => "1",
            ScenarioId::OpenArea => "2",
            ScenarioId::DenseHighNoise => "3",
            ScenarioId::IndoorOffice => "4",
            ScenarioId::Custom => "custom",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::DenseLowNoise => "DenseLowNoise",
            ScenarioId::OpenArea => "OpenArea",
            ScenarioId::DenseHighNoise => "DenseHighNoise",
            ScenarioId::IndoorOffice => "IndoorOffice",
            ScenarioId::Custom => "Custom",
        }
    }
}

/// Inclusive `[min, max]` path count, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct PathCountRange {
    pub min: u32,
    pub max: u32,
}

impl From<[u32; 2]> for PathCountRange {
    fn from([min, max]: [u32; 2]) -> Self {
        Self { min, max }
    }
}

impl From<PathCountRange> for [u32; 2] {
    fn from(r: PathCountRange) -> Self {
        [r.min, r.max]
    }
}

fn default_n_t() -> usize {
    1
}
fn default_speed() -> f64 {
    1.5
}
fn default_slot() -> f64 {
    1e-3
}
fn default_user_height() -> f64 {
    1.5
}
fn default_k_factor() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: ScenarioId,
    pub carrier_ghz: f64,
    pub snr_db: f64,
    pub user_distance_m: f64,
    pub array: ArrayGeometry,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    pub path_count_range: PathCountRange,
    /// Half-width of the uniform azimuth spread of scattered paths, degrees.
    pub angular_spread_deg: f64,
    pub los: bool,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    #[serde(default = "default_slot")]
    pub slot_duration_s: f64,
    #[serde(default)]
    pub samples_available: usize,
    #[serde(default)]
    pub covariance_available: bool,
    #[serde(default)]
    pub open_area: bool,
    /// Half-width of the uniform elevation spread of scattered paths;
    /// defaults to half the azimuth spread.
    #[serde(default)]
    pub elevation_spread_deg: Option<f64>,
    /// Azimuth of the user as seen from array boresight, degrees.
    #[serde(default)]
    pub user_azimuth_deg: f64,
    #[serde(default = "default_user_height")]
    pub user_height_m: f64,
    /// Rician K-factor of the line-of-sight path when `los` is set, dB.
    #[serde(default = "default_k_factor")]
    pub k_factor_db: f64,
}

impl ScenarioConfig {
    /// Dense urban area, low noise: 15 GHz, 20 dB, user 50 m from a 30 m mast.
    pub fn dense_low_noise() -> Self {
        Self {
            scenario_id: ScenarioId::DenseLowNoise,
            carrier_ghz: 15.0,
            snr_db: 20.0,
            user_distance_m: 50.0,
            array: ArrayGeometry::upa_8x8(30.0),
            n_t: 1,
            path_count_range: PathCountRange { min: 20, max: 40 },
            angular_spread_deg: 30.0,
            los: false,
            speed_mps: 1.5,
            slot_duration_s: 1e-3,
            samples_available: 0,
            covariance_available: false,
            open_area: false,
            elevation_spread_deg: Some(15.0),
            user_azimuth_deg: 0.0,
            user_height_m: 1.5,
            k_factor_db: 0.0,
        }
    }

    /// Open area: 60 GHz, 10 dB, user 60 m from a 30 m mast, strong LOS.
    pub fn open_area() -> Self {
        Self {
            scenario_id: ScenarioId::OpenArea,
            carrier_ghz: 60.0,
            snr_db: 10.0,
            user_distance_m: 60.0,
            array: ArrayGeometry::upa_8x8(30.0),
            path_count_range: PathCountRange { min: 2, max: 6 },
            angular_spread_deg: 5.0,
            los: true,
            open_area: true,
            elevation_spread_deg: Some(2.5),
            user_azimuth_deg: 50.0,
            k_factor_db: 15.0,
            ..Self::dense_low_noise()
        }
    }

    /// Dense urban area, high noise: as scenario 1 at 2 dB with 1000
    /// ground-truth samples.
    pub fn dense_high_noise() -> Self {
        Self {
            scenario_id: ScenarioId::DenseHighNoise,
            snr_db: 2.0,
            samples_available: 1000,
            ..Self::dense_low_noise()
        }
    }

    /// Indoor office: 15 GHz, 10 dB, user 20 m from a 3 m mount, 30000
    /// ground-truth samples.
    pub fn indoor_office() -> Self {
        Self {
            scenario_id: ScenarioId::IndoorOffice,
            user_distance_m: 20.0,
            array: ArrayGeometry::upa_8x8(3.0),
            snr_db: 10.0,
            angular_spread_deg: 40.0,
            elevation_spread_deg: Some(30.0),
            samples_available: 30_000,
            ..Self::dense_low_noise()
        }
    }

    pub fn preset(id: ScenarioId) -> Option<Self> {
        match id {
            ScenarioId::DenseLowNoise => Some(Self::dense_low_noise()),
            ScenarioId::OpenArea => Some(Self::open_area()),
            ScenarioId::DenseHighNoise => Some(Self::dense_high_noise()),
            ScenarioId::IndoorOffice => Some(Self::indoor_office()),
            ScenarioId::Custom => None,
        }
    }

    pub fn num_rx(&self) -> usize {
        self.array.num_elements()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
    }

    /// Noise variance per receive antenna, `10^(-snr_db / 10)`.
    pub fn noise_var(&self) -> f64 {
        math::db_to_linear(-self.snr_db)
    }

    pub fn elevation_spread(&self) -> f64 {
        self.elevation_spread_deg.unwrap_or(self.angular_spread_deg / 2.0)
    }

    /// True when the environment suggests few dominant paths.
    pub fn is_sparse(&self) -> bool {
        self.open_area || self.carrier_ghz >= 28.0
    }

    /// Direction of the user from the array, `(azimuth, elevation)` radians.
    pub fn user_direction(&self) -> (f64, f64) {
        let drop = self.array.height_m - self.user_height_m;
        (
            math::deg_to_rad(self.user_azimuth_deg),
            -math::atan(drop / self.user_distance_m),
        )
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.array.validate()?;
        let r = self.path_count_range;
        if r.min > r.max || r.min == 0 {
            return Err(ChannelError::InvalidPathRange {
                min: r.min,
                max: r.max,
            });
        }
        if !(self.carrier_ghz > 0.0) {
            return Err(ChannelError::Config("carrier must be positive".into()));
        }
        if !(self.user_distance_m > 0.0) {
            return Err(ChannelError::Config("user distance must be positive".into()));
        }
        if !(self.slot_duration_s > 0.0) {
            return Err(ChannelError::Config("slot duration must be positive".into()));
        }
        if !(self.speed_mps >= 0.0) {
            return Err(ChannelError::Config("speed must be non-negative".into()));
        }
        if !(self.angular_spread_deg >= 0.0) || !(self.elevation_spread() >= 0.0) {
            return Err(ChannelError::Config("angular spread must be non-negative".into()));
        }
        if self.snr_db.is_nan() {
            return Err(ChannelError::Config("snr must be a number".into()));
        }
        if self.n_t != 1 {
            return Err(ChannelError::Config(alloc::format!(
                "only single-antenna users are simulated (n_t = {})",
                self.n_t
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: C64,
    /// In `(-pi, pi]`.
    pub azimuth_rad: f64,
    /// In `[-pi/2, pi/2]`.
    pub elevation_rad: f64,
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `N_r x N_t`.
    pub h: CMatrix,
    pub paths: Vec<PathComponent>,
    pub slot_index: u64,
    pub rrh_index: u32,
}

impl ChannelRealization {
    /// Coherent sum of the paths' gain-weighted steering vectors.
    pub fn reconstruct(paths: &[PathComponent], geometry: &ArrayGeometry) -> CMatrix {
        let n = geometry.num_elements();
        let mut h = alloc::vec![C64::new(0.0, 0.0); n];
        for p in paths {
            let a = steering_vector(geometry, p.azimuth_rad, p.elevation_rad);
            for (hi, ai) in h.iter_mut().zip(&a) {
                *hi += p.gain * ai;
            }
        }
        CMatrix::column(&h)
    }

    /// The channel as a flat vector (single-antenna user).
    pub fn vector(&self) -> &[C64] {
        self.h.as_slice()
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let mut a = az;
    while a > PI {
        a -= TAU;
    }
    while a <= -PI {
        a += TAU;
    }
    a
}

/// Draws one channel realization for `scenario`.
///
/// Scattered paths are spread uniformly within `+-angular_spread_deg` in
/// azimuth and `+-elevation_spread` in elevation around the user direction and
/// share the non-LOS power equally. With `los`, the first path points exactly
/// at the user with power `K / (K + 1)` and a random phase. Each path's
/// Doppler shift is `(speed / lambda) cos(theta)` with `theta` uniform in
/// `(-pi/2, pi/2)`, fixed for the episode.
pub fn generate_channel<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    scenario.validate()?;
    let range = scenario.path_count_range;
    let count = rng.random_range(range.min..=range.max) as usize;
    let (az0, el0) = scenario.user_direction();
    let az_spread = math::deg_to_rad(scenario.angular_spread_deg);
    let el_spread = math::deg_to_rad(scenario.elevation_spread());
    let max_doppler = scenario.speed_mps / scenario.wavelength_m();
    let doppler = |rng: &mut R| max_doppler * math::cos(uniform(rng, -PI / 2.0, PI / 2.0));

    let mut paths = Vec::with_capacity(count);
    let (scattered, scattered_power) = if scenario.los {
        let scattered = count - 1;
        let k = math::db_to_linear(scenario.k_factor_db);
        let los_power = if scattered == 0 { 1.0 } else { k / (k + 1.0) };
        let phase = uniform(rng, 0.0, TAU);
        paths.push(PathComponent {
            gain: math::cis(phase) * math::sqrt(los_power),
            azimuth_rad: wrap_azimuth(az0),
            elevation_rad: el0,
            doppler_hz: doppler(rng),
        });
        (scattered, 1.0 - los_power)
    } else {
        (count, 1.0)
    };
    for _ in 0..scattered {
        let az = wrap_azimuth(az0 + uniform(rng, -az_spread, az_spread));
        let el = (el0 + uniform(rng, -el_spread, el_spread)).clamp(-PI / 2.0, PI / 2.0);
        let gain = complex_gaussian(rng, scattered_power / scattered as f64);
        paths.push(PathComponent {
            gain,
            azimuth_rad: az,
            elevation_rad: el,
            doppler_hz: doppler(rng),
        });
    }
    let h = ChannelRealization::reconstruct(&paths, &scenario.array);
    Ok(ChannelRealization {
        h,
        paths,
        slot_index: 0,
        rrh_index: 0,
    })
}

/// Advances the channel by one slot: every path gain rotates by
/// `exp(j 2 pi f_d T_slot)` while directions stay fixed.
pub fn evolve_channel(prev: &ChannelRealization, scenario: &ScenarioConfig) -> ChannelRealization {
    let paths: Vec<PathComponent> = prev
        .paths
        .iter()
        .map(|p| PathComponent {
            gain: p.gain * math::cis(TAU * p.doppler_hz * scenario.slot_duration_s),
            ..*p
        })
        .collect();
    ChannelRealization {
        h: ChannelRealization::reconstruct(&paths, &scenario.array),
        paths,
        slot_index: prev.slot_index + 1,
        rrh_index: prev.rrh_index,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotFrame {
    /// Received vector, length `N_r`.
    pub y: Vec<C64>,
    /// Transmitted pilot, length `N_t`.
    pub s: Vec<C64>,
    pub noise_var: f64,
    pub slot_index: u64,
    pub rrh_index: u32,
}

impl PilotFrame {
    pub fn num_rx(&self) -> usize {
        self.y.len()
    }
}

/// The unit-scalar pilot `s = [1]`.
pub fn unit_pilot() -> Vec<C64> {
    alloc::vec![C64::new(1.0, 0.0)]
}

/// `y = h s + n` with the scenario's noise variance and a unit pilot.
pub fn transmit_pilot<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    scenario: &ScenarioConfig,
    rng: &mut R,
) -> Result<PilotFrame, ChannelError> {
    if ch.h.cols() != scenario.n_t || ch.h.rows() != scenario.num_rx() {
        return Err(ChannelError::Dimension(alloc::format!(
            "channel is {}x{}, scenario expects {}x{}",
            ch.h.rows(),
            ch.h.cols(),
            scenario.num_rx(),
            scenario.n_t
        )));
    }
    transmit_pilot_with(ch, &unit_pilot(), scenario.noise_var(), rng)
}

/// `y = h s + n` with an explicit pilot and noise variance. A zero variance
/// gives the noiseless observation and draws nothing from `rng`.
pub fn transmit_pilot_with<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    pilot: &[C64],
    noise_var: f64,
    rng: &mut R,
) -> Result<PilotFrame, ChannelError> {
    if pilot.len() != ch.h.cols() {
        return Err(ChannelError::Dimension(alloc::format!(
            "pilot length {} does not match {} transmit antennas",
            pilot.len(),
            ch.h.cols()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(ChannelError::Config("noise variance must be non-negative".into()));
    }
    let mut y =
        ch.h.matvec(pilot)
            .map_err(|e| ChannelError::Dimension(alloc::format!("{e}")))?;
    if noise_var > 0.0 {
        for yi in y.iter_mut() {
            *yi += complex_gaussian(rng, noise_var);
        }
    }
    Ok(PilotFrame {
        y,
        s: pilot.to_vec(),
        noise_var,
        slot_index: ch.slot_index,
        rrh_index: ch.rrh_index,
    })
}

/// Empirical covariance `(1/n) sum h h^H` over `n` independent draws.
pub fn true_covariance<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    n_samples: usize,
    rng: &mut R,
) -> Result<CMatrix, ChannelError> {
    if n_samples == 0 {
        return Err(ChannelError::Config(
            "covariance needs at least one sample".into(),
        ));
    }
    let n = scenario.num_rx();
    let mut r = CMatrix::zeros(n, n);
    let w = 1.0 / n_samples as f64;
    for _ in 0..n_samples {
        let ch = generate_channel(scenario, rng)?;
        r.add_outer(ch.vector(), ch.vector(), w);
    }
    Ok(r)
}

/// Empirical covariance of an explicit set of channels.
pub fn sample_covariance(channels: &[ChannelRealization]) -> Option<CMatrix> {
    let first = channels.first()?;
    let n = first.h.rows();
    let mut r = CMatrix::zeros(n, n);
    let w = 1.0 / channels.len() as f64;
    for ch in channels {
        r.add_outer(ch.vector(), ch.vector(), w);
    }
    Some(r)
}

pub type Dataset = Vec<(PilotFrame, ChannelRealization)>;

/// `n` i.i.d. (observation, ground truth) pairs. With `enforce_budget`,
/// asking for more than `samples_available` is an error.
pub fn sample_dataset<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    n: usize,
    enforce_budget: bool,
    rng: &mut R,
) -> Result<Dataset, ChannelError> {
    if enforce_budget && n > scenario.samples_available {
        return Err(ChannelError::ResourceConstraint {
            requested: n,
            available: scenario.samples_available,
        });
    }
    (0..n)
        .map(|_| {
            let ch = generate_channel(scenario, rng)?;
            let frame = transmit_pilot(&ch, scenario, rng)?;
            Ok((frame, ch))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSplitter;

    fn rng(seed: u64) -> crate::rng::SimRng {
        SeedSplitter::new(seed).stream(0, 0)
    }

    #[test]
    fn steering_zero_angle_is_all_ones() {
        let a = steering_vector(&ArrayGeometry::upa_8x8(30.0), 0.0, 0.0);
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn steering_entries_have_unit_modulus() {
        let g = ArrayGeometry::upa_8x8(30.0);
        for &(az, el) in &[(0.3, -0.2), (-2.0, 1.1), (PI, -PI / 2.0)] {
            for z in steering_vector(&g, az, el) {
                assert!((math::abs(z) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn steering_two_element_broadside_endfire() {
        // two elements along the horizontal axis
        let g = ArrayGeometry {
            rows: 1,
            cols: 2,
            spacing: 0.5,
            height_m: 0.0,
        };
        let a = steering_vector(&g, PI / 2.0, 0.0);
        assert!(math::abs(a[0] - C64::new(1.0, 0.0)) < 1e-15);
        assert!(math::abs(a[1] - C64::new(-1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn presets_carry_scenario_parameters() {
        let s1 = ScenarioConfig::dense_low_noise();
        assert_eq!(
            (s1.carrier_ghz, s1.snr_db, s1.user_distance_m),
            (15.0, 20.0, 50.0)
        );
        assert_eq!(s1.array.height_m, 30.0);
        let s2 = ScenarioConfig::open_area();
        assert_eq!(
            (s2.carrier_ghz, s2.snr_db, s2.user_distance_m),
            (60.0, 10.0, 60.0)
        );
        assert_eq!(s2.array.height_m, 30.0);
        let s3 = ScenarioConfig::dense_high_noise();
        assert_eq!((s3.carrier_ghz, s3.snr_db, s3.user_distance_m), (15.0, 2.0, 50.0));
        assert_eq!(s3.samples_available, 1000);
        let s4 = ScenarioConfig::indoor_office();
        assert_eq!(
            (s4.carrier_ghz, s4.snr_db, s4.user_distance_m),
            (15.0, 10.0, 20.0)
        );
        assert_eq!(s4.array.height_m, 3.0);
        assert_eq!(s4.samples_available, 30_000);
        for id in ScenarioId::PRESETS {
            let s = ScenarioConfig::preset(id).unwrap();
            assert_eq!(s.speed_mps, 1.5);
            assert_eq!((s.array.rows, s.array.cols, s.array.spacing), (8, 8, 0.5));
            s.validate().unwrap();
            if s.is_sparse() {
                assert!(s.path_count_range.min >= 2 && s.path_count_range.max <= 6);
                assert!(s.angular_spread_deg <= 10.0);
            } else {
                assert!(s.path_count_range.min >= 20 && s.path_count_range.max <= 40);
                assert!(s.angular_spread_deg >= 30.0);
            }
        }
    }

    #[test]
    fn open_area_noise_variance() {
        let s2 = ScenarioConfig::open_area();
        let ch = generate_channel(&s2, &mut rng(1)).unwrap();
        let frame = transmit_pilot(&ch, &s2, &mut rng(2)).unwrap();
        assert!((frame.noise_var - 0.1).abs() < 1e-15);
    }

    #[test]
    fn path_counts_follow_presets() {
        let mut r = rng(3);
        for _ in 0..50 {
            let sparse = generate_channel(&ScenarioConfig::open_area(), &mut r).unwrap();
            assert!(sparse.paths.len() <= 6 && sparse.paths.len() >= 2);
            let dense = generate_channel(&ScenarioConfig::dense_low_noise(), &mut r).unwrap();
            assert!(dense.paths.len() >= 20);
        }
    }

    #[test]
    fn invalid_path_range_is_rejected() {
        let mut s = ScenarioConfig::dense_low_noise();
        s.path_count_range = PathCountRange { min: 5, max: 4 };
        assert_eq!(
            generate_channel(&s, &mut rng(0)).unwrap_err(),
            ChannelError::InvalidPathRange { min: 5, max: 4 }
        );
    }

    #[test]
    fn realization_is_reconstructible_from_paths() {
        let s = ScenarioConfig::dense_low_noise();
        let ch = generate_channel(&s, &mut rng(4)).unwrap();
        let again = ChannelRealization::reconstruct(&ch.paths, &s.array);
        let rel = again.sub(&ch.h).unwrap().frobenius_sq() / ch.h.frobenius_sq();
        assert!(math::sqrt(rel) < 1e-10);
    }

    #[test]
    fn same_seed_same_channel() {
        let s = ScenarioConfig::open_area();
        let a = generate_channel(&s, &mut rng(9)).unwrap();
        let b = generate_channel(&s, &mut rng(9)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn zero_speed_channel_is_static() {
        let mut s = ScenarioConfig::dense_low_noise();
        s.speed_mps = 0.0;
        let mut ch = generate_channel(&s, &mut rng(5)).unwrap();
        let h0 = ch.h.clone();
        for _ in 0..5 {
            ch = evolve_channel(&ch, &s);
            assert_eq!(ch.h, h0);
        }
        assert_eq!(ch.slot_index, 5);
    }

    #[test]
    fn evolution_is_a_pure_phase_rotation() {
        let s = ScenarioConfig::open_area();
        let ch = generate_channel(&s, &mut rng(6)).unwrap();
        let next = evolve_channel(&ch, &s);
        for (a, b) in ch.paths.iter().zip(&next.paths) {
            assert!((math::abs(a.gain) - math::abs(b.gain)).abs() < 1e-12);
            assert_eq!((a.azimuth_rad, a.elevation_rad), (b.azimuth_rad, b.elevation_rad));
        }
        // with a single path the array norm is preserved exactly
        let mut single = s.clone();
        single.path_count_range = PathCountRange { min: 1, max: 1 };
        let ch = generate_channel(&single, &mut rng(7)).unwrap();
        let next = evolve_channel(&ch, &single);
        assert!((ch.h.frobenius_sq().sqrt() - next.h.frobenius_sq().sqrt()).abs() < 1e-10);
    }

    #[test]
    fn noiseless_pilot_returns_channel() {
        let s = ScenarioConfig::dense_low_noise();
        let ch = generate_channel(&s, &mut rng(8)).unwrap();
        let frame = transmit_pilot_with(&ch, &unit_pilot(), 0.0, &mut rng(0)).unwrap();
        assert_eq!(frame.y.as_slice(), ch.vector());
    }

    #[test]
    fn pilot_dimension_mismatch() {
        let s = ScenarioConfig::dense_low_noise();
        let ch = generate_channel(&s, &mut rng(8)).unwrap();
        let two = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(
            transmit_pilot_with(&ch, &two, 0.1, &mut rng(0)),
            Err(ChannelError::Dimension(_))
        ));
    }

    #[test]
    fn covariance_of_single_draw_is_outer_product() {
        let s = ScenarioConfig::open_area();
        let r = true_covariance(&s, 1, &mut rng(10)).unwrap();
        let ch = generate_channel(&s, &mut rng(10)).unwrap();
        let outer = CMatrix::outer(ch.vector(), ch.vector());
        assert_eq!(r, outer);
        assert!(r.hermitian_defect() < 1e-12);
        assert!(true_covariance(&s, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn dataset_budget_enforced() {
        let s3 = ScenarioConfig::dense_high_noise();
        assert_eq!(sample_dataset(&s3, 1000, true, &mut rng(1)).unwrap().len(), 1000);
        assert_eq!(
            sample_dataset(&s3, 1001, true, &mut rng(1)).unwrap_err(),
            ChannelError::ResourceConstraint {
                requested: 1001,
                available: 1000
            }
        );
        let a = sample_dataset(&s3, 5, true, &mut rng(2)).unwrap();
        let b = sample_dataset(&s3, 5, true, &mut rng(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_antenna_users_are_rejected() {
        let mut s = ScenarioConfig::dense_low_noise();
        s.n_t = 2;
        assert!(matches!(s.validate(), Err(ChannelError::Config(_))));
    }
}
