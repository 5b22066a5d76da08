//! Domain types shared by the simulator and the estimator, plus the JSON
//! scenario format.
//!
//! Angles are radians internally. Directions use colatitude in `[0, π]` and
//! azimuth in `[-π, π)`. The file format stores degrees.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::array_model::layout;
use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_FS: f64 = 48_000.0;
pub const DEFAULT_SOURCE_DURATION: f64 = 2.5;
pub const SCHEMA_VERSION: u32 = 1;

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    colatitude: f64,
    azimuth: f64,
}

impl Direction {
    pub fn new(colatitude: f64, azimuth: f64) -> Result<Self> {
        if !colatitude.is_finite() || !azimuth.is_finite() {
            return Err(Error::invalid("direction", "angles must be finite"));
        }
        const SLACK: f64 = 1e-12;
        if !(-SLACK..=PI + SLACK).contains(&colatitude) {
            return Err(Error::invalid(
                "direction",
                format!("colatitude {colatitude} rad outside [0, pi]"),
            ));
        }
        Ok(Self {
            colatitude: colatitude.clamp(0.0, PI),
            azimuth: wrap_azimuth(azimuth),
        })
    }

    pub fn from_degrees(colatitude_deg: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(colatitude_deg.to_radians(), azimuth_deg.to_radians())
    }

    /// Direction of a nonzero vector.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let colatitude = (v[2] / r).clamp(-1.0, 1.0).acos();
        let azimuth = v[1].atan2(v[0]);
        Self {
            colatitude,
            azimuth: wrap_azimuth(azimuth),
        }
    }

    pub fn colatitude(&self) -> f64 {
        self.colatitude
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn to_degrees(&self) -> (f64, f64) {
        (self.colatitude.to_degrees(), self.azimuth.to_degrees())
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.colatitude.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        [st * cp, st * sp, ct]
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let w = (az + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Great-circle angle between two directions, in `[0, π]`.
pub fn angular_distance(a: &Direction, b: &Direction) -> f64 {
    let u = a.unit_vector();
    let v = b.unit_vector();
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    s.atan2(c)
}

/// Shoe-box room. Wall order is `[x=0, x=Lx, y=0, y=Ly, z=0, z=Lz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub reflection_coefficients: [f64; 6],
    pub speed_of_sound: f64,
}

impl RoomSpec {
    /// Uniform walls whose Sabine reverberation time equals `t60`.
    pub fn from_t60(dimensions: [f64; 3], t60: f64, speed_of_sound: f64) -> Result<Self> {
        if !(t60 > 0.0) {
            return Err(Error::invalid("room", "target t60 must be positive"));
        }
        let probe = Self {
            dimensions,
            reflection_coefficients: [0.0; 6],
            speed_of_sound,
        };
        probe.validate()?;
        let alpha = crate::acoustics::sabine_absorption(probe.volume(), probe.surface(), t60);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(
                "room",
                format!("t60 {t60} s implies mean absorption {alpha:.3} outside (0, 1)"),
            ));
        }
        let beta = (1.0 - alpha).sqrt();
        Ok(Self {
            reflection_coefficients: [beta; 6],
            ..probe
        })
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + y * z + x * z)
    }

    fn wall_areas(&self) -> [f64; 6] {
        let [x, y, z] = self.dimensions;
        [y * z, y * z, x * z, x * z, x * y, x * y]
    }

    /// Area-weighted energy absorption `1 - β²`.
    pub fn mean_absorption(&self) -> f64 {
        let areas = self.wall_areas();
        let absorbed: f64 = areas
            .iter()
            .zip(&self.reflection_coefficients)
            .map(|(a, b)| a * (1.0 - b * b))
            .sum();
        absorbed / self.surface()
    }

    /// Sabine reverberation time, or `None` for a lossless room.
    pub fn sabine_t60(&self) -> Option<f64> {
        crate::acoustics::sabine_t60(self.volume(), self.surface(), self.mean_absorption()).ok()
    }

    pub fn contains(&self, p: [f64; 3], margin: f64) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(&c, &l)| c > margin && c < l - margin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid("room", "all dimensions must be > 0"));
        }
        if self
            .reflection_coefficients
            .iter()
            .any(|b| !(0.0..1.0).contains(b))
        {
            return Err(Error::invalid(
                "room",
                "reflection coefficients must lie in [0, 1)",
            ));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::invalid("room", "speed of sound must be > 0"));
        }
        Ok(())
    }
}

/// Rigid spherical microphone array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub mic_directions: Vec<Direction>,
    pub sh_order: usize,
    pub speed_of_sound: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 0.042,
            mic_directions: layout::pentakis_dodecahedron(),
            sh_order: 8,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl ArraySpec {
    pub fn num_mics(&self) -> usize {
        self.mic_directions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid("array", "radius must be > 0"));
        }
        if self.mic_directions.is_empty() {
            return Err(Error::invalid("array", "at least one microphone required"));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::invalid("array", "speed of sound must be > 0"));
        }
        for (i, a) in self.mic_directions.iter().enumerate() {
            for (j, b) in self.mic_directions.iter().enumerate().skip(i + 1) {
                if angular_distance(a, b) < 1e-6 {
                    return Err(Error::invalid(
                        "array",
                        format!("microphones {i} and {j} share a direction"),
                    ));
                }
            }
        }
        let n = self.sh_order + 1;
        static ALIASING: std::sync::Once = std::sync::Once::new();
        if self.num_mics() < n * n {
            ALIASING.call_once(|| warn!(
                "{} microphones cannot resolve order {} ((N+1)^2 = {})",
                self.num_mics(),
                self.sh_order,
                n * n
            ));
        }
        Ok(())
    }
}

/// A simulated acoustic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub room: RoomSpec,
    pub source_position: [f64; 3],
    pub array: ArraySpec,
    pub fs: f64,
    /// Length of the dry source signal in seconds.
    pub source_duration: f64,
    /// Image sources later than this (seconds after emission) are dropped.
    pub rir_length: f64,
    /// Length of the array recording in seconds.
    pub duration: f64,
    pub snr_db: Option<f64>,
    pub rng_seed: u64,
    pub source_wav: Option<String>,
}

impl Scenario {
    pub fn source_distance(&self) -> f64 {
        distance(self.source_position, self.array.center)
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.array.validate()?;
        if !self.room.contains(self.source_position, 0.0) {
            return Err(Error::invalid("scenario", "source must be strictly inside the room"));
        }
        if !self.room.contains(self.array.center, self.array.radius) {
            return Err(Error::invalid("scenario", "array must be strictly inside the room"));
        }
        if self.source_distance() <= self.array.radius {
            return Err(Error::invalid(
                "scenario",
                "source coincides with the array sphere",
            ));
        }
        if !(self.fs > 0.0) {
            return Err(Error::invalid("scenario", "fs must be > 0"));
        }
        if !(self.source_duration > 0.0) || !(self.rir_length > 0.0) {
            return Err(Error::invalid("scenario", "durations must be > 0"));
        }
        if self.duration < self.source_duration {
            return Err(Error::invalid(
                "scenario",
                "recording duration shorter than the source signal",
            ));
        }
        if (self.array.speed_of_sound - self.room.speed_of_sound).abs() > 1e-12 {
            return Err(Error::invalid(
                "scenario",
                "array and room disagree on the speed of sound",
            ));
        }
        Ok(())
    }
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Hyper-parameters of the estimator. Angles in radians, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub band: (f64, f64),
    pub focus_bw: f64,
    /// Bins per phase-aligned sum; `None` spans each focusing band.
    pub j_f: Option<usize>,
    pub window_len: f64,
    pub overlap: f64,
    pub rho_min: f64,
    pub eps_u: f64,
    pub omega_th: f64,
    pub s_max: usize,
    pub gamma_omega: f64,
    pub gamma_tau: f64,
    pub density_threshold: f64,
    /// Overrides the minPts derived from `density_threshold`.
    pub min_pts: Option<usize>,
    pub tau_range: (f64, f64),
    pub tau_step: f64,
    pub grid_size: usize,
    /// Tikhonov weight relative to `trace(H Hᴴ) / Q`.
    pub focus_lambda: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            band: (500.0, 5000.0),
            focus_bw: 2000.0,
            j_f: None,
            window_len: 0.150,
            overlap: 0.75,
            rho_min: 0.9,
            eps_u: 0.63,
            omega_th: 10f64.to_radians(),
            s_max: 3,
            gamma_omega: 8f64.to_radians(),
            gamma_tau: 0.0003,
            density_threshold: 0.15,
            min_pts: None,
            tau_range: (0.0, 0.020),
            tau_step: 1e-4,
            grid_size: 900,
            focus_lambda: 1e-8,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("algorithm config", r.to_string()));
        if !(self.band.0 > 0.0 && self.band.0 < self.band.1) {
            return bad("band must satisfy 0 < f_low < f_high");
        }
        if !(self.focus_bw > 0.0 && self.focus_bw <= self.band.1 - self.band.0) {
            return bad("focus_bw must be positive and no wider than the band");
        }
        if self.j_f == Some(0) {
            return bad("j_f must be >= 1");
        }
        if !(self.window_len > 0.0) || !(0.0..1.0).contains(&self.overlap) {
            return bad("window_len must be > 0 and overlap in [0, 1)");
        }
        let positive = [
            self.rho_min,
            self.eps_u,
            self.omega_th,
            self.gamma_omega,
            self.gamma_tau,
            self.density_threshold,
            self.tau_step,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return bad("all thresholds must be positive");
        }
        if self.rho_min > 1.0 || self.eps_u > 1.0 {
            return bad("rho_min and eps_u are fractions in (0, 1]");
        }
        if self.s_max == 0 || self.grid_size == 0 {
            return bad("s_max and grid_size must be >= 1");
        }
        if self.min_pts == Some(0) {
            return bad("min_pts must be >= 1");
        }
        if !(self.tau_range.0 >= 0.0 && self.tau_range.0 < self.tau_range.1) {
            return bad("tau_range must satisfy 0 <= start < end");
        }
        if !(self.focus_lambda >= 0.0) {
            return bad("focus_lambda must be >= 0");
        }
        Ok(())
    }

    /// Delay grid scanned by the estimator.
    pub fn tau_grid(&self) -> Vec<f64> {
        let n = ((self.tau_range.1 - self.tau_range.0) / self.tau_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| self.tau_range.0 + i as f64 * self.tau_step)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoomFile {
    pub dimensions: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t60: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_of_sound: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArrayFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// `[colatitude_deg, azimuth_deg]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mic_directions_deg: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sh_order: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgoFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_bw_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_f: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_len_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_th_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_omega_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_pts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_range_s: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_step_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub room: RoomFile,
    pub source_position: [f64; 3],
    pub array: ArrayFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_wav: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<AlgoFile>,
}

/// Estimator-side configuration: array geometry and hyper-parameters.
/// Scenario files are accepted too; unrelated sections are ignored.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct EstimateConfigFile {
    #[serde(default)]
    pub array: Option<ArrayFile>,
    #[serde(default)]
    pub algorithm: Option<AlgoFile>,
    #[serde(default)]
    pub room: Option<SpeedOnly>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct SpeedOnly {
    #[serde(default)]
    pub speed_of_sound: Option<f64>,
}

impl ArrayFile {
    pub fn resolve(&self, speed_of_sound: f64) -> Result<ArraySpec> {
        let mut spec = ArraySpec {
            speed_of_sound,
            ..ArraySpec::default()
        };
        if let Some(c) = self.center {
            spec.center = c;
        }
        if let Some(r) = self.radius {
            spec.radius = r;
        }
        if let Some(order) = self.sh_order {
            spec.sh_order = order;
        }
        if let Some(dirs) = &self.mic_directions_deg {
            spec.mic_directions = dirs
                .iter()
                .map(|[c, a]| Direction::from_degrees(*c, *a))
                .collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec(spec: &ArraySpec) -> Self {
        Self {
            center: Some(spec.center),
            radius: Some(spec.radius),
            // the default layout is left implicit so it reloads bit-exactly;
            // degree round trips can move the last bit
            mic_directions_deg: (spec.mic_directions != ArraySpec::default().mic_directions).then(|| {
                spec.mic_directions
                    .iter()
                    .map(|d| {
                        let (c, a) = d.to_degrees();
                        [c, a]
                    })
                    .collect()
            }),
            sh_order: Some(spec.sh_order),
        }
    }
}

impl AlgoFile {
    pub fn resolve(&self) -> Result<AlgoConfig> {
        let d = AlgoConfig::default();
        let cfg = AlgoConfig {
            band: self.band_hz.map(|[a, b]| (a, b)).unwrap_or(d.band),
            focus_bw: self.focus_bw_hz.unwrap_or(d.focus_bw),
            j_f: self.j_f.or(d.j_f),
            window_len: self.window_len_s.unwrap_or(d.window_len),
            overlap: self.overlap.unwrap_or(d.overlap),
            rho_min: self.rho_min.unwrap_or(d.rho_min),
            eps_u: self.eps_u.unwrap_or(d.eps_u),
            omega_th: self.omega_th_deg.map(f64::to_radians).unwrap_or(d.omega_th),
            s_max: self.s_max.unwrap_or(d.s_max),
            gamma_omega: self
                .gamma_omega_deg
                .map(f64::to_radians)
                .unwrap_or(d.gamma_omega),
            gamma_tau: self.gamma_tau_s.unwrap_or(d.gamma_tau),
            density_threshold: self.density_threshold.unwrap_or(d.density_threshold),
            min_pts: self.min_pts.or(d.min_pts),
            tau_range: self.tau_range_s.map(|[a, b]| (a, b)).unwrap_or(d.tau_range),
            tau_step: self.tau_step_s.unwrap_or(d.tau_step),
            grid_size: self.grid_size.unwrap_or(d.grid_size),
            focus_lambda: self.focus_lambda.unwrap_or(d.focus_lambda),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &AlgoConfig) -> Self {
        Self {
            band_hz: Some([cfg.band.0, cfg.band.1]),
            focus_bw_hz: Some(cfg.focus_bw),
            j_f: cfg.j_f,
            window_len_s: Some(cfg.window_len),
            overlap: Some(cfg.overlap),
            rho_min: Some(cfg.rho_min),
            eps_u: Some(cfg.eps_u),
            omega_th_deg: Some(cfg.omega_th.to_degrees()),
            s_max: Some(cfg.s_max),
            gamma_omega_deg: Some(cfg.gamma_omega.to_degrees()),
            gamma_tau_s: Some(cfg.gamma_tau),
            density_threshold: Some(cfg.density_threshold),
            min_pts: cfg.min_pts,
            tau_range_s: Some([cfg.tau_range.0, cfg.tau_range.1]),
            tau_step_s: Some(cfg.tau_step),
            grid_size: Some(cfg.grid_size),
            focus_lambda: Some(cfg.focus_lambda),
        }
    }
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<(Scenario, AlgoConfig)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "scenario",
                format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let c = self.room.speed_of_sound.unwrap_or(DEFAULT_SPEED_OF_SOUND);
        let room = match (&self.room.reflection_coefficients, self.room.t60) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "room",
                    "give either reflection_coefficients or t60, not both",
                ))
            }
            (Some(coeffs), None) => {
                let coeffs: [f64; 6] = match coeffs.len() {
                    1 => [coeffs[0]; 6],
                    6 => [coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4], coeffs[5]],
                    n => {
                        return Err(Error::invalid(
                            "room",
                            format!("expected 1 or 6 reflection coefficients, got {n}"),
                        ))
                    }
                };
                let room = RoomSpec {
                    dimensions: self.room.dimensions,
                    reflection_coefficients: coeffs,
                    speed_of_sound: c,
                };
                room.validate()?;
                room
            }
            (None, Some(t60)) => RoomSpec::from_t60(self.room.dimensions, t60, c)?,
            (None, None) => {
                return Err(Error::invalid(
                    "room",
                    "either reflection_coefficients or t60 is required",
                ))
            }
        };
        let array = self.array.resolve(c)?;
        let source_duration = self.source_duration.unwrap_or(DEFAULT_SOURCE_DURATION);
        let rir_length = match self.rir_length {
            Some(t) => t,
            None => room.sabine_t60().ok_or_else(|| {
                Error::invalid("scenario", "rir_length is required for a lossless room")
            })?,
        };
        let scenario = Scenario {
            room,
            source_position: self.source_position,
            array,
            fs: self.fs.unwrap_or(DEFAULT_FS),
            source_duration,
            rir_length,
            duration: self.duration.unwrap_or(source_duration + rir_length),
            snr_db: self.snr_db,
            rng_seed: self.rng_seed,
            source_wav: self.source_wav.clone(),
        };
        scenario.validate()?;
        let algo = self.algorithm.clone().unwrap_or_default().resolve()?;
        Ok((scenario, algo))
    }

    /// Fully explicit file representation of a resolved scenario.
    pub fn from_resolved(scenario: &Scenario, algo: &AlgoConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: None,
            room: RoomFile {
                dimensions: scenario.room.dimensions,
                reflection_coefficients: Some(scenario.room.reflection_coefficients.to_vec()),
                t60: None,
                speed_of_sound: Some(scenario.room.speed_of_sound),
            },
            source_position: scenario.source_position,
            array: ArrayFile::from_spec(&scenario.array),
            fs: Some(scenario.fs),
            source_duration: Some(scenario.source_duration),
            rir_length: Some(scenario.rir_length),
            duration: Some(scenario.duration),
            snr_db: scenario.snr_db,
            rng_seed: scenario.rng_seed,
            source_wav: scenario.source_wav.clone(),
            algorithm: Some(AlgoFile::from_config(algo)),
        }
    }
}

impl EstimateConfigFile {
    pub fn resolve(&self) -> Result<(ArraySpec, AlgoConfig)> {
        let c = self
            .room
            .as_ref()
            .and_then(|r| r.speed_of_sound)
            .unwrap_or(DEFAULT_SPEED_OF_SOUND);
        let array = self.array.clone().unwrap_or_default().resolve(c)?;
        let algo = self.algorithm.clone().unwrap_or_default().resolve()?;
        Ok((array, algo))
    }
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn parse_scenario(path: &Path, text: &str) -> Result<(Scenario, AlgoConfig)> {
    parse_json::<ScenarioFile>(path, text)?.resolve()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<(Scenario, AlgoConfig)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_scenario(path, &text)
}

pub fn load_estimate_config(path: impl AsRef<Path>) -> Result<(ArraySpec, AlgoConfig)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_json::<EstimateConfigFile>(path, &text)?.resolve()
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario, algo: &AlgoConfig) -> Result<()> {
    let file = ScenarioFile::from_resolved(scenario, algo);
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Number of bundled room scenarios.
pub const SHIPPED_ROOMS: usize = 5;

const SHIPPED: [&str; SHIPPED_ROOMS] = [
    include_str!("../data/scenarios/room1.json"),
    include_str!("../data/scenarios/room2.json"),
    include_str!("../data/scenarios/room3.json"),
    include_str!("../data/scenarios/room4.json"),
    include_str!("../data/scenarios/room5.json"),
];

/// Raw JSON of bundled room `room` (1-based).
pub fn shipped_scenario_json(room: usize) -> Result<&'static str> {
    room.checked_sub(1)
        .and_then(|i| SHIPPED.get(i))
        .copied()
        .ok_or_else(|| Error::invalid("room", format!("{room} is not in 1..={SHIPPED_ROOMS}")))
}

pub fn shipped_scenario(room: usize) -> Result<(Scenario, AlgoConfig)> {
    let text = shipped_scenario_json(room)?;
    parse_scenario(Path::new(&format!("room{room}.json")), text)
}
