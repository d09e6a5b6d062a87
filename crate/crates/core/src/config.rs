//! Experiment configuration: one declarative JSON document drives the whole
//! virtual laboratory and pipeline. Validation reports the dotted path of the
//! offending field.

use serde::{Deserialize, Serialize};

use crate::beam::{BeamModalModel, BeamSpec};
use crate::cwt::{linear_spaced, log_spaced, MorletParams, PaddingMode};
use crate::error::{Error, Result};
use crate::scan::{Direction, RoadProfile, ScanNoise, SpeedPreset, DEFAULT_SAMPLING_RATE_HZ};
use crate::spacemap::GlobalGrid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic stream derives from it.
    pub seed: u64,
    pub beam: BeamSpec,
    pub modes: BeamModalModel,
    pub excitation: ExcitationConfig,
    pub scan_plan: Vec<ScanGroup>,
    #[serde(default)]
    pub noise: ScanNoise,
    #[serde(default)]
    pub road: RoadProfile,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub cwt: CwtConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub identify: IdentifyConfig,
}

/// Poisson impulse excitation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    /// Impulse arrival rate, events per second.
    pub rate_hz: f64,
    /// Uniform impulse magnitude range, N*s.
    pub magnitude_range_ns: (f64, f64),
}

/// A batch of identically configured scans.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGroup {
    pub count: u32,
    pub speed: SpeedSpec,
    pub lane_offset_m: f64,
    /// `forward`, `reverse`, or `alternate` between the two.
    #[serde(default)]
    pub direction: DirectionSpec,
    #[serde(default = "default_fs")]
    pub sampling_rate_hz: f64,
}

fn default_fs() -> f64 {
    DEFAULT_SAMPLING_RATE_HZ
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpeedSpec {
    Preset(SpeedPreset),
    Explicit { mps: f64 },
}

impl SpeedSpec {
    pub fn speed_mps(self) -> f64 {
        match self {
            SpeedSpec::Preset(p) => p.speed_mps(),
            SpeedSpec::Explicit { mps } => mps,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSpec {
    Forward,
    Reverse,
    #[default]
    Alternate,
}

impl DirectionSpec {
    /// Direction of the i-th scan in a group.
    pub fn direction_for(self, index: u32) -> Direction {
        match self {
            DirectionSpec::Forward => Direction::Forward,
            DirectionSpec::Reverse => Direction::Reverse,
            DirectionSpec::Alternate => {
                if index % 2 == 0 {
                    Direction::Forward
                } else {
                    Direction::Reverse
                }
            }
        }
    }
}

/// Quarter-car hybrid-simulation stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Preset pool scans draw from, uniformly at random per scan. Empty means
    /// the built-in table V1..V4.
    #[serde(default)]
    pub presets: Vec<crate::vehicle::QuarterCar>,
    /// Highest frequency the downstream analysis needs; default is the top
    /// modal frequency of the model.
    #[serde(default)]
    pub max_analysis_freq_hz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwtConfig {
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default = "default_fmin")]
    pub freq_min_hz: f64,
    #[serde(default = "default_fmax")]
    pub freq_max_hz: f64,
    #[serde(default = "default_nfreq")]
    pub n_frequencies: usize,
    /// `log` (constant-Q, the default) or `linear`.
    #[serde(default)]
    pub grid_kind: FreqGridKind,
    #[serde(default = "default_pad_frac")]
    pub padding_fraction: f64,
    #[serde(default = "default_pad_mode")]
    pub padding_mode: PaddingMode,
}

fn default_omega0() -> f64 {
    6.0
}
fn default_fmin() -> f64 {
    1.0
}
fn default_fmax() -> f64 {
    40.0
}
fn default_nfreq() -> usize {
    201
}
fn default_pad_frac() -> f64 {
    0.5
}
fn default_pad_mode() -> PaddingMode {
    PaddingMode::AntisymmetricReflection
}

impl Default for CwtConfig {
    fn default() -> Self {
        Self {
            omega0: default_omega0(),
            freq_min_hz: default_fmin(),
            freq_max_hz: default_fmax(),
            n_frequencies: default_nfreq(),
            grid_kind: FreqGridKind::default(),
            padding_fraction: default_pad_frac(),
            padding_mode: default_pad_mode(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqGridKind {
    #[default]
    Log,
    Linear,
}

impl CwtConfig {
    pub fn frequencies(&self) -> Vec<f64> {
        match self.grid_kind {
            FreqGridKind::Log => log_spaced(self.freq_min_hz, self.freq_max_hz, self.n_frequencies),
            FreqGridKind::Linear => {
                linear_spaced(self.freq_min_hz, self.freq_max_hz, self.n_frequencies)
            }
        }
    }

    pub fn morlet_params(&self) -> MorletParams {
        MorletParams {
            omega0: self.omega0,
            frequencies_hz: self.frequencies(),
            padding_fraction: self.padding_fraction,
            padding_mode: self.padding_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_nx")]
    pub n_positions: usize,
}

fn default_nx() -> usize {
    200
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_positions: default_nx(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    #[serde(default = "default_max_modes")]
    pub max_modes: usize,
    #[serde(default = "default_prominence")]
    pub min_prominence_ratio: f64,
    /// Lower edge of the reporting band. Peaks below it (vehicle and road
    /// obstacle bands) still shape the relative prominence threshold but are
    /// not reported as structural modes. `None` reports the whole grid.
    #[serde(default)]
    pub min_report_hz: Option<f64>,
    /// Compare estimates against the configured modal model.
    #[serde(default = "default_true")]
    pub use_reference: bool,
}

fn default_max_modes() -> usize {
    10
}
fn default_prominence() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            max_modes: default_max_modes(),
            min_prominence_ratio: default_prominence(),
            min_report_hz: None,
            use_reference: default_true(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: json_error_path(&e),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.beam
            .validate()
            .map_err(|e| Error::config("beam", e.to_string()))?;
        self.modes
            .validate()
            .map_err(|e| Error::config("modes", e.to_string()))?;
        if !(self.excitation.rate_hz > 0.0) {
            return Err(Error::config("excitation.rate_hz", "must be > 0"));
        }
        let (p0, p1) = self.excitation.magnitude_range_ns;
        if !(p0 > 0.0 && p1 >= p0) {
            return Err(Error::config(
                "excitation.magnitude_range_ns",
                "must satisfy 0 < min <= max",
            ));
        }
        if self.scan_plan.is_empty() {
            return Err(Error::config("scan_plan", "at least one scan group is required"));
        }
        for (i, g) in self.scan_plan.iter().enumerate() {
            let path = format!("scan_plan[{i}]");
            if g.count == 0 {
                return Err(Error::config(format!("{path}.count"), "must be >= 1"));
            }
            if !(g.speed.speed_mps() > 0.0) {
                return Err(Error::config(format!("{path}.speed"), "must be > 0"));
            }
            if g.lane_offset_m.abs() > self.beam.deck_width_m / 2.0 {
                return Err(Error::config(
                    format!("{path}.lane_offset_m"),
                    "lane leaves the deck",
                ));
            }
            if !(g.sampling_rate_hz > 0.0) {
                return Err(Error::config(
                    format!("{path}.sampling_rate_hz"),
                    "must be > 0",
                ));
            }
            if self.cwt.freq_max_hz >= g.sampling_rate_hz / 2.0 {
                return Err(Error::config(
                    format!("{path}.sampling_rate_hz"),
                    "CWT grid reaches Nyquist for this group",
                ));
            }
        }
        if self.noise.accel_std < 0.0 {
            return Err(Error::config("noise.accel_std", "must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.noise.timing_jitter_frac) {
            return Err(Error::config(
                "noise.timing_jitter_frac",
                "must be in [0, 0.5)",
            ));
        }
        self.road
            .validate(self.beam.span_length_m)
            .map_err(|e| Error::config("road", e.to_string()))?;
        for (i, qc) in self.vehicle.presets.iter().enumerate() {
            qc.validate()
                .map_err(|e| Error::config(format!("vehicle.presets[{i}]"), e.to_string()))?;
        }
        if self.cwt.omega0 < 5.0 {
            return Err(Error::config("cwt.omega0", "must be >= 5"));
        }
        if !(self.cwt.freq_min_hz > 0.0 && self.cwt.freq_max_hz > self.cwt.freq_min_hz) {
            return Err(Error::config("cwt", "frequency band must satisfy 0 < min < max"));
        }
        if self.cwt.n_frequencies < 8 {
            return Err(Error::config("cwt.n_frequencies", "must be >= 8"));
        }
        if !(0.0..=2.0).contains(&self.cwt.padding_fraction) {
            return Err(Error::config("cwt.padding_fraction", "must be in [0, 2]"));
        }
        if self.grid.n_positions < 50 {
            return Err(Error::config("grid.n_positions", "must be >= 50"));
        }
        if self.identify.max_modes == 0 {
            return Err(Error::config("identify.max_modes", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.identify.min_prominence_ratio) {
            return Err(Error::config(
                "identify.min_prominence_ratio",
                "must be in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Total number of planned scans.
    pub fn total_scans(&self) -> u64 {
        self.scan_plan.iter().map(|g| g.count as u64).sum()
    }

    /// Distinct lane offsets in plan order (first occurrence wins); the first
    /// lane is the identification lane.
    pub fn lanes(&self) -> Vec<f64> {
        let mut lanes: Vec<f64> = Vec::new();
        for g in &self.scan_plan {
            if !lanes.iter().any(|&l| (l - g.lane_offset_m).abs() < 1e-12) {
                lanes.push(g.lane_offset_m);
            }
        }
        lanes
    }

    pub fn global_grid(&self) -> GlobalGrid {
        GlobalGrid::uniform(
            self.beam.span_length_m,
            self.grid.n_positions,
            self.cwt.frequencies(),
        )
    }

    /// Highest frequency the vehicle filter must preserve.
    pub fn max_analysis_freq_hz(&self) -> f64 {
        self.vehicle
            .max_analysis_freq_hz
            .unwrap_or_else(|| self.modes.max_frequency_hz())
    }

    /// Quarter-car pool for hybrid simulation.
    pub fn vehicle_pool(&self) -> Vec<crate::vehicle::QuarterCar> {
        if self.vehicle.presets.is_empty() {
            crate::vehicle::VehiclePreset::ALL
                .iter()
                .map(|&p| crate::vehicle::QuarterCar::preset(p))
                .collect()
        } else {
            self.vehicle.presets.clone()
        }
    }
}

fn json_error_path(e: &serde_json::Error) -> String {
    format!("line {}, column {}", e.line(), e.column())
}
