//! Mobile-sensor scan synthesis.
//!
//! A scan samples the beam's acceleration along a constant-speed trajectory,
//! adds fixed-position bump disturbances whose injected acceleration grows
//! with speed, adds Gaussian measurement noise, and optionally perturbs the
//! sample timestamps to emulate the uneven sampling of phone accelerometers.
//! Everything is deterministic given a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beam::{acceleration_at, BeamModalModel, BeamSpec, ImpulseTrain};
use crate::error::{Error, Result};

/// Tow speeds used by the laboratory carts, in m/s.
pub const SPEED_SLOW_MPS: f64 = 0.0950;
pub const SPEED_MEDIUM_MPS: f64 = 0.1138;
pub const SPEED_FAST_MPS: f64 = 0.1453;

/// Default uniform sampling rate scans are repaired to, in Hz.
pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 100.0;

/// Minimum number of samples a usable scan must carry.
pub const MIN_SCAN_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedPreset {
    Slow,
    Medium,
    Fast,
}

impl SpeedPreset {
    pub fn speed_mps(self) -> f64 {
        match self {
            SpeedPreset::Slow => SPEED_SLOW_MPS,
            SpeedPreset::Medium => SPEED_MEDIUM_MPS,
            SpeedPreset::Fast => SPEED_FAST_MPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// One vehicle pass over the bridge at constant speed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Trajectory {
    pub lane_offset_m: f64,
    pub speed_mps: f64,
    pub start_time_s: f64,
    pub sampling_rate_hz: f64,
    pub direction: Direction,
}

impl Trajectory {
    pub fn duration_s(&self, span_length_m: f64) -> f64 {
        span_length_m / self.speed_mps
    }

    /// Deck position at time `t_s`, honoring travel direction.
    pub fn position_at(&self, t_s: f64, span_length_m: f64) -> f64 {
        let along = self.speed_mps * (t_s - self.start_time_s);
        match self.direction {
            Direction::Forward => along,
            Direction::Reverse => span_length_m - along,
        }
    }
}

pub fn make_trajectory(
    speed_mps: f64,
    lane_offset_m: f64,
    sampling_rate_hz: f64,
    direction: Direction,
) -> Result<Trajectory> {
    if !(speed_mps > 0.0) {
        return Err(Error::Invalid("speed must be > 0".into()));
    }
    if !(sampling_rate_hz > 0.0) {
        return Err(Error::Invalid("sampling rate must be > 0".into()));
    }
    Ok(Trajectory {
        lane_offset_m,
        speed_mps,
        start_time_s: 0.0,
        sampling_rate_hz,
        direction,
    })
}

/// One recorded vehicle trip: timestamps, accelerations, and trip metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub scan_id: u64,
    pub vehicle_id: u32,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub times_s: Vec<f64>,
    pub accel_ms2: Vec<f64>,
}

impl ScanRecord {
    /// Nominal positions x_j = v (t_j - t_0), mirrored for reverse scans.
    pub fn positions_m(&self, span_length_m: f64) -> Vec<f64> {
        self.times_s
            .iter()
            .map(|&t| self.trajectory.position_at(t, span_length_m))
            .collect()
    }

    pub fn validate(&self, span_length_m: f64) -> Result<()> {
        if self.times_s.len() != self.accel_ms2.len() {
            return Err(Error::Data("times and accelerations differ in length".into()));
        }
        if self.times_s.len() < MIN_SCAN_SAMPLES {
            return Err(Error::Data(format!(
                "scan {} has {} samples, need at least {MIN_SCAN_SAMPLES}",
                self.scan_id,
                self.times_s.len()
            )));
        }
        for pair in self.times_s.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Data("timestamps must be strictly increasing".into()));
            }
        }
        let eps = 1e-9 * span_length_m;
        for &x in &self.positions_m(span_length_m) {
            if !(-eps..=span_length_m + eps).contains(&x) {
                return Err(Error::Data("scan position outside the span".into()));
            }
        }
        Ok(())
    }
}

/// One fixed obstacle on the deck. The injected acceleration is a raised
/// cosine in position with peak `severity * v^speed_exponent`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub position_m: f64,
    /// Peak injected acceleration per (m/s)^speed_exponent, in m/s^2.
    pub severity: f64,
    pub half_width_m: f64,
}

/// Fixed obstacles shared by every scan (wires, joints, speed bumps).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadProfile {
    #[serde(default)]
    pub bumps: Vec<Bump>,
    /// Exponent of the speed dependence of injected bump acceleration.
    #[serde(default = "default_speed_exponent")]
    pub speed_exponent: f64,
}

fn default_speed_exponent() -> f64 {
    2.0
}

impl Default for RoadProfile {
    fn default() -> Self {
        Self {
            bumps: Vec::new(),
            speed_exponent: default_speed_exponent(),
        }
    }
}

impl RoadProfile {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self, span_length_m: f64) -> Result<()> {
        for b in &self.bumps {
            if !(0.0..=span_length_m).contains(&b.position_m) {
                return Err(Error::Invalid("bump position outside span".into()));
            }
            if b.severity < 0.0 {
                return Err(Error::Invalid("bump severity must be >= 0".into()));
            }
            if !(b.half_width_m > 0.0) {
                return Err(Error::Invalid("bump half width must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Injected acceleration at deck position `x_m` for a carrier moving at
    /// `speed_mps`.
    pub fn accel_at(&self, x_m: f64, speed_mps: f64) -> f64 {
        let mut total = 0.0;
        for b in &self.bumps {
            let d = (x_m - b.position_m).abs();
            if d < b.half_width_m {
                let pulse = 0.5 * (1.0 + (std::f64::consts::PI * d / b.half_width_m).cos());
                total += b.severity * speed_mps.powf(self.speed_exponent) * pulse;
            }
        }
        total
    }
}

/// Measurement imperfections of the phone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanNoise {
    /// Standard deviation of additive Gaussian acceleration noise, m/s^2,
    /// at the reference speed.
    pub accel_std: f64,
    /// Uniform timestamp perturbation as a fraction of the nominal sample
    /// interval (0 disables jitter, 0.2 is the working default upper bound).
    #[serde(default)]
    pub timing_jitter_frac: f64,
    /// Speed dependence of the broadband noise floor: the effective standard
    /// deviation is accel_std (v / reference_speed)^speed_exponent, modeling
    /// rolling and impact noise that grows with carrier speed. Zero keeps
    /// the noise speed-independent.
    #[serde(default)]
    pub speed_exponent: f64,
    #[serde(default = "default_reference_speed")]
    pub reference_speed_mps: f64,
    /// Optional noise bandwidth in Hz. When set, the Gaussian noise is
    /// low-pass filtered (zero-phase windowed-sinc) before being added, so
    /// synthetic sensor noise stays inside the band downstream consumers can
    /// represent. `None` keeps the noise white up to Nyquist.
    #[serde(default)]
    pub bandwidth_hz: Option<f64>,
}

fn default_reference_speed() -> f64 {
    SPEED_MEDIUM_MPS
}

impl Default for ScanNoise {
    fn default() -> Self {
        Self {
            accel_std: 0.0,
            timing_jitter_frac: 0.0,
            speed_exponent: 0.0,
            reference_speed_mps: SPEED_MEDIUM_MPS,
            bandwidth_hz: None,
        }
    }
}

impl ScanNoise {
    /// Effective noise standard deviation for a carrier at `speed_mps`.
    pub fn accel_std_at(&self, speed_mps: f64) -> f64 {
        if self.speed_exponent == 0.0 {
            self.accel_std
        } else {
            self.accel_std * (speed_mps / self.reference_speed_mps).powf(self.speed_exponent)
        }
    }
}

/// Sample the beam along `traj`, mixing in bump disturbances and noise.
/// Deterministic for a given seed.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_scan(
    model: &BeamModalModel,
    spec: &BeamSpec,
    train: &ImpulseTrain,
    traj: &Trajectory,
    profile: &RoadProfile,
    noise: &ScanNoise,
    scan_id: u64,
    vehicle_id: u32,
    seed: u64,
) -> Result<ScanRecord> {
    if noise.accel_std < 0.0 {
        return Err(Error::Invalid("noise std must be >= 0".into()));
    }
    if !(0.0..0.5).contains(&noise.timing_jitter_frac) {
        return Err(Error::Invalid("timing jitter must be in [0, 0.5)".into()));
    }
    if traj.lane_offset_m.abs() > spec.deck_width_m / 2.0 {
        return Err(Error::Domain("trajectory lane leaves the deck".into()));
    }

    let duration = traj.duration_s(spec.span_length_m);
    let dt = 1.0 / traj.sampling_rate_hz;
    let n = (duration / dt).floor() as usize + 1;
    if n < MIN_SCAN_SAMPLES {
        return Err(Error::Data(format!(
            "trajectory yields only {n} samples, need at least {MIN_SCAN_SAMPLES}"
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Timestamps first (optionally jittered on interior samples), then one
    // noise draw per sample, so the stream layout is stable.
    let mut times = Vec::with_capacity(n);
    for j in 0..n {
        let nominal = traj.start_time_s + j as f64 * dt;
        let t = if noise.timing_jitter_frac > 0.0 && j > 0 && j + 1 < n {
            nominal + rng.random_range(-noise.timing_jitter_frac..noise.timing_jitter_frac) * dt
        } else {
            nominal
        };
        times.push(t);
    }

    let noise_std = noise.accel_std_at(traj.speed_mps);
    let gauss = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let noise_series: Vec<f64> = if noise_std > 0.0 {
        let white: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
        match noise.bandwidth_hz {
            Some(bw) => lowpass_sinc(&white, traj.sampling_rate_hz, bw),
            None => white,
        }
    } else {
        vec![0.0; n]
    };
    let mut accel = Vec::with_capacity(n);
    for (j, &t) in times.iter().enumerate() {
        let x = traj.position_at(t, spec.span_length_m);
        let mut a = acceleration_at(model, spec, train, x, traj.lane_offset_m, t)?;
        a += profile.accel_at(x, traj.speed_mps);
        a += noise_series[j];
        accel.push(a);
    }

    Ok(ScanRecord {
        scan_id,
        vehicle_id,
        seed,
        trajectory: *traj,
        times_s: times,
        accel_ms2: accel,
    })
}

/// Zero-phase windowed-sinc low pass (Hamming, 41 taps), edge-padded by
/// holding the end samples.
fn lowpass_sinc(signal: &[f64], fs_hz: f64, cutoff_hz: f64) -> Vec<f64> {
    let half = 20i64;
    let fc = (cutoff_hz / fs_hz).min(0.5);
    let mut kernel = Vec::with_capacity((2 * half + 1) as usize);
    let mut sum = 0.0;
    for k in -half..=half {
        let x = k as f64;
        let sinc = if k == 0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
        };
        let window =
            0.54 + 0.46 * (std::f64::consts::PI * x / half as f64).cos();
        let w = sinc * window;
        kernel.push(w);
        sum += w;
    }
    for w in &mut kernel {
        *w /= sum;
    }
    let n = signal.len() as i64;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &w)| {
                    let idx = (i + j as i64 - half).clamp(0, n - 1) as usize;
                    w * signal[idx]
                })
                .sum()
        })
        .collect()
}

/// Repair a scan onto a uniform grid at `target_fs_hz` by linear
/// interpolation. The first sample is kept exactly; the grid extends as far
/// as the original record reaches.
pub fn resample_uniform(scan: &ScanRecord, target_fs_hz: f64) -> Result<ScanRecord> {
    if scan.times_s.len() < 2 {
        return Err(Error::Data("resampling needs at least 2 samples".into()));
    }
    if !(target_fs_hz > 0.0) {
        return Err(Error::Invalid("target sampling rate must be > 0".into()));
    }
    let t0 = scan.times_s[0];
    let t_end = *scan.times_s.last().unwrap();
    let dt = 1.0 / target_fs_hz;
    // Tolerate float rounding so an already-uniform scan keeps its last sample.
    let n = ((t_end - t0) / dt * (1.0 + 1e-12)).floor() as usize + 1;

    let mut times = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    let mut k = 0usize;
    for j in 0..n {
        let t = t0 + j as f64 * dt;
        let t = t.min(t_end);
        while k + 2 < scan.times_s.len() && scan.times_s[k + 1] < t {
            k += 1;
        }
        let (ta, tb) = (scan.times_s[k], scan.times_s[k + 1]);
        let (ya, yb) = (scan.accel_ms2[k], scan.accel_ms2[k + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        times.push(t);
        accel.push(ya + w * (yb - ya));
    }

    let mut traj = scan.trajectory;
    traj.sampling_rate_hz = target_fs_hz;
    Ok(ScanRecord {
        scan_id: scan.scan_id,
        vehicle_id: scan.vehicle_id,
        seed: scan.seed,
        trajectory: traj,
        times_s: times,
        accel_ms2: accel,
    })
}
