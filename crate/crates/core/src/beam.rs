//! Analytic ground-truth model of the laboratory beam.
//!
//! The beam is described by a parametric modal model: each mode has a natural
//! frequency, damping ratio, modal mass, and a closed-form shape function
//! (sinusoidal vertical bending or torsion). Responses to trains of random
//! impulses are evaluated by exact damped-SDOF superposition, so the module
//! doubles as a data generator and as a verification oracle for the rest of
//! the pipeline: every synthetic signal has a known closed form.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clear span between supports of the default laboratory beam, in meters.
pub const DEFAULT_SPAN_LENGTH_M: f64 = 3.06;
/// Deck width of the default laboratory beam, in meters.
pub const DEFAULT_DECK_WIDTH_M: f64 = 0.635;

/// Reference natural frequencies of the five-mode default model, in Hz.
pub const REFERENCE_FREQUENCIES_HZ: [f64; 5] = [5.51, 9.93, 12.34, 20.26, 24.99];

/// Beam geometry and instrumented lanes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub span_length_m: f64,
    pub deck_width_m: f64,
    /// Transverse lane positions measured from the deck centerline, in meters.
    pub lane_offsets_m: Vec<f64>,
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self {
            span_length_m: DEFAULT_SPAN_LENGTH_M,
            deck_width_m: DEFAULT_DECK_WIDTH_M,
            lane_offsets_m: vec![0.24, 0.12, 0.0],
        }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_length_m > 0.0) {
            return Err(Error::Invalid("span_length_m must be > 0".into()));
        }
        if !(self.deck_width_m > 0.0) {
            return Err(Error::Invalid("deck_width_m must be > 0".into()));
        }
        for &y in &self.lane_offsets_m {
            if y.abs() > self.deck_width_m / 2.0 {
                return Err(Error::Invalid(format!(
                    "lane offset {y} m is outside the half deck width {}",
                    self.deck_width_m / 2.0
                )));
            }
        }
        Ok(())
    }

    /// True when (x, y) lies on the deck.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.span_length_m).contains(&x) && y.abs() <= self.deck_width_m / 2.0
    }
}

/// Shape function family of one mode: sinusoidal vertical bending of a given
/// order, or torsion (the same sinusoid scaled linearly across the deck,
/// antisymmetric about the centerline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ShapeKind {
    Vertical(u32),
    Torsional(u32),
}

impl ShapeKind {
    pub fn order(self) -> u32 {
        match self {
            ShapeKind::Vertical(k) | ShapeKind::Torsional(k) => k,
        }
    }

    pub fn is_torsional(self) -> bool {
        matches!(self, ShapeKind::Torsional(_))
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeKind::Vertical(k) => write!(f, "V{k}"),
            ShapeKind::Torsional(k) => write!(f, "T{k}"),
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = s.split_at(1.min(s.len()));
        let order: u32 = tail
            .parse()
            .map_err(|_| Error::Invalid(format!("bad shape kind `{s}`")))?;
        if order == 0 {
            return Err(Error::Invalid(format!("shape order must be >= 1 in `{s}`")));
        }
        match head {
            "V" | "v" => Ok(ShapeKind::Vertical(order)),
            "T" | "t" => Ok(ShapeKind::Torsional(order)),
            _ => Err(Error::Invalid(format!("bad shape kind `{s}`"))),
        }
    }
}

impl TryFrom<String> for ShapeKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ShapeKind> for String {
    fn from(k: ShapeKind) -> String {
        k.to_string()
    }
}

/// One structural mode of the beam.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub frequency_hz: f64,
    /// Fraction of critical damping. The rig's damping is unreported; 0.01 is
    /// the working default.
    #[serde(default = "default_damping")]
    pub damping_ratio: f64,
    #[serde(default = "default_mass")]
    pub modal_mass_kg: f64,
    pub kind: ShapeKind,
}

fn default_damping() -> f64 {
    0.01
}

fn default_mass() -> f64 {
    1.0
}

impl Mode {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    pub fn omega_damped(&self) -> f64 {
        self.omega() * (1.0 - self.damping_ratio * self.damping_ratio).sqrt()
    }
}

/// Modal description of the beam: the ground truth every estimate is
/// judged against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamModalModel {
    pub modes: Vec<Mode>,
}

impl BeamModalModel {
    /// Five-mode model with the reference frequencies and the default
    /// vertical/torsional assignment {V1, V2, T1, V3, T2}.
    pub fn reference() -> Self {
        let kinds = [
            ShapeKind::Vertical(1),
            ShapeKind::Vertical(2),
            ShapeKind::Torsional(1),
            ShapeKind::Vertical(3),
            ShapeKind::Torsional(2),
        ];
        let modes = REFERENCE_FREQUENCIES_HZ
            .iter()
            .zip(kinds)
            .map(|(&frequency_hz, kind)| Mode {
                frequency_hz,
                damping_ratio: 0.01,
                modal_mass_kg: 1.0,
                kind,
            })
            .collect();
        Self { modes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Invalid("model must have at least one mode".into()));
        }
        for pair in self.modes.windows(2) {
            if pair[1].frequency_hz <= pair[0].frequency_hz {
                return Err(Error::Invalid(
                    "mode frequencies must be strictly increasing".into(),
                ));
            }
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.frequency_hz > 0.0) {
                return Err(Error::Invalid(format!("mode {i}: frequency must be > 0")));
            }
            if !(m.damping_ratio > 0.0 && m.damping_ratio < 1.0) {
                return Err(Error::Invalid(format!(
                    "mode {i}: damping ratio must be in (0, 1)"
                )));
            }
            if !(m.modal_mass_kg > 0.0) {
                return Err(Error::Invalid(format!("mode {i}: modal mass must be > 0")));
            }
        }
        Ok(())
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.modes.last().map(|m| m.frequency_hz).unwrap_or(0.0)
    }
}

/// One impulsive load applied to the deck.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Impulse {
    pub time_s: f64,
    pub position_m: f64,
    pub lateral_m: f64,
    /// Impulse strength in N*s.
    pub magnitude_ns: f64,
}

/// A time-ordered train of impulses, the ambient excitation of one scan.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ImpulseTrain {
    pub impulses: Vec<Impulse>,
}

impl ImpulseTrain {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Draw a Poisson train: exponential inter-arrival times at `rate_hz`,
    /// positions uniform along the span, lateral positions uniform across the
    /// deck, magnitudes uniform over `magnitude_range_ns`.
    pub fn poisson<R: Rng>(
        spec: &BeamSpec,
        rate_hz: f64,
        magnitude_range_ns: (f64, f64),
        duration_s: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(rate_hz > 0.0) {
            return Err(Error::Invalid("impulse rate must be > 0".into()));
        }
        let (p_min, p_max) = magnitude_range_ns;
        if !(p_min > 0.0 && p_max >= p_min) {
            return Err(Error::Invalid("impulse magnitude range must be positive".into()));
        }
        let gap = Exp::new(rate_hz).map_err(|e| Error::Invalid(e.to_string()))?;
        let along = Uniform::new_inclusive(0.0, spec.span_length_m)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let across = Uniform::new_inclusive(-spec.deck_width_m / 2.0, spec.deck_width_m / 2.0)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let strength = Uniform::new_inclusive(p_min, p_max)
            .map_err(|e| Error::Invalid(e.to_string()))?;

        let mut impulses = Vec::new();
        let mut t = gap.sample(rng);
        while t < duration_s {
            impulses.push(Impulse {
                time_s: t,
                position_m: along.sample(rng),
                lateral_m: across.sample(rng),
                magnitude_ns: strength.sample(rng),
            });
            t += gap.sample(rng);
        }
        Ok(Self { impulses })
    }

    pub fn validate(&self, spec: &BeamSpec) -> Result<()> {
        for pair in self.impulses.windows(2) {
            if pair[1].time_s < pair[0].time_s {
                return Err(Error::Invalid("impulse times must be nondecreasing".into()));
            }
        }
        for imp in &self.impulses {
            if !(0.0..=spec.span_length_m).contains(&imp.position_m) {
                return Err(Error::Invalid("impulse position outside span".into()));
            }
            if !(imp.magnitude_ns > 0.0) {
                return Err(Error::Invalid("impulse magnitude must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Merge two trains, keeping times nondecreasing.
    pub fn concat(&self, other: &ImpulseTrain) -> ImpulseTrain {
        let mut impulses: Vec<Impulse> = self
            .impulses
            .iter()
            .chain(other.impulses.iter())
            .copied()
            .collect();
        impulses.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        ImpulseTrain { impulses }
    }
}

/// Shape value of mode `mode_idx` at deck point (x, y).
///
/// Vertical order k evaluates to sin(k pi x / L); torsional order k to
/// sin(k pi x / L) * (2 y / deck width), zero on the centerline.
pub fn eval_mode_shape(
    model: &BeamModalModel,
    spec: &BeamSpec,
    mode_idx: usize,
    x_m: f64,
    y_m: f64,
) -> Result<f64> {
    if !spec.contains(x_m, y_m) {
        return Err(Error::Domain(format!(
            "point (x={x_m}, y={y_m}) is outside the deck"
        )));
    }
    let mode = model
        .modes
        .get(mode_idx)
        .ok_or_else(|| Error::Invalid(format!("no mode with index {mode_idx}")))?;
    let along = sin_pi(mode.kind.order() as f64 * x_m / spec.span_length_m);
    Ok(match mode.kind {
        ShapeKind::Vertical(_) => along,
        ShapeKind::Torsional(_) => along * (2.0 * y_m / spec.deck_width_m),
    })
}

/// sin(pi u) with exact zeros at integer u, so mode nodes vanish exactly.
fn sin_pi(u: f64) -> f64 {
    let n = u.round();
    let r = u - n;
    let s = (PI * r).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

/// Modal displacement coordinate q_n(t) under an impulse train: superposition
/// of damped SDOF impulse responses
/// q_n(t) = sum_i phi_n(x_i, y_i) p_i / (m_n w_d) e^(-zeta w dt) sin(w_d dt).
pub fn modal_displacement(
    model: &BeamModalModel,
    spec: &BeamSpec,
    train: &ImpulseTrain,
    mode_idx: usize,
    t_s: f64,
) -> Result<f64> {
    modal_response(model, spec, train, mode_idx, t_s, ResponseKind::Displacement)
}

/// Modal acceleration coordinate, obtained by exact double differentiation of
/// the displacement closed form (no numerical differencing).
pub fn modal_acceleration(
    model: &BeamModalModel,
    spec: &BeamSpec,
    train: &ImpulseTrain,
    mode_idx: usize,
    t_s: f64,
) -> Result<f64> {
    modal_response(model, spec, train, mode_idx, t_s, ResponseKind::Acceleration)
}

#[derive(Clone, Copy)]
enum ResponseKind {
    Displacement,
    Acceleration,
}

fn modal_response(
    model: &BeamModalModel,
    spec: &BeamSpec,
    train: &ImpulseTrain,
    mode_idx: usize,
    t_s: f64,
    kind: ResponseKind,
) -> Result<f64> {
    if t_s < 0.0 {
        return Err(Error::Domain("time must be >= 0".into()));
    }
    let mode = model
        .modes
        .get(mode_idx)
        .ok_or_else(|| Error::Invalid(format!("no mode with index {mode_idx}")))?;
    let omega = mode.omega();
    let omega_d = mode.omega_damped();
    let zeta = mode.damping_ratio;

    let mut sum = 0.0;
    for imp in &train.impulses {
        let dt = t_s - imp.time_s;
        if dt < 0.0 {
            // Times are nondecreasing, so nothing later contributes either.
            break;
        }
        let shape = eval_mode_shape(model, spec, mode_idx, imp.position_m, imp.lateral_m)?;
        let amp = shape * imp.magnitude_ns / (mode.modal_mass_kg * omega_d);
        let decay = (-zeta * omega * dt).exp();
        let (s, c) = (omega_d * dt).sin_cos();
        sum += match kind {
            ResponseKind::Displacement => amp * decay * s,
            ResponseKind::Acceleration => {
                // d^2/dt^2 of e^(-zeta w dt) sin(w_d dt), in closed form.
                amp * decay
                    * ((zeta * zeta * omega * omega - omega_d * omega_d) * s
                        - 2.0 * zeta * omega * omega_d * c)
            }
        };
    }
    Ok(sum)
}

/// Vertical deck acceleration at (x, y, t): sum over modes of
/// phi_n(x, y) * q''_n(t).
pub fn acceleration_at(
    model: &BeamModalModel,
    spec: &BeamSpec,
    train: &ImpulseTrain,
    x_m: f64,
    y_m: f64,
    t_s: f64,
) -> Result<f64> {
    if !spec.contains(x_m, y_m) {
        return Err(Error::Domain(format!(
            "point (x={x_m}, y={y_m}) is outside the deck"
        )));
    }
    let mut total = 0.0;
    for n in 0..model.modes.len() {
        let shape = eval_mode_shape(model, spec, n, x_m, y_m)?;
        if shape == 0.0 {
            continue;
        }
        total += shape * modal_acceleration(model, spec, train, n, t_s)?;
    }
    Ok(total)
}
