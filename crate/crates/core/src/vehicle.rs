//! Quarter-car suspension dynamics.
//!
//! A 2-DOF sprung/unsprung mass model turns deck acceleration histories into
//! what an accelerometer riding on the vehicle body would record. The
//! continuous model is discretized by an exact zero-order hold (matrix
//! exponential of the augmented system), which preserves the DC gain of the
//! transmissibility exactly.

use nalgebra::{Matrix4, RowVector4, SMatrix, Vector4};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quarter-car mechanical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarterCar {
    pub suspension_stiffness_npm: f64,
    pub suspension_damping_nspm: f64,
    pub sprung_mass_kg: f64,
    pub unsprung_mass_kg: f64,
    pub tire_stiffness_npm: f64,
    pub tire_damping_nspm: f64,
}

/// The four vehicle presets used for hybrid simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehiclePreset {
    V1,
    V2,
    V3,
    V4,
}

impl VehiclePreset {
    pub const ALL: [VehiclePreset; 4] = [
        VehiclePreset::V1,
        VehiclePreset::V2,
        VehiclePreset::V3,
        VehiclePreset::V4,
    ];
}

impl QuarterCar {
    /// Built-in parameter table (scaled carts V1/V2, full-scale vehicles V3/V4).
    pub fn preset(p: VehiclePreset) -> Self {
        let (ks, cs, ms, mu, kt, ct) = match p {
            VehiclePreset::V1 => (62.30, 6.0, 1.0, 0.15, 653.0, 0.0),
            VehiclePreset::V2 => (128.7, 3.86, 1.0, 0.162, 643.0, 0.0),
            VehiclePreset::V3 => (2.7e5, 6000.0, 3400.0, 350.0, 9.5e5, 300.0),
            VehiclePreset::V4 => (5700.0, 290.0, 466.5, 49.8, 1.35e5, 1400.0),
        };
        Self {
            suspension_stiffness_npm: ks,
            suspension_damping_nspm: cs,
            sprung_mass_kg: ms,
            unsprung_mass_kg: mu,
            tire_stiffness_npm: kt,
            tire_damping_nspm: ct,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sprung_mass_kg > 0.0 && self.unsprung_mass_kg > 0.0) {
            return Err(Error::Invalid("masses must be > 0".into()));
        }
        if !(self.suspension_stiffness_npm > 0.0 && self.tire_stiffness_npm > 0.0) {
            return Err(Error::Invalid("stiffnesses must be > 0".into()));
        }
        if self.suspension_damping_nspm < 0.0 || self.tire_damping_nspm < 0.0 {
            return Err(Error::Invalid("dampings must be >= 0".into()));
        }
        Ok(())
    }
}

/// State-space realization of a quarter car.
///
/// States are [x_s, dx_s, x_u, dx_u]. Two input realizations share the same
/// system matrix: `b_disp` takes base displacement and velocity (used by the
/// ZOH filter), `b_accel` takes base acceleration directly (states relative
/// to the base; used for the transfer function). The output row produces the
/// absolute sprung-mass acceleration in both cases, with zero feedthrough.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub a: Matrix4<f64>,
    pub b_disp: SMatrix<f64, 4, 2>,
    pub b_accel: Vector4<f64>,
    pub c_accel: RowVector4<f64>,
}

pub fn build_state_space(qc: &QuarterCar) -> Result<StateSpaceModel> {
    qc.validate()?;
    let ks = qc.suspension_stiffness_npm;
    let cs = qc.suspension_damping_nspm;
    let ms = qc.sprung_mass_kg;
    let mu = qc.unsprung_mass_kg;
    let kt = qc.tire_stiffness_npm;
    let ct = qc.tire_damping_nspm;

    let a = Matrix4::new(
        0.0,
        1.0,
        0.0,
        0.0,
        -ks / ms,
        -cs / ms,
        ks / ms,
        cs / ms,
        0.0,
        0.0,
        0.0,
        1.0,
        ks / mu,
        cs / mu,
        -(ks + kt) / mu,
        -(cs + ct) / mu,
    );
    let b_disp = SMatrix::<f64, 4, 2>::new(
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        kt / mu,
        ct / mu,
    );
    let b_accel = Vector4::new(0.0, -1.0, 0.0, -1.0);
    let c_accel = RowVector4::new(-ks / ms, -cs / ms, ks / ms, cs / ms);

    Ok(StateSpaceModel {
        a,
        b_disp,
        b_accel,
        c_accel,
    })
}

impl StateSpaceModel {
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// Damped natural frequencies |Im(eig)|/2pi in Hz, ascending, oscillatory
    /// eigenvalues only.
    pub fn damped_frequencies_hz(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self
            .eigenvalues()
            .iter()
            .filter(|e| e.im > 1e-9)
            .map(|e| e.im / (2.0 * std::f64::consts::PI))
            .collect();
        f.sort_by(f64::total_cmp);
        f
    }

    /// |H(f)|, base acceleration to sprung-mass acceleration.
    pub fn transfer_magnitude(&self, f_hz: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * f_hz;
        let i = Complex::new(0.0, 1.0);
        let m = self.a.map(|v| Complex::new(-v, 0.0))
            + Matrix4::identity().map(|v: f64| i * omega * v);
        let rhs = self.b_accel.map(|v| Complex::new(v, 0.0));
        let sol = m
            .lu()
            .solve(&rhs)
            .expect("iwI - A is nonsingular for stable systems at real frequencies");
        let c = self.c_accel.map(|v| Complex::new(v, 0.0));
        (c * sol)[(0, 0)].norm()
    }

    /// Run a uniformly sampled base acceleration series through the car and
    /// return the sprung-mass absolute acceleration, same length.
    ///
    /// The base acceleration is integrated twice (trapezoidal, linear detrend
    /// after each pass) to displacement/velocity inputs, then the state is
    /// propagated by the exact ZOH discretization. `max_freq_hz` is the
    /// highest frequency the caller intends to analyze; sampling below four
    /// times that is a hard error.
    ///
    /// The held-input model needs a rate well above the content (the hold
    /// error bypasses the transmissibility's zero structure and rings the
    /// wheel mode), so the series is internally upsampled to at least 20x
    /// `max_freq_hz` and the output decimated back to the caller's grid.
    pub fn filter_scan(&self, base_accel: &[f64], fs_hz: f64, max_freq_hz: f64) -> Result<Vec<f64>> {
        if base_accel.len() < 2 {
            return Err(Error::Data("filtering needs at least 2 samples".into()));
        }
        if !(fs_hz > 0.0) {
            return Err(Error::Invalid("sampling rate must be > 0".into()));
        }
        if fs_hz < 4.0 * max_freq_hz {
            return Err(Error::Invalid(format!(
                "sampling rate {fs_hz} Hz is below 4x the highest analysis frequency {max_freq_hz} Hz"
            )));
        }
        let upsample = ((20.0 * max_freq_hz / fs_hz).ceil() as usize).max(1);
        let fine: Vec<f64> = if upsample == 1 {
            base_accel.to_vec()
        } else {
            interpolate_linear(base_accel, upsample)
        };
        let dt = 1.0 / (fs_hz * upsample as f64);

        let mut vel = cumtrapz(&fine, dt);
        detrend_linear(&mut vel);
        let mut disp = cumtrapz(&vel, dt);
        detrend_linear(&mut disp);

        let (ad, bd) = self.discretize(dt);

        let mut state = Vector4::zeros();
        let mut out = Vec::with_capacity(base_accel.len());
        for k in 0..fine.len() {
            if k % upsample == 0 {
                out.push((self.c_accel * state)[(0, 0)]);
            }
            let u = nalgebra::Vector2::new(disp[k], vel[k]);
            state = ad * state + bd * u;
        }
        Ok(out)
    }

    /// Exact ZOH discretization: exp of the augmented [A B; 0 0] block.
    pub fn discretize(&self, dt_s: f64) -> (Matrix4<f64>, SMatrix<f64, 4, 2>) {
        let mut aug = SMatrix::<f64, 6, 6>::zeros();
        aug.fixed_view_mut::<4, 4>(0, 0).copy_from(&self.a);
        aug.fixed_view_mut::<4, 2>(0, 4).copy_from(&self.b_disp);
        let e = expm6(&(aug * dt_s));
        let ad = e.fixed_view::<4, 4>(0, 0).into_owned();
        let bd = e.fixed_view::<4, 2>(0, 4).into_owned();
        (ad, bd)
    }
}

/// Linear interpolation onto a grid `factor` times finer.
fn interpolate_linear(y: &[f64], factor: usize) -> Vec<f64> {
    let n = y.len();
    let mut out = Vec::with_capacity((n - 1) * factor + 1);
    for k in 0..n - 1 {
        for j in 0..factor {
            let w = j as f64 / factor as f64;
            out.push(y[k] + w * (y[k + 1] - y[k]));
        }
    }
    out.push(y[n - 1]);
    out
}

fn cumtrapz(y: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..y.len() {
        acc += 0.5 * (y[k - 1] + y[k]) * dt;
        out.push(acc);
    }
    out
}

fn detrend_linear(y: &mut [f64]) {
    let n = y.len() as f64;
    if y.len() < 2 {
        return;
    }
    // Least-squares line over the sample index.
    let mean_i = (n - 1.0) / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in y.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (v - mean_y);
        den += di * di;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    for (i, v) in y.iter_mut().enumerate() {
        *v -= mean_y + slope * (i as f64 - mean_i);
    }
}

/// Matrix exponential by Pade-13 with scaling and squaring.
fn expm6(m: &SMatrix<f64, 6, 6>) -> SMatrix<f64, 6, 6> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];

    let norm = one_norm6(m);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);

    let ident = SMatrix::<f64, 6, 6>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a2 * a4;

    let u = a * (a6 * (a6 * B[13] + a4 * B[11] + a2 * B[9])
        + a6 * B[7]
        + a4 * B[5]
        + a2 * B[3]
        + ident * B[1]);
    let v = a6 * (a6 * B[12] + a4 * B[10] + a2 * B[8])
        + a6 * B[6]
        + a4 * B[4]
        + a2 * B[2]
        + ident * B[0];

    let mut r = (v - u)
        .lu()
        .solve(&(v + u))
        .expect("Pade denominator is nonsingular");
    for _ in 0..s {
        r = r * r;
    }
    r
}

fn one_norm6(m: &SMatrix<f64, 6, 6>) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..6 {
        let mut col = 0.0;
        for i in 0..6 {
            col += m[(i, j)].abs();
        }
        best = best.max(col);
    }
    best
}
