//! Modal identification on aggregated maps: peak picking, section cuts,
//! accuracy metrics, confidence intervals, multi-lane surfaces, and
//! common-obstacle decontamination.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spacemap::SpaceFrequencyMap;

/// One picked spectral peak.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Peak {
    /// Parabolically refined frequency, Hz.
    pub frequency_hz: f64,
    /// Frequency of the grid point the peak sits on, Hz.
    pub grid_frequency_hz: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Identified mode: frequency plus per-lane absolute shape and confidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub frequency_hz: f64,
    pub prominence: f64,
    pub scan_count: u32,
    pub lanes: Vec<LaneShape>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneShape {
    pub lane_offset_m: f64,
    /// Absolute shape over grid positions, max-normalized to 1.
    pub shape: Vec<f64>,
    /// Per-position 95% confidence half-width, same normalization as `shape`.
    pub ci_half_width: Vec<f64>,
}

/// Accuracy of one identified mode against the reference model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeAccuracy {
    pub mode_index: usize,
    pub estimated_hz: f64,
    pub reference_hz: f64,
    pub freq_error_pct: f64,
    /// MAC percentage per lane, ordered like the estimate's lanes. `None`
    /// for lanes where the reference shape vanishes (torsional centerline).
    pub lane_mac_pct: Vec<Option<f64>>,
    /// Mean squared error of the first lane's shape against the reference.
    pub shape_mse: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub modes: Vec<ModeAccuracy>,
}

/// Frequency marginal: mean over present positions of each frequency row.
pub fn frequency_marginal(map: &SpaceFrequencyMap) -> Vec<f64> {
    let nx = map.grid.positions_m.len();
    let nf = map.grid.frequencies_hz.len();
    let mut out = vec![0.0; nf];
    for fi in 0..nf {
        let mut sum = 0.0;
        let mut n = 0usize;
        for xi in 0..nx {
            if map.is_present(fi, xi) {
                sum += map.value(fi, xi);
                n += 1;
            }
        }
        if n > 0 {
            out[fi] = sum / n as f64;
        }
    }
    out
}

/// Pick modal peaks from a denoised aggregate.
///
/// Local maxima of the frequency marginal whose topographic prominence is at
/// least `min_prominence_ratio` times the marginal's maximum, refined off the
/// grid by a three-point parabola, ascending in frequency, at most
/// `max_modes`. An empty list is a valid outcome, not an error.
///
/// `morlet_omega0` undoes the scale lean of L2-normalized wavelet maps: the
/// sqrt(scale) gain shifts a tone's ridge crest to f (1 - ~1/(2 omega0^2)),
/// so refined frequencies are multiplied by the exact inverse factor
/// (1 + sqrt(1 + 2/omega0^2)) / 2. Pass `None` for maps without that gain.
pub fn pick_peaks(
    denoised: &SpaceFrequencyMap,
    max_modes: usize,
    min_prominence_ratio: f64,
    morlet_omega0: Option<f64>,
) -> Vec<Peak> {
    let marginal = frequency_marginal(denoised);
    let freqs = &denoised.grid.frequencies_hz;
    let mut peaks = peaks_of_marginal(&marginal, freqs, max_modes, min_prominence_ratio);
    if let Some(omega0) = morlet_omega0 {
        let correction = 0.5 * (1.0 + (1.0 + 2.0 / (omega0 * omega0)).sqrt());
        for p in &mut peaks {
            p.frequency_hz *= correction;
        }
    }
    peaks
}

/// Peak picking on an explicit marginal (kept separate for tests).
pub fn peaks_of_marginal(
    marginal: &[f64],
    freqs: &[f64],
    max_modes: usize,
    min_prominence_ratio: f64,
) -> Vec<Peak> {
    let n = marginal.len();
    if n < 3 || max_modes == 0 {
        return Vec::new();
    }
    let global_max = marginal.iter().cloned().fold(f64::MIN, f64::max);
    if !(global_max > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence_ratio * global_max;

    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if !(marginal[i] > marginal[i - 1] && marginal[i] >= marginal[i + 1]) {
            continue;
        }
        let prominence = prominence_at(marginal, i);
        if prominence < threshold {
            continue;
        }
        let (f_ref, _) = refine_parabolic(freqs, marginal, i);
        peaks.push(Peak {
            frequency_hz: f_ref,
            grid_frequency_hz: freqs[i],
            height: marginal[i],
            prominence,
        });
    }

    // Keep the most prominent `max_modes`, then list ascending in frequency.
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    peaks.truncate(max_modes);
    peaks.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    peaks
}

/// Topographic prominence of the local maximum at `i`: height above the
/// higher of the two key saddles toward taller terrain (or the global edge
/// minima when no taller terrain exists on a side).
fn prominence_at(m: &[f64], i: usize) -> f64 {
    let peak = m[i];
    let mut left_base = peak;
    for j in (0..i).rev() {
        left_base = left_base.min(m[j]);
        if m[j] > peak {
            break;
        }
    }
    let mut right_base = peak;
    for value in m.iter().skip(i + 1) {
        right_base = right_base.min(*value);
        if *value > peak {
            break;
        }
    }
    peak - left_base.max(right_base)
}

/// Vertex of the parabola through (x, y) at indices i-1, i, i+1.
/// Returns (x_vertex, y_vertex); falls back to the grid point at the edges.
fn refine_parabolic(xs: &[f64], ys: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= xs.len() {
        return (xs[i], ys[i]);
    }
    // Work in the local coordinate u = x - x_i to keep the fit conditioned.
    let (u0, u2) = (xs[i - 1] - xs[i], xs[i + 1] - xs[i]);
    let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
    let denom = u0 * u0 * u2 - u2 * u2 * u0;
    if denom.abs() < f64::EPSILON {
        return (xs[i], y1);
    }
    let a = ((y0 - y1) * u2 - (y2 - y1) * u0) / denom;
    let b = ((y2 - y1) * u0 * u0 - (y0 - y1) * u2 * u2) / denom;
    if a >= 0.0 {
        return (xs[i], y1);
    }
    let u_v = (-b / (2.0 * a)).clamp(u0, u2);
    (xs[i] + u_v, y1 - b * b / (4.0 * a))
}

/// Section-cut the denoised aggregate at `f_hz`: the nearest grid row
/// averaged with its immediate neighbors, divided by its maximum.
pub fn extract_mode_shape(denoised: &SpaceFrequencyMap, f_hz: f64) -> Result<Vec<f64>> {
    let freqs = &denoised.grid.frequencies_hz;
    if f_hz < freqs[0] || f_hz > *freqs.last().unwrap() {
        return Err(Error::Domain(format!(
            "frequency {f_hz} Hz outside the grid range"
        )));
    }
    let fi = freqs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - f_hz).abs().total_cmp(&(b.1 - f_hz).abs()))
        .unwrap()
        .0;
    let nx = denoised.grid.positions_m.len();
    let lo = fi.saturating_sub(1);
    let hi = (fi + 1).min(freqs.len() - 1);
    let mut shape = vec![0.0; nx];
    for xi in 0..nx {
        let mut sum = 0.0;
        let mut n = 0;
        for row in lo..=hi {
            if denoised.is_present(row, xi) {
                sum += denoised.value(row, xi);
                n += 1;
            }
        }
        if n > 0 {
            shape[xi] = sum / n as f64;
        }
    }
    let max = shape.iter().cloned().fold(f64::MIN, f64::max);
    if !(max > 0.0) {
        return Err(Error::Data(format!(
            "section cut at {f_hz} Hz is identically zero"
        )));
    }
    for v in &mut shape {
        *v /= max;
    }
    Ok(shape)
}

/// Modal assurance criterion between two shapes, in percent.
pub fn mac(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid(
            "MAC needs two equal-length vectors of at least 2 entries".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("MAC of a zero-norm vector".into()));
    }
    Ok(100.0 * dot * dot / (na * nb))
}

/// Linearly resample `values` onto `n` points (used to bring a reference
/// shape onto the estimate's grid before comparing).
pub fn resample_to(values: &[f64], n: usize) -> Vec<f64> {
    assert!(values.len() >= 2 && n >= 2);
    let m = values.len();
    (0..n)
        .map(|i| {
            let pos = i as f64 * (m - 1) as f64 / (n - 1) as f64;
            let k = (pos.floor() as usize).min(m - 2);
            let w = pos - k as f64;
            values[k] + w * (values[k + 1] - values[k])
        })
        .collect()
}

/// Mean squared error between two equal-length shapes.
pub fn shape_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

/// Per-position mean and 95% confidence half-width (1.96 s / sqrt(N)) across
/// per-scan shape vectors.
pub fn confidence_interval(per_scan_shapes: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = per_scan_shapes.len();
    if n < 2 {
        return Err(Error::Invalid(
            "confidence interval needs at least 2 scans".into(),
        ));
    }
    let len = per_scan_shapes[0].len();
    if per_scan_shapes.iter().any(|s| s.len() != len) {
        return Err(Error::Invalid("shape vectors differ in length".into()));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; len];
    for s in per_scan_shapes {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut half = vec![0.0; len];
    for (j, h) in half.iter_mut().enumerate() {
        let var = per_scan_shapes
            .iter()
            .map(|s| (s[j] - mean[j]) * (s[j] - mean[j]))
            .sum::<f64>()
            / (nf - 1.0);
        *h = 1.96 * var.sqrt() / nf.sqrt();
    }
    Ok((mean, half))
}

/// Mode-shape surface over the deck assembled from per-lane cuts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surface {
    /// Transverse sample offsets, ascending, m.
    pub lateral_m: Vec<f64>,
    /// Values per lateral row, each over the longitudinal grid, max-normalized.
    pub values: Vec<Vec<f64>>,
}

/// Place per-lane shapes at their offsets and interpolate linearly across
/// the deck onto `n_lateral` rows.
pub fn assemble_3d(lane_shapes: &[(f64, Vec<f64>)], n_lateral: usize) -> Result<Surface> {
    if lane_shapes.len() < 2 {
        return Err(Error::Invalid(
            "3D assembly needs at least two lanes".into(),
        ));
    }
    let len = lane_shapes[0].1.len();
    if lane_shapes.iter().any(|(_, s)| s.len() != len) {
        return Err(Error::Invalid("lane shapes differ in length".into()));
    }
    let mut lanes: Vec<&(f64, Vec<f64>)> = lane_shapes.iter().collect();
    lanes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (y_lo, y_hi) = (lanes[0].0, lanes[lanes.len() - 1].0);
    let n_lateral = n_lateral.max(2);
    let mut lateral = Vec::with_capacity(n_lateral);
    let mut values = Vec::with_capacity(n_lateral);
    let mut max: f64 = 0.0;
    for i in 0..n_lateral {
        let y = if y_hi > y_lo {
            y_lo + (y_hi - y_lo) * i as f64 / (n_lateral - 1) as f64
        } else {
            y_lo
        };
        // Bracketing lanes for this offset.
        let mut k = 0;
        while k + 2 < lanes.len() && lanes[k + 1].0 < y {
            k += 1;
        }
        let (ya, sa) = (lanes[k].0, &lanes[k].1);
        let (yb, sb) = (lanes[k + 1].0, &lanes[k + 1].1);
        let w = if yb > ya { ((y - ya) / (yb - ya)).clamp(0.0, 1.0) } else { 0.0 };
        let row: Vec<f64> = sa
            .iter()
            .zip(sb)
            .map(|(a, b)| a + w * (b - a))
            .collect();
        for &v in &row {
            max = max.max(v.abs());
        }
        lateral.push(y);
        values.push(row);
    }
    if max > 0.0 {
        for row in &mut values {
            for v in row {
                *v /= max;
            }
        }
    }
    Ok(Surface {
        lateral_m: lateral,
        values,
    })
}

/// Where the decontamination step should look for the common obstacle
/// signature.
#[derive(Debug, Clone)]
pub enum BumpTemplate {
    /// Obstacle positions are known (expansion joints surveyed on the deck).
    Known(Vec<f64>),
    /// Detect localized spikes in the extracted component itself.
    Detect,
}

/// Remove the common fixed-obstacle content from per-scan position traces.
///
/// The traces (one per scan, all on the same position grid, typically the
/// section cut at one modal frequency) are stacked and the dominant
/// cross-scan covariance component is extracted. When its spatial signature
/// correlates above `corr_threshold` with the bump template (localized
/// spikes), the speed-dependent part of that component is removed from every
/// trace: per-scan loadings are regressed on v^2 and the fit is extrapolated
/// to zero speed, which keeps the stationary (true shape) projection intact.
/// With a single common speed the per-scan deviations from the mean loading
/// are removed instead.
pub fn decontaminate(
    traces: &[Vec<f64>],
    speeds_mps: &[f64],
    positions_m: &[f64],
    template: &BumpTemplate,
    corr_threshold: f64,
) -> Result<Vec<Vec<f64>>> {
    let s = traces.len();
    if s < 10 {
        return Err(Error::Invalid(
            "decontamination needs at least 10 scans".into(),
        ));
    }
    if speeds_mps.len() != s {
        return Err(Error::Invalid("one speed per trace is required".into()));
    }
    let p = traces[0].len();
    if traces.iter().any(|t| t.len() != p) || positions_m.len() != p {
        return Err(Error::Invalid("traces and grid differ in length".into()));
    }

    // Cross-scan covariance of the centered traces.
    let mut mean = vec![0.0; p];
    for t in traces {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= s as f64;
    }
    let mut centered = DMatrix::<f64>::zeros(s, p);
    for (i, t) in traces.iter().enumerate() {
        for j in 0..p {
            centered[(i, j)] = t[j] - mean[j];
        }
    }
    let cov = centered.transpose() * &centered / (s as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut u: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let unorm = (u.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if unorm == 0.0 {
        return Ok(traces.to_vec());
    }
    for v in &mut u {
        *v /= unorm;
    }

    let tmpl = match template {
        BumpTemplate::Known(bumps) => known_template(positions_m, bumps),
        BumpTemplate::Detect => detected_spike_template(&u),
    };
    let corr = abs_correlation(&u, &tmpl);
    if !(corr > corr_threshold) {
        return Ok(traces.to_vec());
    }

    // Orient the component along the template so loadings are comparable.
    let dot: f64 = u.iter().zip(&tmpl).map(|(a, b)| a * b).sum();
    if dot < 0.0 {
        for v in &mut u {
            *v = -*v;
        }
    }

    let loadings: Vec<f64> = traces
        .iter()
        .map(|t| t.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let v2: Vec<f64> = speeds_mps.iter().map(|v| v * v).collect();
    let v2_mean = v2.iter().sum::<f64>() / s as f64;
    let v2_var = v2.iter().map(|v| (v - v2_mean) * (v - v2_mean)).sum::<f64>();

    let mut out = Vec::with_capacity(s);
    if v2_var > 1e-12 * v2_mean * v2_mean * s as f64 {
        // Speed-dependent removal: alpha_i = alpha_0 + beta v_i^2 + noise;
        // the v=0 intercept is the clean shape's projection and stays.
        let a_mean = loadings.iter().sum::<f64>() / s as f64;
        let beta = loadings
            .iter()
            .zip(&v2)
            .map(|(a, v)| (a - a_mean) * (v - v2_mean))
            .sum::<f64>()
            / v2_var;
        for (t, &vi2) in traces.iter().zip(&v2) {
            let remove = beta * vi2;
            out.push(t.iter().zip(&u).map(|(a, b)| a - remove * b).collect());
        }
    } else {
        // Degenerate single-speed pool: only the cross-scan variance along
        // the component can be removed.
        let a_mean = loadings.iter().sum::<f64>() / s as f64;
        for (t, &al) in traces.iter().zip(&loadings) {
            let remove = al - a_mean;
            out.push(t.iter().zip(&u).map(|(a, b)| a - remove * b).collect());
        }
    }
    Ok(out)
}

/// Smoothed indicator of known obstacle positions on the grid.
fn known_template(positions_m: &[f64], bumps: &[f64]) -> Vec<f64> {
    let dx = if positions_m.len() >= 2 {
        positions_m[1] - positions_m[0]
    } else {
        1.0
    };
    let radius = 2.0 * dx;
    positions_m
        .iter()
        .map(|&x| {
            bumps
                .iter()
                .map(|&b| {
                    let d = (x - b).abs();
                    if d < radius {
                        0.5 * (1.0 + (std::f64::consts::PI * d / radius).cos())
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

/// Keep only the spiky cells of a component: entries beyond 3 robust sigmas
/// of the component's absolute values.
fn detected_spike_template(u: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let med = mags[mags.len() / 2];
    let mut devs: Vec<f64> = u.iter().map(|v| (v.abs() - med).abs()).collect();
    devs.sort_by(f64::total_cmp);
    let mad = devs[devs.len() / 2].max(f64::MIN_POSITIVE);
    let cut = med + 3.0 * 1.4826 * mad;
    u.iter()
        .map(|&v| if v.abs() > cut { v } else { 0.0 })
        .collect()
}

fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).abs()
    }
}

/// Deterministic sample of `k` distinct indices out of `n`.
pub fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(k.min(n));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn mac_identities() {
        let a: Vec<f64> = (0..50).map(|i| (PI * i as f64 / 49.0).sin()).collect();
        assert!((mac(&a, &a).unwrap() - 100.0).abs() < 1e-9);
        let doubled: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        assert!((mac(&a, &doubled).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn mac_of_absolute_first_and_second_shapes() {
        // Direct summation oracle on the 200-point uniform grid. The
        // continuous value is 100 (4/(3 pi))^2 / (1/4) = 72.04.
        let n = 200;
        let a: Vec<f64> = (0..n)
            .map(|i| (PI * i as f64 / (n - 1) as f64).sin().abs())
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * i as f64 / (n - 1) as f64).sin().abs())
            .collect();
        let v = mac(&a, &b).unwrap();
        assert!((v - 72.0).abs() < 0.5, "got {v}");
    }

    #[test]
    fn mac_rejects_zero_norm_and_mismatched_lengths() {
        assert!(mac(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(mac(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn peak_picking_finds_a_single_bump() {
        let freqs: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 0.4).collect();
        let marginal: Vec<f64> = freqs
            .iter()
            .map(|&f| (-((f - 12.0) * (f - 12.0)) / 4.0).exp())
            .collect();
        let peaks = peaks_of_marginal(&marginal, &freqs, 10, 0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].frequency_hz - 12.0).abs() < 0.05);
    }

    #[test]
    fn peak_picking_is_scale_invariant() {
        let freqs: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.2).collect();
        let marginal: Vec<f64> = freqs
            .iter()
            .map(|&f| {
                (-((f - 6.0) * (f - 6.0)) / 2.0).exp()
                    + 0.4 * (-((f - 21.0) * (f - 21.0)) / 3.0).exp()
            })
            .collect();
        let a = peaks_of_marginal(&marginal, &freqs, 10, 0.1);
        let scaled: Vec<f64> = marginal.iter().map(|v| v * 123.4).collect();
        let b = peaks_of_marginal(&scaled, &freqs, 10, 0.1);
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.frequency_hz, pb.frequency_hz);
        }
    }

    #[test]
    fn faint_peaks_fall_below_the_relative_threshold() {
        let freqs: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.2).collect();
        let marginal: Vec<f64> = freqs
            .iter()
            .map(|&f| {
                (-((f - 6.0) * (f - 6.0)) / 2.0).exp()
                    + 0.05 * (-((f - 30.0) * (f - 30.0)) / 3.0).exp()
            })
            .collect();
        let peaks = peaks_of_marginal(&marginal, &freqs, 10, 0.1);
        assert_eq!(peaks.len(), 1);
        let peaks_low = peaks_of_marginal(&marginal, &freqs, 10, 0.01);
        assert_eq!(peaks_low.len(), 2);
    }

    #[test]
    fn no_peaks_is_an_empty_list_not_an_error() {
        let freqs: Vec<f64> = (0..50).map(|i| 1.0 + i as f64).collect();
        let flat = vec![0.0; 50];
        assert!(peaks_of_marginal(&flat, &freqs, 10, 0.1).is_empty());
    }

    #[test]
    fn parabolic_refinement_recovers_off_grid_tone() {
        // A smooth hill sampled on a coarse grid: the refined vertex lands
        // much closer to the true center than the grid step.
        let freqs: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 1.0).collect();
        let true_f = 17.37;
        let marginal: Vec<f64> = freqs
            .iter()
            .map(|&f| (-((f - true_f) * (f - true_f)) / 18.0).exp())
            .collect();
        let peaks = peaks_of_marginal(&marginal, &freqs, 5, 0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].frequency_hz - true_f).abs() < 0.08, "{}", peaks[0].frequency_hz);
    }

    #[test]
    fn confidence_interval_of_identical_shapes_is_zero() {
        let shape: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let shapes = vec![shape.clone(); 8];
        let (mean, half) = confidence_interval(&shapes).unwrap();
        for (m, s) in mean.iter().zip(&shape) {
            assert!((m - s).abs() < 1e-14);
        }
        // Zero spread up to the rounding of the mean itself.
        assert!(half.iter().all(|&h| h < 1e-14));
    }

    #[test]
    fn confidence_interval_needs_two_scans() {
        assert!(confidence_interval(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ci_coverage_on_pure_noise_shapes() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let truth: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64 * 0.07).sin()).collect();
        let shapes: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                truth
                    .iter()
                    .map(|&v| v + rng.random_range(-0.3..0.3))
                    .collect()
            })
            .collect();
        let (mean, half) = confidence_interval(&shapes).unwrap();
        let covered = truth
            .iter()
            .enumerate()
            .filter(|(j, &v)| (mean[*j] - v).abs() <= half[*j])
            .count();
        assert!(
            covered >= 90,
            "true mean inside the CI at only {covered}/100 positions"
        );
    }

    #[test]
    fn surface_of_duplicated_lane_is_flat_across_the_deck() {
        let shape: Vec<f64> = (0..60).map(|i| (PI * i as f64 / 59.0).sin()).collect();
        let surface =
            assemble_3d(&[(0.0, shape.clone()), (0.24, shape.clone())], 7).unwrap();
        for row in &surface.values {
            for (a, b) in row.iter().zip(&surface.values[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn torsional_surface_has_a_centerline_trough() {
        let n = 60;
        let along: Vec<f64> = (0..n).map(|i| (PI * i as f64 / (n - 1) as f64).sin()).collect();
        let edge = 0.3175;
        let lanes: Vec<(f64, Vec<f64>)> = [-0.5 * edge, 0.0, 0.5 * edge]
            .iter()
            .map(|&y| {
                let amp = (2.0 * y / 0.635f64).abs().max(0.02);
                (y, along.iter().map(|v| v * amp).collect())
            })
            .collect();
        let surface = assemble_3d(&lanes, 9).unwrap();
        let row_max = |r: &Vec<f64>| r.iter().cloned().fold(0.0f64, f64::max);
        let center = &surface.values[4];
        let first = &surface.values[0];
        let last = &surface.values[8];
        assert!(row_max(center) <= 0.2 * row_max(first).max(row_max(last)));
        assert!((row_max(first) - row_max(last)).abs() < 0.1);
    }

    #[test]
    fn single_lane_cannot_make_a_surface() {
        assert!(assemble_3d(&[(0.0, vec![1.0, 2.0])], 5).is_err());
    }

    #[test]
    fn decontamination_leaves_clean_pools_alone() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let p = 80;
        let positions: Vec<f64> = (0..p).map(|i| 3.06 * i as f64 / (p - 1) as f64).collect();
        let truth: Vec<f64> = positions.iter().map(|&x| (PI * x / 3.06).sin()).collect();
        let traces: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                truth
                    .iter()
                    .map(|&v| v + rng.random_range(-0.05..0.05))
                    .collect()
            })
            .collect();
        let speeds: Vec<f64> = (0..40)
            .map(|i| [0.095, 0.1138, 0.1453][i % 3])
            .collect();
        let out = decontaminate(&traces, &speeds, &positions, &BumpTemplate::Detect, 0.8).unwrap();
        // Mean shape barely moves: nothing common and spiky to remove.
        let mean_of = |ts: &[Vec<f64>]| -> Vec<f64> {
            let mut m = vec![0.0; p];
            for t in ts {
                for (a, b) in m.iter_mut().zip(t) {
                    *a += b / ts.len() as f64;
                }
            }
            m
        };
        let before = mean_of(&traces);
        let after = mean_of(&out);
        let rel = (shape_mse(&before, &after).sqrt())
            / (before.iter().map(|v| v * v).sum::<f64>() / p as f64).sqrt();
        assert!(rel < 0.02, "mean shape moved by {rel}");
    }

    #[test]
    fn decontamination_removes_speed_scaled_spikes() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let p = 100;
        let positions: Vec<f64> = (0..p).map(|i| 3.06 * i as f64 / (p - 1) as f64).collect();
        let truth: Vec<f64> = positions
            .iter()
            .map(|&x| (3.0 * PI * x / 3.06).sin().abs())
            .collect();
        let bump_cells = [15usize, 35, 50, 70, 88];
        let speeds: Vec<f64> = (0..60)
            .map(|i| [0.095, 0.1138, 0.1453][i % 3])
            .collect();
        let traces: Vec<Vec<f64>> = speeds
            .iter()
            .map(|&v| {
                let mut t: Vec<f64> = truth
                    .iter()
                    .map(|&s| s + rng.random_range(-0.02..0.02))
                    .collect();
                for &c in &bump_cells {
                    t[c] += 40.0 * v * v; // ~0.36..0.84 across the speed pool
                }
                t
            })
            .collect();
        let bump_positions: Vec<f64> = bump_cells.iter().map(|&c| positions[c]).collect();
        let out = decontaminate(
            &traces,
            &speeds,
            &positions,
            &BumpTemplate::Known(bump_positions),
            0.8,
        )
        .unwrap();
        let mean_of = |ts: &[Vec<f64>]| -> Vec<f64> {
            let mut m = vec![0.0; p];
            for t in ts {
                for (a, b) in m.iter_mut().zip(t) {
                    *a += b / ts.len() as f64;
                }
            }
            m
        };
        let mse_before = shape_mse(&mean_of(&traces), &truth);
        let mse_after = shape_mse(&mean_of(&out), &truth);
        assert!(
            mse_after <= 0.3 * mse_before,
            "MSE before {mse_before}, after {mse_after}"
        );
    }

    #[test]
    fn decontamination_needs_ten_scans() {
        let traces = vec![vec![0.0; 20]; 9];
        let speeds = vec![0.1; 9];
        let positions: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(decontaminate(&traces, &speeds, &positions, &BumpTemplate::Detect, 0.8).is_err());
    }

    #[test]
    fn subset_sampling_is_deterministic_and_distinct() {
        let a = sample_without_replacement(100, 20, 7);
        let b = sample_without_replacement(100, 20, 7);
        let c = sample_without_replacement(100, 20, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
    }

    proptest::proptest! {
        #[test]
        fn mac_is_bounded_and_scale_invariant(
            scale in 0.1f64..50.0,
            phase in 0usize..7,
        ) {
            let a: Vec<f64> = (0..64).map(|i| ((i + phase) as f64 * 0.3).sin().abs() + 0.01).collect();
            let b: Vec<f64> = (0..64).map(|i| (i as f64 * 0.17).cos().abs() + 0.01).collect();
            let m = mac(&a, &b).unwrap();
            proptest::prop_assert!((0.0..=100.0 + 1e-9).contains(&m));
            let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
            let m2 = mac(&scaled, &b).unwrap();
            proptest::prop_assert!((m - m2).abs() < 1e-6);
        }
    }
}
