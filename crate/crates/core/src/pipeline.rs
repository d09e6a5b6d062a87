//! Stage orchestration: scan planning, per-scan simulation and transform,
//! per-lane aggregation, and identification. Every stage is a pure function
//! of (config, index), so stages parallelize trivially and results never
//! depend on worker count or scheduling.

use serde::{Deserialize, Serialize};

use crate::beam::ImpulseTrain;
use crate::config::ExperimentConfig;
use crate::cwt::cwt_with_id;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::modal::{
    extract_mode_shape, frequency_marginal, mac, pick_peaks, shape_mse, AccuracyReport, LaneShape,
    ModeAccuracy, ModeEstimate, Peak,
};
use crate::scan::{resample_uniform, synthesize_scan, ScanRecord, Trajectory};
use crate::spacemap::{
    normalize_scan_map, remove_noise_bed, to_space_frequency, AggregateMap, SpaceFrequencyMap,
};
use crate::vehicle::build_state_space;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Seed substreams, one per stochastic stage.
const STREAM_TRAIN: u64 = 1;
const STREAM_SCAN: u64 = 2;
const STREAM_VEHICLE: u64 = 3;

/// Number of distinct phones in the virtual fleet.
const VEHICLE_POOL: u64 = 6;

/// One planned trip, fully determined by the config and its index.
#[derive(Debug, Clone, Copy)]
pub struct PlannedScan {
    pub scan_id: u64,
    pub group: usize,
    pub trajectory: Trajectory,
    pub vehicle_id: u32,
    pub seed: u64,
}

pub fn plan_scans(cfg: &ExperimentConfig) -> Vec<PlannedScan> {
    let mut plans = Vec::with_capacity(cfg.total_scans() as usize);
    let mut scan_id = 0u64;
    for (gi, group) in cfg.scan_plan.iter().enumerate() {
        for k in 0..group.count {
            let trajectory = Trajectory {
                lane_offset_m: group.lane_offset_m,
                speed_mps: group.speed.speed_mps(),
                start_time_s: 0.0,
                sampling_rate_hz: group.sampling_rate_hz,
                direction: group.direction.direction_for(k),
            };
            plans.push(PlannedScan {
                scan_id,
                group: gi,
                trajectory,
                vehicle_id: (scan_id % VEHICLE_POOL) as u32,
                seed: derive_seed(cfg.seed, STREAM_SCAN, scan_id),
            });
            scan_id += 1;
        }
    }
    plans
}

/// Simulate one planned trip: draw its impulse train and sample the beam.
pub fn simulate_scan(cfg: &ExperimentConfig, plan: &PlannedScan) -> Result<ScanRecord> {
    let duration = plan.trajectory.duration_s(cfg.beam.span_length_m);
    let mut train_rng =
        ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TRAIN, plan.scan_id));
    let train = ImpulseTrain::poisson(
        &cfg.beam,
        cfg.excitation.rate_hz,
        cfg.excitation.magnitude_range_ns,
        duration,
        &mut train_rng,
    )?;
    synthesize_scan(
        &cfg.modes,
        &cfg.beam,
        &train,
        &plan.trajectory,
        &cfg.road,
        &cfg.noise,
        plan.scan_id,
        plan.vehicle_id,
        plan.seed,
    )
}

/// Quarter-car preset index assigned to a scan (uniform over the pool,
/// seeded, independent of scheduling).
pub fn vehicle_pick(cfg: &ExperimentConfig, scan_id: u64, pool_len: usize) -> usize {
    (derive_seed(cfg.seed, STREAM_VEHICLE, scan_id) % pool_len as u64) as usize
}

/// Transform one scan into a normalized space-frequency map:
/// resample -> optional quarter-car filter -> pad + CWT -> regrid -> normalize.
pub fn transform_scan(cfg: &ExperimentConfig, scan: &ScanRecord) -> Result<SpaceFrequencyMap> {
    let fs = scan.trajectory.sampling_rate_hz;
    let uniform = resample_uniform(scan, fs)?;

    let signal = if cfg.vehicle.enabled {
        let pool = cfg.vehicle_pool();
        let pick = vehicle_pick(cfg, scan.scan_id, pool.len());
        let ssm = build_state_space(&pool[pick])?;
        ssm.filter_scan(&uniform.accel_ms2, fs, cfg.max_analysis_freq_hz())?
    } else {
        uniform.accel_ms2.clone()
    };

    let params = cfg.cwt.morlet_params();
    let tf = cwt_with_id(&signal, fs, &params, scan.scan_id)?;
    let grid = cfg.global_grid();
    let mut map = to_space_frequency(&tf, &uniform.trajectory, &grid)?;
    normalize_scan_map(&mut map)?;
    Ok(map)
}

/// Group maps per lane (order given by `cfg.lanes()`) and aggregate each lane.
pub fn aggregate_by_lane(
    cfg: &ExperimentConfig,
    maps: &[SpaceFrequencyMap],
) -> Result<Vec<AggregateMap>> {
    let lanes = cfg.lanes();
    let mut aggs: Vec<Option<AggregateMap>> = vec![None; lanes.len()];
    for map in maps {
        let li = lanes
            .iter()
            .position(|&l| (l - map.lane_offset_m).abs() < 1e-9)
            .ok_or_else(|| {
                Error::GridMismatch(format!(
                    "map lane {} m is not in the scan plan",
                    map.lane_offset_m
                ))
            })?;
        match &mut aggs[li] {
            Some(agg) => agg.add_map(map)?,
            None => {
                let mut agg = AggregateMap::new(map.grid.clone(), map.lane_offset_m);
                agg.add_map(map)?;
                aggs[li] = Some(agg);
            }
        }
    }
    Ok(aggs.into_iter().flatten().collect())
}

/// Everything the identification stage produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Identification {
    /// Lane the peaks were picked on.
    pub identification_lane_m: f64,
    pub peaks: Vec<Peak>,
    pub modes: Vec<ModeEstimate>,
    pub accuracy: Option<AccuracyReport>,
    /// Frequency marginal of the identification lane's denoised aggregate.
    pub marginal: Vec<f64>,
    pub marginal_frequencies_hz: Vec<f64>,
}

/// Identify modes from per-lane aggregates.
///
/// Peaks are picked on the noise-bed-removed marginal of the first aggregate
/// (the identification lane): median subtraction plus clamping wipes out the
/// diffuse bed and even flattens full-span modal rows by a common factor, so
/// peak contrast sharpens while relative heights survive. Section cuts come
/// from the raw aggregate mean instead — a mode row spans the whole deck, so
/// subtracting its spatial median would clip the shape itself.
pub fn identify(cfg: &ExperimentConfig, aggregates: &[AggregateMap]) -> Result<Identification> {
    if aggregates.is_empty() {
        return Err(Error::Data("no aggregates to identify from".into()));
    }
    let lead_denoised = remove_noise_bed(&aggregates[0]);
    let mut peaks = pick_peaks(
        &lead_denoised,
        cfg.identify.max_modes,
        cfg.identify.min_prominence_ratio,
        Some(cfg.cwt.omega0),
    );
    // Sub-band content (vehicle body modes, obstacle bands) is excluded from
    // the report; it already had its say through the prominence threshold.
    if let Some(floor) = cfg.identify.min_report_hz {
        peaks.retain(|p| p.frequency_hz >= floor);
    }

    let means: Vec<SpaceFrequencyMap> = aggregates.iter().map(|a| a.mean_map()).collect();
    let nx = lead_denoised.grid.positions_m.len();
    let mut modes = Vec::with_capacity(peaks.len());
    for peak in &peaks {
        let mut lanes = Vec::with_capacity(means.len());
        for (agg, mean) in aggregates.iter().zip(&means) {
            // A lane sitting on a node line of this mode has a vanishing cut;
            // report it as a zero shape rather than failing the stage.
            let shape = match extract_mode_shape(mean, peak.frequency_hz) {
                Ok(s) => s,
                Err(Error::Data(_)) => vec![0.0; nx],
                Err(e) => return Err(e),
            };
            lanes.push(LaneShape {
                lane_offset_m: mean.lane_offset_m,
                ci_half_width: row_ci_half_width(agg, mean, peak.frequency_hz, &shape),
                shape,
            });
        }
        modes.push(ModeEstimate {
            frequency_hz: peak.frequency_hz,
            prominence: peak.prominence,
            scan_count: aggregates[0].scan_count,
            lanes,
        });
    }

    let accuracy = if cfg.identify.use_reference {
        Some(score_against_reference(cfg, &modes)?)
    } else {
        None
    };

    Ok(Identification {
        identification_lane_m: lead_denoised.lane_offset_m,
        peaks,
        modes,
        accuracy,
        marginal: frequency_marginal(&lead_denoised),
        marginal_frequencies_hz: lead_denoised.grid.frequencies_hz.clone(),
    })
}

/// 95% half-width of the section-cut row from the aggregate's cell moments,
/// in the same normalization as the extracted shape.
fn row_ci_half_width(
    agg: &AggregateMap,
    mean: &SpaceFrequencyMap,
    f_hz: f64,
    shape: &[f64],
) -> Vec<f64> {
    let freqs = &mean.grid.frequencies_hz;
    let fi = freqs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - f_hz).abs().total_cmp(&(b.1 - f_hz).abs()))
        .unwrap()
        .0;
    let nx = mean.grid.positions_m.len();
    let std = agg.cell_std();
    // Scale of the row before max-normalization.
    let mut row_max = 0.0f64;
    for xi in 0..nx {
        if mean.is_present(fi, xi) {
            row_max = row_max.max(mean.value(fi, xi));
        }
    }
    let _ = shape;
    (0..nx)
        .map(|xi| {
            let i = fi * nx + xi;
            let n = agg.counts[i] as f64;
            if n >= 2.0 && row_max > 0.0 {
                1.96 * std[i] / n.sqrt() / row_max
            } else {
                0.0
            }
        })
        .collect()
}

/// Absolute reference shape of a reference mode on one lane, max-normalized;
/// `None` when the lane sits on a torsional node line.
pub fn reference_shape(
    cfg: &ExperimentConfig,
    mode_idx: usize,
    lane_offset_m: f64,
) -> Option<Vec<f64>> {
    let grid = cfg.global_grid();
    let mut shape: Vec<f64> = grid
        .positions_m
        .iter()
        .map(|&x| {
            crate::beam::eval_mode_shape(&cfg.modes, &cfg.beam, mode_idx, x, lane_offset_m)
                .map(f64::abs)
                .unwrap_or(0.0)
        })
        .collect();
    let max = shape.iter().cloned().fold(0.0f64, f64::max);
    if max <= 1e-9 {
        return None;
    }
    for v in &mut shape {
        *v /= max;
    }
    Some(shape)
}

/// Relative matching window between a picked peak and a reference frequency.
const MATCH_WINDOW: f64 = 0.06;

fn score_against_reference(
    cfg: &ExperimentConfig,
    modes: &[ModeEstimate],
) -> Result<AccuracyReport> {
    let mut report = AccuracyReport::default();
    for (mi, reference) in cfg.modes.modes.iter().enumerate() {
        let fref = reference.frequency_hz;
        let best = modes
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.frequency_hz - fref)
                    .abs()
                    .total_cmp(&(b.1.frequency_hz - fref).abs())
            })
            .filter(|(_, m)| (m.frequency_hz - fref).abs() / fref <= MATCH_WINDOW);
        let Some((_, est)) = best else { continue };

        let mut lane_mac_pct = Vec::with_capacity(est.lanes.len());
        let mut mse = f64::NAN;
        for (li, lane) in est.lanes.iter().enumerate() {
            let estimate_alive = lane.shape.iter().any(|&v| v != 0.0);
            match reference_shape(cfg, mi, lane.lane_offset_m) {
                Some(ref_shape) if estimate_alive => {
                    let m = mac(&lane.shape, &ref_shape)?;
                    if li == 0 {
                        mse = shape_mse(&lane.shape, &ref_shape);
                    }
                    lane_mac_pct.push(Some(m));
                }
                _ => lane_mac_pct.push(None),
            }
        }
        report.modes.push(ModeAccuracy {
            mode_index: mi,
            estimated_hz: est.frequency_hz,
            reference_hz: fref,
            freq_error_pct: 100.0 * (est.frequency_hz - fref).abs() / fref,
            lane_mac_pct,
            shape_mse: mse,
        });
    }
    Ok(report)
}

/// Run simulate + transform + aggregate + identify in memory, sequentially.
/// The CLI parallelizes the per-scan stages; results are identical.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Identification> {
    let plans = plan_scans(cfg);
    let mut maps = Vec::with_capacity(plans.len());
    for plan in &plans {
        let scan = simulate_scan(cfg, plan)?;
        maps.push(transform_scan(cfg, &scan)?);
    }
    let aggs = aggregate_by_lane(cfg, &maps)?;
    identify(cfg, &aggs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
            "seed": 7,
            "beam": {"span_length_m": 3.06, "deck_width_m": 0.635, "lane_offsets_m": [0.24]},
            "modes": {"modes": [
                {"frequency_hz": 5.51, "kind": "V1"},
                {"frequency_hz": 12.34, "kind": "T1"}
            ]},
            "excitation": {"rate_hz": 2.0, "magnitude_range_ns": [0.5, 1.5]},
            "scan_plan": [
                {"count": 6, "speed": "medium", "lane_offset_m": 0.24},
                {"count": 2, "speed": "slow", "lane_offset_m": 0.0}
            ],
            "cwt": {"freq_min_hz": 2.0, "freq_max_hz": 20.0, "n_frequencies": 41},
            "grid": {"n_positions": 60}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn planning_is_deterministic_and_alternates_direction() {
        let cfg = small_config();
        let plans = plan_scans(&cfg);
        assert_eq!(plans.len(), 8);
        assert_eq!(plans[0].trajectory.direction, crate::scan::Direction::Forward);
        assert_eq!(plans[1].trajectory.direction, crate::scan::Direction::Reverse);
        let again = plan_scans(&cfg);
        assert!(plans
            .iter()
            .zip(&again)
            .all(|(a, b)| a.seed == b.seed && a.scan_id == b.scan_id));
    }

    #[test]
    fn simulation_and_transform_are_reproducible() {
        let cfg = small_config();
        let plans = plan_scans(&cfg);
        let s1 = simulate_scan(&cfg, &plans[0]).unwrap();
        let s2 = simulate_scan(&cfg, &plans[0]).unwrap();
        assert_eq!(s1.accel_ms2, s2.accel_ms2);
        let m1 = transform_scan(&cfg, &s1).unwrap();
        let m2 = transform_scan(&cfg, &s2).unwrap();
        assert_eq!(m1.values, m2.values);
    }

    #[test]
    fn lane_grouping_respects_plan_order() {
        let cfg = small_config();
        let plans = plan_scans(&cfg);
        let maps: Vec<_> = plans
            .iter()
            .map(|p| transform_scan(&cfg, &simulate_scan(&cfg, p).unwrap()).unwrap())
            .collect();
        let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
        assert_eq!(aggs.len(), 2);
        assert!((aggs[0].lane_offset_m - 0.24).abs() < 1e-12);
        assert_eq!(aggs[0].scan_count, 6);
        assert_eq!(aggs[1].scan_count, 2);
    }

    #[test]
    fn tiny_pipeline_finds_the_strong_mode() {
        let cfg = small_config();
        let result = run_pipeline(&cfg).unwrap();
        assert!(!result.peaks.is_empty());
        let nearest = result
            .peaks
            .iter()
            .map(|p| (p.frequency_hz - 5.51).abs() / 5.51)
            .fold(f64::MAX, f64::min);
        assert!(nearest < 0.05, "closest peak {nearest} away");
        assert!(result.accuracy.is_some());
    }

    #[test]
    fn vehicle_assignment_is_seed_stable() {
        let mut cfg = small_config();
        cfg.vehicle.enabled = true;
        let picks: Vec<usize> = (0..20).map(|i| vehicle_pick(&cfg, i, 4)).collect();
        let again: Vec<usize> = (0..20).map(|i| vehicle_pick(&cfg, i, 4)).collect();
        assert_eq!(picks, again);
        assert!(picks.iter().any(|&p| p != picks[0]));
    }
}
