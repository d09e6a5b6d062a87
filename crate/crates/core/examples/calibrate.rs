//! Calibration harness for the preset configurations. Not part of the
//! shipped surface; run stages via `cargo run --release --example calibrate --
//! <stage>` with stages: masses, speeds, hybrid, stats.

use crowdscan_core::config::ExperimentConfig;
use crowdscan_core::modal::{frequency_marginal, peaks_of_marginal};
use crowdscan_core::pipeline::{
    aggregate_by_lane, identify, plan_scans, simulate_scan, transform_scan,
};
use crowdscan_core::spacemap::{remove_noise_bed, AggregateMap, SpaceFrequencyMap};

const MODES_JSON_UNIT: &str = r#"{"modes": [
    {"frequency_hz": 5.51, "kind": "V1"},
    {"frequency_hz": 9.93, "kind": "V2"},
    {"frequency_hz": 12.34, "kind": "T1"},
    {"frequency_hz": 20.26, "kind": "V3"},
    {"frequency_hz": 24.99, "kind": "T2"}
]}"#;

fn modes_json_with_masses(masses: &[f64; 5]) -> String {
    let kinds = ["V1", "V2", "T1", "V3", "T2"];
    let freqs = [5.51, 9.93, 12.34, 20.26, 24.99];
    let entries: Vec<String> = (0..5)
        .map(|i| {
            format!(
                r#"{{"frequency_hz": {}, "kind": "{}", "modal_mass_kg": {}}}"#,
                freqs[i], kinds[i], masses[i]
            )
        })
        .collect();
    format!(r#"{{"modes": [{}]}}"#, entries.join(","))
}

fn config(modes_json: &str, plan: &str, road: &str, noise: &str, vehicle_on: bool, seed: u64) -> ExperimentConfig {
    let presets = if vehicle_on {
        r#"[
        {"suspension_stiffness_npm": 2.7e5, "suspension_damping_nspm": 6000.0, "sprung_mass_kg": 3400.0, "unsprung_mass_kg": 350.0, "tire_stiffness_npm": 9.5e5, "tire_damping_nspm": 300.0},
        {"suspension_stiffness_npm": 5700.0, "suspension_damping_nspm": 290.0, "sprung_mass_kg": 466.5, "unsprung_mass_kg": 49.8, "tire_stiffness_npm": 1.35e5, "tire_damping_nspm": 1400.0}
    ]"#
    } else {
        "[]"
    };
    let text = format!(
        r#"{{
        "seed": {seed},
        "beam": {{"span_length_m": 3.06, "deck_width_m": 0.635, "lane_offsets_m": [0.24, 0.12, 0.0]}},
        "modes": {modes_json},
        "excitation": {{"rate_hz": 1.5, "magnitude_range_ns": [0.5, 1.5]}},
        "scan_plan": [{plan}],
        "noise": {noise},
        "road": {road},
        "vehicle": {{"enabled": {vehicle_on}, "presets": {presets}}},
        "cwt": {{"omega0": 22.0, "freq_min_hz": 4.0, "freq_max_hz": 40.0, "n_frequencies": 201}},
        "grid": {{"n_positions": 200}},
        "identify": {{"max_modes": 10, "min_prominence_ratio": 0.1, "min_report_hz": 4.5}}
    }}"#
    );
    ExperimentConfig::from_json(&text).expect("calibration config")
}

fn run_maps(cfg: &ExperimentConfig) -> Vec<SpaceFrequencyMap> {
    let plans = plan_scans(cfg);
    plans
        .iter()
        .map(|p| {
            let scan = simulate_scan(cfg, p).expect("simulate");
            transform_scan(cfg, &scan).expect("transform")
        })
        .collect()
}

fn marginal_summary(cfg: &ExperimentConfig, agg: &AggregateMap, label: &str) {
    let den = remove_noise_bed(agg);
    let marg = frequency_marginal(&den);
    let freqs = &den.grid.frequencies_hz;
    let max = marg.iter().cloned().fold(0.0f64, f64::max);
    println!("== {label}: marginal max {max:.5}");
    let peaks = peaks_of_marginal(&marg, freqs, 10, 0.0001);
    for p in &peaks {
        if p.prominence > 0.01 * max {
            println!(
                "  raw peak f={:.3} height={:.5} prom={:.5} prom/max={:.3}",
                p.frequency_hz,
                p.height,
                p.prominence,
                p.prominence / max
            );
        }
    }
    let ident = identify(cfg, std::slice::from_ref(agg)).expect("identify");
    println!(
        "  picked: {:?}",
        ident
            .peaks
            .iter()
            .map(|p| format!("{:.2}", p.frequency_hz))
            .collect::<Vec<_>>()
    );
    if let Some(acc) = &ident.accuracy {
        for m in &acc.modes {
            println!(
                "  mode {} ref {:.2} est {:.3} err {:.2}% mac(edge) {:?} mse {:.5}",
                m.mode_index + 1,
                m.reference_hz,
                m.estimated_hz,
                m.freq_error_pct,
                m.lane_mac_pct[0].map(|v| (v * 100.0).round() / 100.0),
                m.shape_mse
            );
        }
    }
}

fn main() {
    let stage = std::env::args().nth(1).unwrap_or_else(|| "masses".into());
    match stage.as_str() {
        "masses" => stage_masses(),
        "speeds" => stage_speeds(),
        "hybrid" => stage_hybrid(),
        "shape" => stage_shape(),
        other => panic!("unknown stage {other}"),
    }
}

fn stage_shape() {
    let modes = modes_json_with_masses(&MASSES);
    let cfg = config(
        &modes,
        r#"{"count": 40, "speed": "medium", "lane_offset_m": 0.24}"#,
        r#"{"bumps": []}"#,
        r#"{"accel_std": 0.0}"#,
        false,
        1,
    );
    let maps = run_maps(&cfg);
    let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
    let ident = identify(&cfg, &aggs).unwrap();
    println!(
        "peaks: {:?}",
        ident.peaks.iter().map(|p| p.frequency_hz).collect::<Vec<_>>()
    );
    let est = &ident.modes[0];
    println!("mode-1 shape (every 8th cell):");
    let shape = &est.lanes[0].shape;
    let grid = cfg.global_grid();
    for i in (0..shape.len()).step_by(8) {
        let x = grid.positions_m[i];
        let truth = (std::f64::consts::PI * x / 3.06).sin().abs();
        println!("  x={x:.2} est={:.3} ref={truth:.3}", shape[i]);
    }
    if let Some(acc) = &ident.accuracy {
        for m in &acc.modes {
            println!(
                "mode {}: err {:.2}% mac {:?}",
                m.mode_index + 1,
                m.freq_error_pct,
                m.lane_mac_pct[0]
            );
        }
    }
}

fn stage_masses() {
    // Unit masses, clean scans: measure the marginal heights at the modal rows.
    let cfg = config(
        MODES_JSON_UNIT,
        r#"{"count": 40, "speed": "medium", "lane_offset_m": 0.24}"#,
        r#"{"bumps": []}"#,
        r#"{"accel_std": 0.0}"#,
        false,
        11,
    );
    let maps = run_maps(&cfg);
    let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
    let den = remove_noise_bed(&aggs[0]);
    let marg = frequency_marginal(&den);
    let freqs = &den.grid.frequencies_hz;

    let targets = [1.0, 0.8, 0.55, 0.3, 0.18];
    let mode_freqs = [5.51, 9.93, 12.34, 20.26, 24.99];
    let mut heights = [0.0; 5];
    for (i, &f0) in mode_freqs.iter().enumerate() {
        let fi = freqs
            .iter()
            .position(|&f| (f - f0).abs() / f0 < 0.01)
            .unwrap_or_else(|| {
                freqs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - f0).abs().total_cmp(&(b.1 - f0).abs()))
                    .unwrap()
                    .0
            });
        // local max around the row
        heights[i] = (fi.saturating_sub(2)..(fi + 3).min(marg.len()))
            .map(|j| marg[j])
            .fold(0.0f64, f64::max);
    }
    println!("unit-mass marginal heights: {heights:?}");
    let h1 = heights[0];
    let suggested: Vec<f64> = (0..5)
        .map(|i| (heights[i] / h1) / targets[i])
        .collect();
    println!("suggested masses (for targets {targets:?}): {suggested:?}");
}

// Current candidate parameters; iterate here.
const MASSES: [f64; 5] = [1.0, 0.914, 0.366, 2.74, 1.5];
const ROAD: &str = r#"{"bumps": []}"#;
const NOISE: &str =
    r#"{"accel_std": 40.0, "timing_jitter_frac": 0.1, "speed_exponent": 4.0, "bandwidth_hz": 30.0}"#;

fn stage_speeds() {
    let modes = modes_json_with_masses(&MASSES);
    for (label, plan) in [
        ("slow80", r#"{"count": 80, "speed": "slow", "lane_offset_m": 0.24}"#),
        ("medium80", r#"{"count": 80, "speed": "medium", "lane_offset_m": 0.24}"#),
        ("fast80", r#"{"count": 80, "speed": "fast", "lane_offset_m": 0.24}"#),
        (
            "mixed240",
            r#"{"count": 80, "speed": "slow", "lane_offset_m": 0.24},
               {"count": 80, "speed": "medium", "lane_offset_m": 0.24},
               {"count": 80, "speed": "fast", "lane_offset_m": 0.24}"#,
        ),
    ] {
        let cfg = config(&modes, plan, ROAD, NOISE, false, 2);
        let maps = run_maps(&cfg);
        let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
        marginal_summary(&cfg, &aggs[0], label);
    }
}

fn stage_hybrid() {
    let modes = modes_json_with_masses(&MASSES);
    {
        let cfg = config(
            &modes,
            r#"{"count": 30, "speed": "slow", "lane_offset_m": 0.24}"#,
            ROAD,
            r#"{"accel_std": 0.0}"#,
            true,
            2,
        );
        let maps = run_maps(&cfg);
        let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
        marginal_summary(&cfg, &aggs[0], "hybrid-slow30-NOISELESS");
    }
    for (label, plan) in [
        (
            "hybrid-mixed240",
            r#"{"count": 80, "speed": "slow", "lane_offset_m": 0.24},
               {"count": 80, "speed": "medium", "lane_offset_m": 0.24},
               {"count": 80, "speed": "fast", "lane_offset_m": 0.24}"#,
        ),
        ("hybrid-slow80", r#"{"count": 80, "speed": "slow", "lane_offset_m": 0.24}"#),
    ] {
        let cfg = config(&modes, plan, ROAD, NOISE, true, 2);
        let maps = run_maps(&cfg);
        let aggs = aggregate_by_lane(&cfg, &maps).unwrap();
        marginal_summary(&cfg, &aggs[0], label);
    }
}
