//! On-disk formats: scan CSV files, binary map/aggregate files with a JSON
//! header line, report bundles, and the run manifest.
//!
//! Floats in text formats are written with Rust's shortest-roundtrip
//! formatting, so parsing a file back yields bit-identical values. Binary
//! payloads are little-endian.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::Identification;
use crate::scan::{Direction, ScanRecord, Trajectory};
use crate::spacemap::{AggregateMap, GlobalGrid, SpaceFrequencyMap};

pub const SCAN_MAGIC: &str = "# crowdscan scan v1";
const MAP_MAGIC: &str = "SFMAP1";
const AGG_MAGIC: &str = "SFAGG1";

// ---------------------------------------------------------------------------
// Scan files
// ---------------------------------------------------------------------------

pub fn write_scan(path: &Path, scan: &ScanRecord) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{SCAN_MAGIC}")?;
    writeln!(w, "# scan_id: {}", scan.scan_id)?;
    writeln!(w, "# vehicle_id: {}", scan.vehicle_id)?;
    writeln!(w, "# lane_offset_m: {}", scan.trajectory.lane_offset_m)?;
    writeln!(w, "# speed_mps: {}", scan.trajectory.speed_mps)?;
    let dir = match scan.trajectory.direction {
        Direction::Forward => "forward",
        Direction::Reverse => "reverse",
    };
    writeln!(w, "# direction: {dir}")?;
    writeln!(w, "# start_time_s: {}", scan.trajectory.start_time_s)?;
    writeln!(w, "# sampling_rate_hz: {}", scan.trajectory.sampling_rate_hz)?;
    writeln!(w, "# seed: {}", scan.seed)?;
    writeln!(w, "t,a")?;
    for (t, a) in scan.times_s.iter().zip(&scan.accel_ms2) {
        writeln!(w, "{t},{a}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan(path: &Path) -> Result<ScanRecord> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty scan file".into()))?;
    if first.trim() != SCAN_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a scan file (bad magic line)",
            path.display()
        )));
    }

    let mut header = std::collections::HashMap::new();
    let mut times = Vec::new();
    let mut accel = Vec::new();
    let mut in_data = false;
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line == "t,a" {
            in_data = true;
            continue;
        }
        if in_data {
            let (t, a) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad sample row `{line}`")))?;
            times.push(parse_f64(t)?);
            accel.push(parse_f64(a)?);
        }
    }

    let get = |k: &str| -> Result<&String> {
        header
            .get(k)
            .ok_or_else(|| Error::Format(format!("scan header is missing `{k}`")))
    };
    let direction = match get("direction")?.as_str() {
        "forward" => Direction::Forward,
        "reverse" => Direction::Reverse,
        other => return Err(Error::Format(format!("bad direction `{other}`"))),
    };
    Ok(ScanRecord {
        scan_id: parse_u64(get("scan_id")?)?,
        vehicle_id: parse_u64(get("vehicle_id")?)? as u32,
        seed: parse_u64(get("seed")?)?,
        trajectory: Trajectory {
            lane_offset_m: parse_f64(get("lane_offset_m")?)?,
            speed_mps: parse_f64(get("speed_mps")?)?,
            start_time_s: parse_f64(get("start_time_s")?)?,
            sampling_rate_hz: parse_f64(get("sampling_rate_hz")?)?,
            direction,
        },
        times_s: times,
        accel_ms2: accel,
    })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad float `{s}`")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad integer `{s}`")))
}

// ---------------------------------------------------------------------------
// Map files: one JSON header line, then a raw little-endian payload.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MapHeader {
    format: String,
    scan_id: u64,
    lane_offset_m: f64,
    speed_mps: f64,
    scan_count: u32,
    normalized: bool,
    grid: GlobalGrid,
}

pub fn write_map(path: &Path, map: &SpaceFrequencyMap) -> Result<()> {
    let header = MapHeader {
        format: MAP_MAGIC.into(),
        scan_id: map.scan_id,
        lane_offset_m: map.lane_offset_m,
        speed_mps: map.speed_mps,
        scan_count: map.scan_count,
        normalized: map.normalized,
        grid: map.grid.clone(),
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for v in &map.values {
        w.write_all(&v.to_le_bytes())?;
    }
    let bits: Vec<u8> = map.present.iter().map(|&p| p as u8).collect();
    w.write_all(&bits)?;
    w.flush()?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<SpaceFrequencyMap> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: MapHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("{}: bad map header: {e}", path.display())))?;
    if header.format != MAP_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a map file",
            path.display()
        )));
    }
    let n = header.grid.n_cells();
    let values = read_f64s(&mut r, n)?;
    let mut bits = vec![0u8; n];
    r.read_exact(&mut bits)
        .map_err(|_| Error::Format("map payload truncated".into()))?;
    Ok(SpaceFrequencyMap {
        grid: header.grid,
        lane_offset_m: header.lane_offset_m,
        scan_id: header.scan_id,
        scan_count: header.scan_count,
        normalized: header.normalized,
        speed_mps: header.speed_mps,
        values,
        present: bits.into_iter().map(|b| b != 0).collect(),
    })
}

#[derive(Serialize, Deserialize)]
struct AggregateHeader {
    format: String,
    lane_offset_m: f64,
    scan_count: u32,
    grid: GlobalGrid,
}

pub fn write_aggregate(path: &Path, agg: &AggregateMap) -> Result<()> {
    let header = AggregateHeader {
        format: AGG_MAGIC.into(),
        lane_offset_m: agg.lane_offset_m,
        scan_count: agg.scan_count,
        grid: agg.grid.clone(),
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for v in &agg.sum {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &agg.sum_sq {
        w.write_all(&v.to_le_bytes())?;
    }
    for c in &agg.counts {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<AggregateMap> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: AggregateHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("{}: bad aggregate header: {e}", path.display())))?;
    if header.format != AGG_MAGIC {
        return Err(Error::Format(format!(
            "{}: not an aggregate file",
            path.display()
        )));
    }
    let n = header.grid.n_cells();
    let sum = read_f64s(&mut r, n)?;
    let sum_sq = read_f64s(&mut r, n)?;
    let mut counts = vec![0u32; n];
    let mut buf = [0u8; 4];
    for c in &mut counts {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("aggregate payload truncated".into()))?;
        *c = u32::from_le_bytes(buf);
    }
    AggregateMap::from_parts(
        header.grid,
        header.lane_offset_m,
        header.scan_count,
        sum,
        sum_sq,
        counts,
    )
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("payload truncated".into()))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Write the identification result as JSON, a human-readable table, and
/// plot-ready CSV tables. Returns the paths written.
pub fn write_report_bundle(
    dir: &Path,
    ident: &Identification,
    positions_m: &[f64],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(ident).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    written.push(json_path);

    let txt_path = dir.join("report.txt");
    fs::write(&txt_path, render_text_report(ident))?;
    written.push(txt_path);

    let marg_path = dir.join("marginal.csv");
    {
        let mut w = BufWriter::new(fs::File::create(&marg_path)?);
        writeln!(w, "frequency_hz,magnitude")?;
        for (f, m) in ident.marginal_frequencies_hz.iter().zip(&ident.marginal) {
            writeln!(w, "{f},{m}")?;
        }
        w.flush()?;
    }
    written.push(marg_path);

    for (k, mode) in ident.modes.iter().enumerate() {
        for lane in &mode.lanes {
            let path = dir.join(format!(
                "mode_{}_lane_{}.csv",
                k + 1,
                lane_tag(lane.lane_offset_m)
            ));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            writeln!(w, "position_m,shape,ci_half_width")?;
            for (j, &x) in positions_m.iter().enumerate() {
                writeln!(w, "{x},{},{}", lane.shape[j], lane.ci_half_width[j])?;
            }
            w.flush()?;
            written.push(path);
        }
        // Gridded surface when at least two lanes exist.
        if mode.lanes.len() >= 2 {
            let lanes: Vec<(f64, Vec<f64>)> = mode
                .lanes
                .iter()
                .map(|l| (l.lane_offset_m, l.shape.clone()))
                .collect();
            if let Ok(surface) = crate::modal::assemble_3d(&lanes, 21) {
                let path = dir.join(format!("surface_mode_{}.csv", k + 1));
                let mut w = BufWriter::new(fs::File::create(&path)?);
                writeln!(w, "position_m,lateral_m,value")?;
                for (yi, &y) in surface.lateral_m.iter().enumerate() {
                    for (xi, &x) in positions_m.iter().enumerate() {
                        writeln!(w, "{x},{y},{}", surface.values[yi][xi])?;
                    }
                }
                w.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn lane_tag(offset: f64) -> String {
    format!("{:+.3}", offset)
        .replace('+', "p")
        .replace('-', "m")
        .replace('.', "_")
}

fn render_text_report(ident: &Identification) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "identification lane: {} m", ident.identification_lane_m);
    let _ = writeln!(out, "peaks found: {}", ident.peaks.len());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<6} {:>12} {:>12} {:>12}",
        "mode", "freq [Hz]", "height", "prominence"
    );
    for (k, p) in ident.peaks.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<6} {:>12.3} {:>12.4} {:>12.4}",
            k + 1,
            p.frequency_hz,
            p.height,
            p.prominence
        );
    }
    if let Some(acc) = &ident.accuracy {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<6} {:>12} {:>12} {:>10} {:>24}",
            "ref", "ref [Hz]", "est [Hz]", "err [%]", "MAC per lane [%]"
        );
        for m in &acc.modes {
            let macs: Vec<String> = m
                .lane_mac_pct
                .iter()
                .map(|v| match v {
                    Some(p) => format!("{p:.2}"),
                    None => "-".to_string(),
                })
                .collect();
            let _ = writeln!(
                out,
                "{:<6} {:>12.3} {:>12.3} {:>10.2} {:>24}",
                m.mode_index + 1,
                m.reference_hz,
                m.estimated_hz,
                m.freq_error_pct,
                macs.join(" ")
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Wall-clock duration; informational only, not covered by the
    /// determinism contract.
    pub wall_ms: u64,
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(config_text: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            stages: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
