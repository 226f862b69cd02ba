//! Machine-readable run reports and their file exports. Every reported
//! number is recomputable from the exported trace files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discovery::DiscoveryResult;
use crate::error::Result;
use crate::simkernel::SimTime;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PercentileSet {
    pub p50_ns: f64,
    pub p90_ns: f64,
    pub p99_ns: f64,
    pub p99_9_ns: f64,
    pub p99_99_ns: f64,
}

impl PercentileSet {
    pub const LEVELS: [f64; 5] = [50.0, 90.0, 99.0, 99.9, 99.99];

    pub fn from_ps(values: &[u64]) -> Self {
        assert_eq!(values.len(), 5);
        PercentileSet {
            p50_ns: values[0] as f64 / 1e3,
            p90_ns: values[1] as f64 / 1e3,
            p99_ns: values[2] as f64 / 1e3,
            p99_9_ns: values[3] as f64 / 1e3,
            p99_99_ns: values[4] as f64 / 1e3,
        }
    }
}

/// One frame's transmission record: everything needed to re-decode it from
/// the exported probe trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameRecord {
    pub sent_hex: String,
    /// Decoded bits, '0'/'1'/'?' per position (preamble included).
    pub decoded: String,
    pub locked: bool,
    pub preamble_matches: u32,
    /// Ground-truth first-bit time (for the latency-gap metric).
    pub start_ps: u64,
    /// Calibration slice of the probe trace (issue-time bounds).
    pub calib_window_ps: (u64, u64),
    /// Acquisition search slice of the probe trace.
    pub search_window_ps: (u64, u64),
    pub baseline_ps: u64,
    pub locked_phase_ps: u64,
    pub locked_period_ps: u64,
    pub accuracy: f64,
    pub capacity_bps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepPoint {
    pub burst: u32,
    pub period_ns: f64,
    pub capacity_bps: f64,
    pub capacity_std_bps: f64,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub latency_gap_ns: f64,
    pub channel_traffic_gbps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StealthPoint {
    pub burst: u32,
    /// Sender-origin memory traffic during the all-ones transmission.
    pub channel_traffic_gbps: f64,
    /// Receiver probe traffic on the same bank (reported separately).
    pub probe_traffic_gbps: f64,
    pub local_percentiles: PercentileSet,
    pub local_sample_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StealthSection {
    /// Channel inactive: the monitoring baseline.
    pub off_percentiles: PercentileSet,
    pub off_sample_count: usize,
    pub per_burst: Vec<StealthPoint>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Counters {
    pub reads_issued: u64,
    pub responses_received: u64,
    pub faults: u64,
    pub bank_accounting_ok: bool,
    pub served_bytes_by_origin: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub schema: u32,
    pub scenario: String,
    pub preset: String,
    pub seed: u64,
    pub burst_size: u32,
    pub period_ns: f64,
    pub payload_bits: usize,
    pub repetitions: usize,

    pub capacity_bps: f64,
    pub capacity_std_bps: f64,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub latency_gap_ns: f64,
    pub locked_frames: u32,
    pub channel_traffic_gbps: f64,

    pub frames: Vec<FrameRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stealth: Option<StealthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discovery: Option<DiscoveryResult>,

    pub counters: Counters,
    pub trace_files: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(crate::error::Error::Config(format!(
                "unknown format '{other}' (expected json|csv)"
            ))),
        }
    }
}

/// Write the report (and its plot-ready CSV side files) into `dir`.
/// Returns the file paths written.
pub fn export(report: &RunReport, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    std::fs::write(&json_path, report.to_json())?;
    written.push(json_path);

    if format == ExportFormat::Csv {
        if let Some(sweep) = &report.sweep {
            let path = dir.join("sweep.csv");
            let mut out = String::from(
                "burst,period_ns,capacity_bps,capacity_std_bps,accuracy,accuracy_std,latency_gap_ns,channel_traffic_gbps\n",
            );
            for p in sweep {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    p.burst,
                    p.period_ns,
                    p.capacity_bps,
                    p.capacity_std_bps,
                    p.accuracy,
                    p.accuracy_std,
                    p.latency_gap_ns,
                    p.channel_traffic_gbps
                ));
            }
            std::fs::write(&path, out)?;
            written.push(path);
        }
        if let Some(stealth) = &report.stealth {
            let path = dir.join("stealth.csv");
            let mut out = String::from(
                "burst,channel_traffic_gbps,probe_traffic_gbps,p50_ns,p90_ns,p99_ns,p99_9_ns,p99_99_ns\n",
            );
            let off = &stealth.off_percentiles;
            out.push_str(&format!(
                "0,0,0,{},{},{},{},{}\n",
                off.p50_ns, off.p90_ns, off.p99_ns, off.p99_9_ns, off.p99_99_ns
            ));
            for p in &stealth.per_burst {
                let q = &p.local_percentiles;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    p.burst,
                    p.channel_traffic_gbps,
                    p.probe_traffic_gbps,
                    q.p50_ns,
                    q.p90_ns,
                    q.p99_ns,
                    q.p99_9_ns,
                    q.p99_99_ns
                ));
            }
            std::fs::write(&path, out)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Complementary CDF points of a round-trip sample set, one row per
/// distinct latency (plot-ready).
pub fn write_ccdf_csv(path: &Path, rtts_ps: &[u64]) -> Result<()> {
    let mut sorted = rtts_ps.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out = String::from("rtt_ns,ccdf\n");
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let ccdf = (sorted.len() - j) as f64 / n;
        out.push_str(&format!("{},{}\n", v as f64 / 1e3, ccdf));
        i = j;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

pub fn gbps(bytes_per_sec: f64) -> f64 {
    bytes_per_sec / 1e9
}

pub fn window_bandwidth(bytes: u64, window: (SimTime, SimTime)) -> f64 {
    bytes as f64 / (window.1 - window.0).as_secs_f64()
}
