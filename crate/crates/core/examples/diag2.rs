//! Dev diagnostic: per-frame lock/decode internals for one scenario.

use banksim_core::presets::{self, PresetKind};
use banksim_core::scenario::{Scenario, ScenarioName};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let burst: u32 = args.first().and_then(|s| s.parse().ok()).unwrap_or(64);
    let name = match args.get(1).map(String::as_str) {
        Some("net") => ScenarioName::NetworkLoad,
        Some("cloud") => ScenarioName::Cloud,
        Some("local") => ScenarioName::LocalLoad,
        _ => ScenarioName::Isolation,
    };
    let preset = if name == ScenarioName::Cloud {
        PresetKind::Cloud
    } else {
        PresetKind::Private
    };
    let mut sc = Scenario::new(name, preset, burst, 42).unwrap();
    sc.repetitions = 10;
    let out = sc.run().unwrap();
    println!(
        "scenario {} burst {} period {}ns jitter scale {} sigma {}",
        out.report.scenario,
        burst,
        out.report.period_ns,
        sc.noise.rtt_jitter.scale_ns,
        sc.noise.rtt_jitter.sigma
    );
    for (i, f) in out.report.frames.iter().enumerate() {
        let phase_rel = f.locked_phase_ps as i64 - f.start_ps as i64;
        let period_err =
            (f.locked_period_ps as f64 - sc.channel.period.as_ps() as f64) / 1e3;
        println!(
            "frame {i}: locked={} pre_matches={:2} acc={:.3} baseline={:7.1}ns phase_rel={:+9.1}ns period_err={:+6.2}ns",
            f.locked,
            f.preamble_matches,
            f.accuracy,
            f.baseline_ps as f64 / 1e3,
            phase_rel as f64 / 1e3,
            period_err,
        );
    }
    // Distribution summary of the calibration windows.
    let presets_jitter = presets::ambient_jitter(preset);
    let _ = presets_jitter;
}
