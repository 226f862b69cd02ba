//! Dev calibration harness: prints the acceptance-relevant observables for
//! the current preset constants. Groups: iso, local, net, cloud, stealth.

use banksim_core::presets::{self, PresetKind};
use banksim_core::scenario::{Scenario, ScenarioName};

fn channel_row(name: ScenarioName, preset: PresetKind, burst: u32, seed: u64, reps: usize) {
    let mut sc = Scenario::new(name, preset, burst, seed).unwrap();
    sc.repetitions = reps;
    let r = sc.run().unwrap().report;
    println!(
        "{:12} {:7} burst {:4}: cap {:7.1} kb/s (std {:5.1})  acc {:.3} (std {:.3})  gap {:7.1} ns  locked {}/{}  traffic {:.3} GB/s",
        r.scenario,
        r.preset,
        r.burst_size,
        r.capacity_bps / 1e3,
        r.capacity_std_bps / 1e3,
        r.accuracy,
        r.accuracy_std,
        r.latency_gap_ns,
        r.locked_frames,
        r.repetitions,
        r.channel_traffic_gbps,
    );
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let group = args.first().map(String::as_str).unwrap_or("iso");
    let seed: u64 = args
        .get(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let reps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);

    match group {
        "iso" => {
            for burst in [16, 32, 64, 128] {
                channel_row(ScenarioName::Isolation, PresetKind::Private, burst, seed, reps);
            }
        }
        "local" => {
            channel_row(ScenarioName::Isolation, PresetKind::Private, 32, seed, reps);
            channel_row(ScenarioName::LocalLoad, PresetKind::Private, 32, seed, reps);
        }
        "net" => {
            for burst in [32, 64, 128] {
                channel_row(ScenarioName::NetworkLoad, PresetKind::Private, burst, seed, reps);
            }
        }
        "cloud" => {
            for burst in [32, 128] {
                channel_row(ScenarioName::Cloud, PresetKind::Cloud, burst, seed, reps);
            }
        }
        "stealth" => {
            let sc = Scenario::new(ScenarioName::Stealth, PresetKind::Private, 32, seed).unwrap();
            let r = sc.run().unwrap().report;
            let stealth = r.stealth.unwrap();
            let off = &stealth.off_percentiles;
            println!(
                "off    : p50 {:7.1} p90 {:7.1} p99 {:7.1} p99.9 {:7.1} p99.99 {:7.1}  (n={})",
                off.p50_ns, off.p90_ns, off.p99_ns, off.p99_9_ns, off.p99_99_ns,
                stealth.off_sample_count
            );
            for p in &stealth.per_burst {
                let q = &p.local_percentiles;
                println!(
                    "b{:5}: traffic {:.3} GB/s probe {:.3}  p99 x{:.3} p99.9 x{:.3} p99.99 x{:.3}   [p50 {:6.1} p99 {:6.1} p99.9 {:6.1} p99.99 {:6.1}]",
                    p.burst,
                    p.channel_traffic_gbps,
                    p.probe_traffic_gbps,
                    q.p99_ns / off.p99_ns,
                    q.p99_9_ns / off.p99_9_ns,
                    q.p99_99_ns / off.p99_99_ns,
                    q.p50_ns, q.p99_ns, q.p99_9_ns, q.p99_99_ns,
                );
            }
        }
        other => eprintln!("unknown group {other}"),
    }
}
