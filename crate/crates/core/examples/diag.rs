//! Dev diagnostic: run one zero-noise frame and dump the trace around the
//! first few bits plus decode internals.

use banksim_core::channel::{self, DecodeState};
use banksim_core::presets::{self, PresetKind};
use banksim_core::scenario::{Scenario, ScenarioName};
use banksim_core::simkernel::SimTime;

fn main() {
    let mut sc = Scenario::new(ScenarioName::Isolation, PresetKind::Private, 32, 5).unwrap();
    sc.noise = presets::noise_off(sc.preset);
    sc.repetitions = 1;
    let out = sc.run().unwrap();
    let rep = &out.report;
    let f = &rep.frames[0];
    println!(
        "baseline={}ns locked={} matches={} phase={}ns period={}ns start={}ns",
        f.baseline_ps as f64 / 1e3,
        f.locked,
        f.preamble_matches,
        f.locked_phase_ps as f64 / 1e3,
        f.locked_period_ps as f64 / 1e3,
        f.start_ps as f64 / 1e3
    );
    println!("sent    {}", f.sent_hex);
    println!("decoded {}", &f.decoded[..64]);
    println!("accuracy={} capacity={}", f.accuracy, f.capacity_bps);
    println!("trace len {}", out.trace.len());

    let start = SimTime::from_ps(f.start_ps);
    let cfg = &sc.channel;
    // Dump samples of the first 3 bit slots.
    let upto = start + SimTime::from_ps(cfg.period.as_ps() * 3);
    for &(t, rtt) in channel::slice_by_issue(&out.trace, start.saturating_sub(SimTime::from_us(2)), upto) {
        let rel = t.as_ps() as i64 - start.as_ps() as i64;
        println!("  t={:+9.1}ns rtt={:9.1}ns", rel as f64 / 1e3, rtt.as_ps() as f64 / 1e3);
    }
    let state = DecodeState::new(SimTime::from_ps(f.baseline_ps));
    for k in 0..6 {
        let w0 = SimTime::from_ps(f.locked_phase_ps + f.locked_period_ps * k);
        let w1 = w0 + SimTime::from_ps(f.locked_period_ps);
        let win = channel::slice_by_issue(&out.trace, w0, w1);
        println!(
            "bit {k}: samples={} decode={:?}",
            win.len(),
            channel::decode_bit(win, &state, SimTime::ZERO)
        );
    }
}
