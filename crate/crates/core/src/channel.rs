//! Covert-channel codec: burst scheduling on the send side; baseline
//! calibration, preamble acquisition, and middle-50% threshold decoding on
//! the receive side.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkernel::SimTime;
use crate::stats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Reads per 1-bit burst.
    pub burst_size: u32,
    /// Length of one bit slot.
    pub period: SimTime,
    /// Receiver probing cadence.
    pub probe_interval: SimTime,
    pub preamble: Vec<bool>,
    pub payload_bits: usize,
    pub baseline_percentile: f64,
    pub recalibration_interval: SimTime,
    /// Optional extra margin over the unloaded latency; zero by default,
    /// the baseline itself is the threshold.
    pub threshold_margin: SimTime,
}

impl ChannelConfig {
    pub fn alternating_preamble(len: usize) -> Vec<bool> {
        (0..len).map(|i| i % 2 == 0).collect()
    }

    pub fn frame_bits(&self) -> usize {
        self.preamble.len() + self.payload_bits
    }

    pub fn frame_airtime(&self) -> SimTime {
        SimTime::from_ps(self.period.as_ps() * self.frame_bits() as u64)
    }

    pub fn validate(&self, service_time: SimTime) -> Result<()> {
        let drain = SimTime::from_ps(self.burst_size as u64 * service_time.as_ps());
        if self.period.as_ps() < drain.as_ps() + drain.as_ps() / 10 {
            return Err(Error::Config(format!(
                "period {} leaves no guard over burst drain {}",
                self.period, drain
            )));
        }
        if self.probe_interval.as_ps() * 4 > self.period.as_ps() {
            return Err(Error::Config(format!(
                "probe interval {} exceeds period/4 (middle-50% window would be empty)",
                self.probe_interval
            )));
        }
        if self.preamble.is_empty() || self.payload_bits == 0 {
            return Err(Error::Config("frame layout must be non-empty".into()));
        }
        Ok(())
    }
}

/// One transmission unit: fixed preamble then payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub preamble: Vec<bool>,
    pub payload: Vec<bool>,
}

impl Frame {
    pub fn new(cfg: &ChannelConfig, payload: Vec<bool>) -> Self {
        assert_eq!(payload.len(), cfg.payload_bits);
        Frame {
            preamble: cfg.preamble.clone(),
            payload,
        }
    }

    pub fn random_payload(cfg: &ChannelConfig, rng: &mut impl rand::Rng) -> Self {
        let payload = (0..cfg.payload_bits).map(|_| rng.gen::<bool>()).collect();
        Frame::new(cfg, payload)
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.preamble.iter().chain(self.payload.iter()).copied()
    }

    pub fn len(&self) -> usize {
        self.preamble.len() + self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hex encoding of the full bit string, MSB first.
    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits().collect::<Vec<_>>())
    }

    pub fn from_hex(cfg: &ChannelConfig, hex: &str) -> Result<Self> {
        let bits = hex_to_bits(hex.trim())?;
        if bits.len() != cfg.frame_bits() {
            return Err(Error::Config(format!(
                "frame file holds {} bits, config expects {}",
                bits.len(),
                cfg.frame_bits()
            )));
        }
        let (pre, pay) = bits.split_at(cfg.preamble.len());
        Ok(Frame {
            preamble: pre.to_vec(),
            payload: pay.to_vec(),
        })
    }
}

pub fn bits_to_hex(bits: &[bool]) -> String {
    assert!(bits.len() % 4 == 0, "bit string must be nibble-aligned");
    bits.chunks(4)
        .map(|c| {
            let v = c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
            char::from_digit(v as u32, 16).unwrap()
        })
        .collect()
}

pub fn hex_to_bits(hex: &str) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for ch in hex.chars() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| Error::Config(format!("invalid hex digit '{ch}'")))?;
        for i in (0..4).rev() {
            bits.push((v >> i) & 1 == 1);
        }
    }
    Ok(bits)
}

/// Receiver-side decode state: the calibrated threshold plus lock status.
#[derive(Debug, Clone)]
pub struct DecodeState {
    /// 95th-percentile round trip of the channel-inactive calibration
    /// window; the decode threshold.
    pub unloaded_latency: SimTime,
    /// Mean of the per-window trimmed-mean statistic while the channel is
    /// silent; acquisition measures window deviations against it.
    pub stat_mu_ps: f64,
    /// Robust (MAD-based) spread of the same statistic; normalizes the
    /// acquisition score into a z-value.
    pub stat_sigma_ps: f64,
    pub locked: bool,
    pub bit_phase: SimTime,
    pub inferred_period: SimTime,
    pub decoded_bits: Vec<Option<bool>>,
}

impl DecodeState {
    pub fn new(unloaded_latency: SimTime) -> Self {
        DecodeState {
            unloaded_latency,
            stat_mu_ps: unloaded_latency.as_ps() as f64,
            stat_sigma_ps: 0.0,
            locked: false,
            bit_phase: SimTime::ZERO,
            inferred_period: SimTime::ZERO,
            decoded_bits: Vec::new(),
        }
    }

    pub fn with_silent_stats(mut self, mu_ps: f64, sigma_ps: f64) -> Self {
        self.stat_mu_ps = mu_ps;
        self.stat_sigma_ps = sigma_ps;
        self
    }
}

/// Center and robust spread of the window statistic over a channel-silent
/// trace slice: chop into period-sized windows, trimmed-mean each, then
/// take the mean and the MAD-based sigma (rare latency outliers must not
/// wash out the acquisition z-score).
pub fn silent_window_stats(calib: &[(SimTime, SimTime)], period: SimTime) -> (f64, f64) {
    if calib.is_empty() {
        return (0.0, 0.0);
    }
    let t0 = calib.first().unwrap().0;
    let t1 = calib.last().unwrap().0;
    let mut means = Vec::new();
    let mut w0 = t0;
    while w0 + period <= t1 {
        if let Some(m) = trimmed_mean_ps(slice_by_issue(calib, w0, w0 + period)) {
            means.push(m);
        }
        w0 = w0 + period;
    }
    if means.len() < 4 {
        let mu = if means.is_empty() {
            0.0
        } else {
            means.iter().sum::<f64>() / means.len() as f64
        };
        return (mu, 0.0);
    }
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let mut devs: Vec<f64> = means.iter().map(|m| (m - mean).abs()).collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = devs[devs.len() / 2];
    (mean, 1.4826 * mad)
}

/// 95th-percentile (nearest-rank) of a channel-silent trace.
pub fn calibrate_baseline(samples: &[(SimTime, SimTime)], percentile: f64) -> Result<SimTime> {
    if samples.len() < 200 {
        return Err(Error::Contract(format!(
            "baseline calibration needs >= 200 samples, got {}",
            samples.len()
        )));
    }
    let rtts: Vec<u64> = samples.iter().map(|&(_, r)| r.as_ps()).collect();
    Ok(SimTime::from_ps(stats::percentile(&rtts, percentile)?))
}

/// Middle-50% trimmed comparison for one bit slot: drop the first and last
/// quarter of the measurements (by time), then compare the mean of the rest
/// against the unloaded latency. Strictly greater decodes a 1.
///
/// Fewer than four samples is an erasure (`None`).
pub fn decode_bit(window: &[(SimTime, SimTime)], state: &DecodeState, margin: SimTime) -> Option<bool> {
    trimmed_sum(window).map(|(sum, n)| {
        let threshold = (state.unloaded_latency.as_ps() + margin.as_ps()) as u128 * n as u128;
        sum > threshold
    })
}

/// Sum over the middle-50% samples; exact integer arithmetic so decoding is
/// invariant under a uniform latency shift applied to trace and baseline.
fn trimmed_sum(window: &[(SimTime, SimTime)]) -> Option<(u128, usize)> {
    let n = window.len();
    if n < 4 {
        return None;
    }
    let drop = n / 4;
    let kept = &window[drop..n - drop];
    let sum: u128 = kept.iter().map(|&(_, r)| r.as_ps() as u128).sum();
    Some((sum, kept.len()))
}

fn trimmed_mean_ps(window: &[(SimTime, SimTime)]) -> Option<f64> {
    trimmed_sum(window).map(|(sum, n)| sum as f64 / n as f64)
}

/// Samples of `trace` whose issue time falls in `[from, to)`; `trace` must
/// be sorted by issue time.
pub fn slice_by_issue(trace: &[(SimTime, SimTime)], from: SimTime, to: SimTime) -> &[(SimTime, SimTime)] {
    let lo = trace.partition_point(|&(t, _)| t < from);
    let hi = trace.partition_point(|&(t, _)| t < to);
    &trace[lo..hi]
}

#[derive(Debug, Clone, Copy)]
pub struct LockResult {
    pub locked: bool,
    /// Start of the frame's first bit window.
    pub bit_phase: SimTime,
    pub inferred_period: SimTime,
    pub preamble_matches: u32,
    pub score: f64,
    pub zscore: f64,
}

/// Leading silence slots prepended to the acquisition template. They pin
/// the frame start: the alternating preamble matches itself two bit slots
/// late, but a late lock drags preamble energy into the silence windows.
const LEAD_SILENCE_SLOTS: usize = 4;

/// Weight of the leading-silence slots in the acquisition score. The
/// two-slot self-similarity of the alternating preamble leaves only a
/// one-burst margin; double weight on the silence anchor restores it.
const LEAD_WEIGHT: f64 = 3.0;

/// Slide the alternating preamble (with leading-silence anchor slots) over
/// the coarse acquisition window of `trace` to find the frame start and
/// verify the sending period.
///
/// A firm lock needs >= 30/32 preamble bits to match; a degraded lock
/// accepts a filter peak far out of the score noise (the decoder keeps
/// working at bit-error rates where a 30/32 gate would never fire).
pub fn lock_preamble(
    trace: &[(SimTime, SimTime)],
    cfg: &ChannelConfig,
    state: &DecodeState,
) -> LockResult {
    let mut best = LockResult {
        locked: false,
        bit_phase: SimTime::ZERO,
        inferred_period: cfg.period,
        preamble_matches: 0,
        score: f64::NEG_INFINITY,
        zscore: 0.0,
    };
    if trace.len() < 4 * cfg.preamble.len() {
        return best;
    }
    let t0 = trace.first().unwrap().0;
    let t1 = trace.last().unwrap().0;
    let center = state.stat_mu_ps;

    // Candidate frame starts: the head of the trace slice (the caller hands
    // a slice beginning a few periods before the coarse frame sync).
    let search_span = SimTime::from_ps(
        ((t1 - t0).as_ps() / 3).min(10 * cfg.period.as_ps()),
    );
    let stride = cfg.probe_interval.as_ps() / 2;
    let lead = SimTime::from_ps(cfg.period.as_ps() * LEAD_SILENCE_SLOTS as u64);

    // Fine period grid around the nominal rate, nominal first; a candidate
    // period only replaces the incumbent on a clear score margin, so flat
    // surfaces keep the exact shared rate.
    let mut scores = Vec::new();
    for step in [0i64, 1, -1, 2, -2] {
        let period = SimTime::from_ps(
            (cfg.period.as_ps() as i64 + step * (cfg.period.as_ps() as i64 / 2000)) as u64,
        );
        let steps = search_span.as_ps() / stride;
        for k in 0..=steps {
            let start = t0 + SimTime::from_ps(k * stride);
            let mut score = 0.0;
            for slot in 0..(LEAD_SILENCE_SLOTS + cfg.preamble.len()) {
                let w0 = (start + SimTime::from_ps(period.as_ps() * slot as u64))
                    .saturating_sub(lead);
                let w1 = w0 + period;
                let window = slice_by_issue(trace, w0, w1);
                if let Some(mean) = trimmed_mean_ps(window) {
                    let dev = mean - center;
                    if slot < LEAD_SILENCE_SLOTS {
                        score -= LEAD_WEIGHT * dev;
                    } else if cfg.preamble[slot - LEAD_SILENCE_SLOTS] {
                        score += dev;
                    } else {
                        score -= dev;
                    }
                }
            }
            scores.push(score);
            let margin = if step == 0 { 0.0 } else { 0.05 * best.score.abs() };
            if score > best.score + margin {
                best.score = score;
                best.bit_phase = start;
                best.inferred_period = period;
            }
        }
    }
    if scores.len() < 8 {
        return best;
    }

    // Normalize the peak against the silence-window statistic (estimated on
    // the calibration slice); candidate scores themselves are signal-laden
    // near the frame and cannot serve as the null.
    let weight_sq = LEAD_SILENCE_SLOTS as f64 * LEAD_WEIGHT * LEAD_WEIGHT
        + cfg.preamble.len() as f64;
    best.zscore = if state.stat_sigma_ps > 0.0 {
        best.score / (weight_sq.sqrt() * state.stat_sigma_ps)
    } else if best.score > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    best.preamble_matches = cfg
        .preamble
        .iter()
        .enumerate()
        .filter(|&(i, &bit)| {
            let w0 = best.bit_phase + SimTime::from_ps(best.inferred_period.as_ps() * i as u64);
            let w1 = w0 + best.inferred_period;
            decode_bit(slice_by_issue(trace, w0, w1), state, SimTime::ZERO) == Some(bit)
        })
        .count() as u32;

    let firm = best.preamble_matches as usize >= cfg.preamble.len().saturating_sub(2);
    let degraded = best.zscore >= 5.0
        && best.preamble_matches as usize * 16 > cfg.preamble.len() * 9;
    best.locked = firm || degraded;
    best
}

/// Decode `n_bits` windows starting at `phase`; erasures stay `None`.
pub fn decode_frame(
    trace: &[(SimTime, SimTime)],
    phase: SimTime,
    period: SimTime,
    n_bits: usize,
    state: &DecodeState,
    margin: SimTime,
) -> Vec<Option<bool>> {
    (0..n_bits)
        .map(|k| {
            let w0 = phase + SimTime::from_ps(period.as_ps() * k as u64);
            let w1 = w0 + period;
            decode_bit(slice_by_issue(trace, w0, w1), state, margin)
        })
        .collect()
}

/// Modeled latency-gap fraction of a burst's drain that survives the
/// middle-50% averaging; used only for burst adaptation.
const GAP_OVERLAP_FACTOR: f64 = 0.3;

/// Smallest configured burst whose modeled gap exceeds the current noise
/// estimate (signal/noise > 1); saturates at the largest burst.
pub fn adapt_burst(noise_rtt_estimate: SimTime, candidates: &[u32], service_time: SimTime) -> u32 {
    assert!(!candidates.is_empty());
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    for &burst in &sorted {
        let gap = burst as f64 * service_time.as_ps() as f64 * GAP_OVERLAP_FACTOR;
        if gap > noise_rtt_estimate.as_ps() as f64 {
            return burst;
        }
    }
    *sorted.last().unwrap()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelMetrics {
    /// Correctly decoded payload bits per second of frame airtime.
    pub capacity_bps: f64,
    /// Fraction of payload bits decoded correctly (erasures count wrong).
    pub accuracy: f64,
}

/// Per-frame decode outcome paired with its ground truth.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub sent: Frame,
    pub decoded: Vec<Option<bool>>,
    pub locked: bool,
}

/// True channel capacity and accuracy over a set of frames.
///
/// Accuracy counts matched payload bits over all frames; capacity credits
/// only frames the receiver actually locked (an unlocked frame transfers
/// nothing), discounting preambles.
pub fn channel_metrics(outcomes: &[FrameOutcome], cfg: &ChannelConfig) -> ChannelMetrics {
    let mut matched_all = 0usize;
    let mut matched_locked = 0usize;
    let mut total = 0usize;
    for o in outcomes {
        let pre = o.sent.preamble.len();
        for (i, &sent_bit) in o.sent.payload.iter().enumerate() {
            total += 1;
            if o.decoded.get(pre + i).copied().flatten() == Some(sent_bit) {
                matched_all += 1;
                if o.locked {
                    matched_locked += 1;
                }
            }
        }
    }
    let airtime = cfg.frame_airtime().as_secs_f64() * outcomes.len() as f64;
    ChannelMetrics {
        capacity_bps: if airtime > 0.0 {
            matched_locked as f64 / airtime
        } else {
            0.0
        },
        accuracy: if total > 0 {
            matched_all as f64 / total as f64
        } else {
            0.0
        },
    }
}

/// Signal amplitude: mean of above-baseline samples inside 1-bit slots
/// minus the mean of everything inside 0-bit slots.
pub fn latency_gap(
    trace: &[(SimTime, SimTime)],
    frame_start: SimTime,
    period: SimTime,
    sent_bits: &[bool],
    baseline: SimTime,
) -> SimTime {
    let mut contended = Vec::new();
    let mut quiet = Vec::new();
    for (k, &bit) in sent_bits.iter().enumerate() {
        let w0 = frame_start + SimTime::from_ps(period.as_ps() * k as u64);
        let w1 = w0 + period;
        for &(_, rtt) in slice_by_issue(trace, w0, w1) {
            if bit {
                if rtt > baseline {
                    contended.push(rtt.as_ps());
                }
            } else {
                quiet.push(rtt.as_ps());
            }
        }
    }
    if contended.is_empty() || quiet.is_empty() {
        return SimTime::ZERO;
    }
    let gap = stats::mean(&contended) - stats::mean(&quiet);
    SimTime::from_ps(gap.max(0.0) as u64)
}

// ----- trace files ---------------------------------------------------------

/// Write `(issue_ns, rtt_ns)` rows with picosecond-exact fractional values.
pub fn write_trace_csv(path: &Path, trace: &[(SimTime, SimTime)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "issue_ns,rtt_ns")?;
    for &(t, r) in trace {
        writeln!(
            f,
            "{}.{:03},{}.{:03}",
            t.as_ps() / 1000,
            t.as_ps() % 1000,
            r.as_ps() / 1000,
            r.as_ps() % 1000
        )?;
    }
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<(SimTime, SimTime)>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "issue_ns,rtt_ns" {
                return Err(Error::Config(format!("unexpected trace header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let issue = parse_ns_as_ps(cols.next().unwrap_or(""))?;
        let rtt = parse_ns_as_ps(cols.next().unwrap_or(""))?;
        out.push((SimTime::from_ps(issue), SimTime::from_ps(rtt)));
    }
    Ok(out)
}

fn parse_ns_as_ps(field: &str) -> Result<u64> {
    let field = field.trim();
    let (whole, frac) = match field.split_once('.') {
        Some((w, f)) => (w, f),
        None => (field, ""),
    };
    let whole: u64 = whole
        .parse()
        .map_err(|_| Error::Config(format!("bad ns value '{field}'")))?;
    let mut frac_ps = 0u64;
    let mut scale = 100;
    for ch in frac.chars().take(3) {
        let d = ch
            .to_digit(10)
            .ok_or_else(|| Error::Config(format!("bad ns value '{field}'")))?;
        frac_ps += d as u64 * scale;
        scale /= 10;
    }
    Ok(whole * 1000 + frac_ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::RngStream;
    use rand::Rng;

    fn cfg32() -> ChannelConfig {
        crate::presets::channel_config(crate::presets::PresetKind::Private, 32).unwrap()
    }

    fn window(values_ns: &[u64]) -> Vec<(SimTime, SimTime)> {
        values_ns
            .iter()
            .enumerate()
            .map(|(i, &v)| (SimTime::from_ns(500 * i as u64), SimTime::from_ns(v)))
            .collect()
    }

    #[test]
    fn preamble_is_alternating_starting_with_one() {
        let p = ChannelConfig::alternating_preamble(32);
        assert_eq!(p.len(), 32);
        assert!(p[0]);
        assert!(!p[1]);
        assert!(p.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn config_validation_rejects_bad_layouts() {
        let mut cfg = cfg32();
        cfg.period = SimTime::from_ns(1_300); // below the 32-read drain + guard
        assert!(cfg.validate(SimTime::from_ns(40)).is_err());
        let mut cfg = cfg32();
        cfg.probe_interval = SimTime::from_ns(2_000);
        assert!(cfg.validate(SimTime::from_ns(40)).is_err());
        cfg32().validate(SimTime::from_ns(40)).unwrap();
    }

    #[test]
    fn baseline_is_p95_and_needs_samples() {
        let constant = window(&[2_000; 300]);
        assert_eq!(
            calibrate_baseline(&constant, 95.0).unwrap(),
            SimTime::from_ns(2_000)
        );
        let mut with_outliers = window(&[2_000; 200]);
        with_outliers.extend(window(&[5_000; 10]));
        assert_eq!(
            calibrate_baseline(&with_outliers, 95.0).unwrap(),
            SimTime::from_ns(2_000)
        );
        assert!(calibrate_baseline(&window(&[2_000; 199]), 95.0).is_err());
    }

    #[test]
    fn decode_bit_uses_strict_threshold() {
        let state = DecodeState::new(SimTime::from_ns(2_000));
        // All samples exactly at baseline: strict inequality decodes 0.
        let flat = window(&[2_000; 12]);
        assert_eq!(decode_bit(&flat, &state, SimTime::ZERO), Some(false));
        // Middle samples inflated by 0.5us: decodes 1.
        let mut inflated = vec![2_000u64; 12];
        for v in inflated.iter_mut().take(9).skip(3) {
            *v += 500;
        }
        assert_eq!(
            decode_bit(&window(&inflated), &state, SimTime::ZERO),
            Some(true)
        );
    }

    #[test]
    fn spikes_in_dropped_quartiles_do_not_flip_the_bit() {
        let state = DecodeState::new(SimTime::from_ns(2_000));
        // 12 samples: first 3 and last 3 are dropped; spike only there.
        let mut vals = vec![2_000u64; 12];
        vals[0] = 9_000;
        vals[1] = 9_000;
        vals[2] = 9_000;
        vals[10] = 9_000;
        vals[11] = 9_000;
        assert_eq!(decode_bit(&window(&vals), &state, SimTime::ZERO), Some(false));
    }

    #[test]
    fn too_few_samples_is_an_erasure() {
        let state = DecodeState::new(SimTime::from_ns(2_000));
        assert_eq!(decode_bit(&window(&[9_000; 3]), &state, SimTime::ZERO), None);
    }

    #[test]
    fn decoding_is_shift_invariant() {
        let mut rng = RngStream::new(3, "shift");
        for _ in 0..200 {
            let n = rng.rng().gen_range(4..20);
            let vals: Vec<u64> = (0..n).map(|_| rng.rng().gen_range(1_000..4_000)).collect();
            let base = rng.rng().gen_range(1_500..3_500);
            let shift = rng.rng().gen_range(0..100_000u64);
            let s0 = DecodeState::new(SimTime::from_ns(base));
            let s1 = DecodeState::new(SimTime::from_ns(base + shift));
            let shifted: Vec<u64> = vals.iter().map(|v| v + shift).collect();
            assert_eq!(
                decode_bit(&window(&vals), &s0, SimTime::ZERO),
                decode_bit(&window(&shifted), &s1, SimTime::ZERO)
            );
        }
    }

    /// Synthetic receiver trace: probes every 500ns; windows of 1-bits carry
    /// an elevated plateau in their middle half.
    fn synthetic_trace(
        cfg: &ChannelConfig,
        frame_start_ns: u64,
        bits: &[bool],
        gap_ns: u64,
    ) -> Vec<(SimTime, SimTime)> {
        let period_ns = cfg.period.as_ps() / 1000;
        let total_ns = frame_start_ns + (bits.len() as u64 + 8) * period_ns;
        let mut trace = Vec::new();
        let mut t = 0u64;
        while t < total_ns {
            let mut rtt = 2_000u64;
            if t >= frame_start_ns {
                let k = ((t - frame_start_ns) / period_ns) as usize;
                let off = (t - frame_start_ns) % period_ns;
                if k < bits.len()
                    && bits[k]
                    && off >= period_ns / 4
                    && off < period_ns * 3 / 4
                {
                    rtt += gap_ns;
                }
            }
            trace.push((SimTime::from_ns(t), SimTime::from_ns(rtt)));
            t += 500;
        }
        trace
    }

    #[test]
    fn silent_channel_never_locks() {
        let cfg = cfg32();
        let state = DecodeState::new(SimTime::from_ns(2_000));
        let trace = synthetic_trace(&cfg, 0, &vec![false; 64], 0);
        let lock = lock_preamble(&trace, &cfg, &state);
        assert!(!lock.locked);
    }

    #[test]
    fn clean_signal_locks_with_phase_and_period() {
        let cfg = cfg32();
        let state = DecodeState::new(SimTime::from_ns(2_000));
        let mut bits = cfg.preamble.clone();
        bits.extend(std::iter::repeat(false).take(16));
        bits.extend(std::iter::repeat(true).take(16));
        let true_start = 3 * cfg.period.as_ps() / 1000 + 250; // offset by half a probe slot
        let trace = synthetic_trace(&cfg, true_start, &bits, 600);
        let lock = lock_preamble(&trace, &cfg, &state);
        assert!(lock.locked, "lock failed: {lock:?}");
        assert!(lock.preamble_matches >= 30);
        let period_err = (lock.inferred_period.as_ps() as f64 - cfg.period.as_ps() as f64).abs()
            / cfg.period.as_ps() as f64;
        assert!(period_err <= 0.02, "period error {period_err}");
        // The matched filter centers each burst plateau inside the kept
        // middle half, so phase may legitimately sit up to ~P/4 early.
        let phase_err_ps =
            (lock.bit_phase.as_ps() as i64 - (true_start * 1000) as i64).unsigned_abs();
        assert!(
            phase_err_ps <= cfg.period.as_ps() / 3,
            "phase error {phase_err_ps}ps"
        );
        let decoded = decode_frame(
            &trace,
            lock.bit_phase,
            lock.inferred_period,
            bits.len(),
            &state,
            SimTime::ZERO,
        );
        let matches = decoded
            .iter()
            .zip(&bits)
            .filter(|(d, &b)| **d == Some(b))
            .count();
        assert_eq!(matches, bits.len());
    }

    #[test]
    fn half_period_offset_is_corrected() {
        let cfg = cfg32();
        let state = DecodeState::new(SimTime::from_ns(2_000));
        let mut bits = cfg.preamble.clone();
        bits.extend(std::iter::repeat(true).take(8));
        let period_ns = cfg.period.as_ps() / 1000;
        let start_a = 2 * period_ns;
        let start_b = start_a + period_ns / 2;
        let lock_a = lock_preamble(&synthetic_trace(&cfg, start_a, &bits, 600), &cfg, &state);
        let lock_b = lock_preamble(&synthetic_trace(&cfg, start_b, &bits, 600), &cfg, &state);
        assert!(lock_a.locked && lock_b.locked);
        let shift = lock_b.bit_phase.as_ps() as i64 - lock_a.bit_phase.as_ps() as i64;
        let half = (period_ns * 1000 / 2) as i64;
        assert!(
            (shift - half).abs() <= 1_000_000,
            "phase shift {shift}ps, expected ~{half}ps"
        );
    }

    #[test]
    fn adapt_burst_tracks_noise() {
        let candidates = [16u32, 32, 64, 128, 256, 512, 1024];
        let service = SimTime::from_ns(40);
        assert_eq!(adapt_burst(SimTime::ZERO, &candidates, service), 16);
        assert_eq!(adapt_burst(SimTime::from_ns(200), &candidates, service), 32);
        let loaded = adapt_burst(SimTime::from_ns(1_000), &candidates, service);
        assert!(loaded >= 64, "got {loaded}");
        assert_eq!(
            adapt_burst(SimTime::from_us(100), &candidates, service),
            1024
        );
    }

    #[test]
    fn metrics_match_their_definitions() {
        let cfg = cfg32();
        let mut rng = RngStream::new(4, "metrics");
        let frame = Frame::random_payload(&cfg, rng.rng());
        let decoded: Vec<Option<bool>> = frame.bits().map(Some).collect();
        let outcomes = vec![FrameOutcome {
            sent: frame.clone(),
            decoded: decoded.clone(),
            locked: true,
        }];
        let m = channel_metrics(&outcomes, &cfg);
        assert_eq!(m.accuracy, 1.0);
        let expect = 200.0 / (232.0 * cfg.period.as_secs_f64());
        assert!((m.capacity_bps - expect).abs() / expect < 1e-9);

        // No lock: capacity zero even if bits happen to match.
        let outcomes = vec![FrameOutcome {
            sent: frame,
            decoded,
            locked: false,
        }];
        let m = channel_metrics(&outcomes, &cfg);
        assert_eq!(m.capacity_bps, 0.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn frame_hex_roundtrip() {
        let cfg = cfg32();
        let mut rng = RngStream::new(5, "hex");
        let frame = Frame::random_payload(&cfg, rng.rng());
        let hex = frame.to_hex();
        assert_eq!(hex.len(), 58); // 232 bits
        let back = Frame::from_hex(&cfg, &hex).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn trace_csv_roundtrip_is_ps_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace: Vec<(SimTime, SimTime)> = vec![
            (SimTime::from_ps(1), SimTime::from_ps(1_999_999)),
            (SimTime::from_ps(123_456_789), SimTime::from_ps(2_000_001)),
            (SimTime::from_ps(1_000_000_000_000), SimTime::from_ps(40_000)),
        ];
        write_trace_csv(&path, &trace).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back, trace);
    }
}
