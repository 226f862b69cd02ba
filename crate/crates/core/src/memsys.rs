//! The intermediary's memory subsystem: fixed-service-time banks behind
//! per-bank FIFO queues, and pluggable physical-address-to-bank
//! interleaving schemes (static XOR-style and keyed-permutation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkernel::SimTime;
use crate::stats;

pub const CACHE_BLOCK: u64 = 64;

/// Core DRAM latency components. Each is 13-15ns on the modeled parts, so
/// one 64B request occupies a bank for 39-45ns.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DramTiming {
    pub t_cl: SimTime,
    pub t_rcd: SimTime,
    pub t_rp: SimTime,
}

impl Default for DramTiming {
    fn default() -> Self {
        // 13 + 13 + 14 = 40ns, the midpoint of the modeled 39-45ns range.
        DramTiming {
            t_cl: SimTime::from_ns(13),
            t_rcd: SimTime::from_ns(13),
            t_rp: SimTime::from_ns(14),
        }
    }
}

impl DramTiming {
    pub fn service_time(&self) -> SimTime {
        self.t_cl + self.t_rcd + self.t_rp
    }

    /// Peak bandwidth of one bank in bytes per second.
    pub fn per_bank_peak(&self) -> f64 {
        CACHE_BLOCK as f64 / (self.service_time().as_ps() as f64 / 1e12)
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.service_time().as_ns_f64();
        if !(39.0..=45.0).contains(&ns) {
            return Err(Error::Config(format!(
                "bank service time {ns:.1}ns outside the 39-45ns envelope"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterleavingKind {
    XorLinear,
    IdentitySpan,
    Cryptographic,
}

/// Mapping from physical address to bank index.
///
/// For the static kinds, bank-selector bit `j` is the XOR of the address
/// bits listed in `functions[j]`; the scheme depends only on address bits
/// inside `[span_low, span_high]`. The cryptographic kind runs the address
/// through a keyed 64-bit permutation first, which destroys bit locality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterleavingScheme {
    pub kind: InterleavingKind,
    pub bank_count: u32,
    /// One entry per bank-selector bit; each entry lists the address bits
    /// that XOR-reduce to that selector bit. Empty for cryptographic.
    pub functions: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<u64>,
}

const fn parity(x: u64) -> u32 {
    x.count_ones() & 1
}

fn mix32(x: u32, k: u64) -> u32 {
    let mut v = (x as u64) ^ k;
    v = v.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    v ^= v >> 29;
    v = v.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    (v ^ (v >> 32)) as u32
}

/// Four-round Feistel permutation over the 64-bit address space (bijective
/// for any key).
fn feistel_permute(addr: u64, key: u64) -> u64 {
    let mut left = (addr >> 32) as u32;
    let mut right = addr as u32;
    for round in 0u64..4 {
        let round_key = key
            .rotate_left((17 * round as u32) % 64)
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(round + 1));
        let f = mix32(right, round_key);
        let new_right = left ^ f;
        left = right;
        right = new_right;
    }
    ((left as u64) << 32) | right as u64
}

impl InterleavingScheme {
    pub fn xor_linear(bank_count: u32, functions: Vec<Vec<u8>>) -> Self {
        InterleavingScheme {
            kind: InterleavingKind::XorLinear,
            bank_count,
            functions,
            key: None,
        }
    }

    /// Bank selector taken directly from the address bits starting at `low`.
    pub fn identity_span(bank_count: u32, low: u8) -> Self {
        let bits = bank_count.trailing_zeros() as u8;
        let functions = (0..bits).map(|j| vec![low + j]).collect();
        InterleavingScheme {
            kind: InterleavingKind::IdentitySpan,
            bank_count,
            functions,
            key: None,
        }
    }

    pub fn cryptographic(bank_count: u32, key: u64) -> Self {
        InterleavingScheme {
            kind: InterleavingKind::Cryptographic,
            bank_count,
            functions: Vec::new(),
            key: Some(key),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bank_count.is_power_of_two() || self.bank_count == 0 {
            return Err(Error::Config(format!(
                "bank_count {} is not a power of two",
                self.bank_count
            )));
        }
        let selector_bits = self.bank_count.trailing_zeros() as usize;
        match self.kind {
            InterleavingKind::Cryptographic => {
                if self.key.is_none() {
                    return Err(Error::Config("cryptographic scheme requires a key".into()));
                }
            }
            _ => {
                if self.functions.len() != selector_bits {
                    return Err(Error::Config(format!(
                        "scheme has {} functions but {} banks need {}",
                        self.functions.len(),
                        self.bank_count,
                        selector_bits
                    )));
                }
                if self.functions.iter().any(|f| f.is_empty()) {
                    return Err(Error::Config("empty bank-selector function".into()));
                }
                if self.functions.iter().flatten().any(|&b| b < 6 || b > 63) {
                    return Err(Error::Config(
                        "bank-selector bits must lie in [6, 63] (bits [0,5] are block offset)"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Span of address bits the scheme inspects: `(low, high)`.
    pub fn bit_span(&self) -> (u8, u8) {
        match self.kind {
            InterleavingKind::Cryptographic => (6, 63),
            _ => {
                let low = self.functions.iter().flatten().copied().min().unwrap_or(6);
                let high = self.functions.iter().flatten().copied().max().unwrap_or(6);
                (low, high)
            }
        }
    }

    fn function_mask(bits: &[u8]) -> u64 {
        bits.iter().fold(0u64, |m, &b| m | (1u64 << b))
    }

    /// Route a 64B-aligned physical address to its bank.
    pub fn route(&self, phys_addr: u64) -> Result<u32> {
        if phys_addr % CACHE_BLOCK != 0 {
            return Err(Error::Contract(format!(
                "address {phys_addr:#x} is not 64B-aligned"
            )));
        }
        Ok(self.route_aligned(phys_addr))
    }

    /// Route without the alignment gate; callers guarantee alignment.
    pub fn route_aligned(&self, phys_addr: u64) -> u32 {
        match self.kind {
            InterleavingKind::Cryptographic => {
                let permuted = feistel_permute(phys_addr, self.key.unwrap_or(0));
                ((permuted >> 6) as u32) & (self.bank_count - 1)
            }
            _ => {
                let mut bank = 0u32;
                for (j, f) in self.functions.iter().enumerate() {
                    bank |= parity(phys_addr & Self::function_mask(f)) << j;
                }
                bank
            }
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let scheme: InterleavingScheme = serde_json::from_str(json)?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scheme serializes")
    }
}

/// Where a memory request originated; used for traffic accounting filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    ChannelSender,
    ChannelReceiver,
    LocalLoad,
    NetworkLoad,
    LocalProbe,
}

impl Origin {
    pub const ALL: [Origin; 5] = [
        Origin::ChannelSender,
        Origin::ChannelReceiver,
        Origin::LocalLoad,
        Origin::NetworkLoad,
        Origin::LocalProbe,
    ];

    pub fn index(self) -> usize {
        match self {
            Origin::ChannelSender => 0,
            Origin::ChannelReceiver => 1,
            Origin::LocalLoad => 2,
            Origin::NetworkLoad => 3,
            Origin::LocalProbe => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MemRequest {
    pub phys_addr: u64,
    pub issue_time: SimTime,
    pub origin: Origin,
}

/// One bank: a FIFO with deterministic service. Because service is
/// work-conserving and fixed-length, the queue state collapses to
/// `busy_until`.
#[derive(Debug, Clone, Default)]
pub struct Bank {
    pub busy_until: SimTime,
    pub served_count: u64,
    pub served_bytes: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ServedRecord {
    pub completion: SimTime,
    pub origin: Origin,
    pub bank: u32,
    pub bytes: u64,
}

/// Memory controller plus banks for one simulated node.
pub struct MemorySubsystem {
    pub timing: DramTiming,
    pub scheme: InterleavingScheme,
    banks: Vec<Bank>,
    /// Extra routing latency in front of every request (models the keyed
    /// permutation hardware; zero for static schemes).
    pub route_latency: SimTime,
    record_served: bool,
    served_log: Vec<ServedRecord>,
    origin_bytes: [u64; 5],
}

impl MemorySubsystem {
    pub fn new(timing: DramTiming, scheme: InterleavingScheme) -> Result<Self> {
        timing.validate()?;
        scheme.validate()?;
        let route_latency = match scheme.kind {
            InterleavingKind::Cryptographic => SimTime::from_ns(10),
            _ => SimTime::ZERO,
        };
        let banks = vec![Bank::default(); scheme.bank_count as usize];
        Ok(MemorySubsystem {
            timing,
            scheme,
            banks,
            route_latency,
            record_served: false,
            served_log: Vec::new(),
            origin_bytes: [0; 5],
        })
    }

    /// Cumulative bytes served on behalf of `origin` since construction.
    pub fn origin_bytes(&self, origin: Origin) -> u64 {
        self.origin_bytes[origin.index()]
    }

    pub fn bank_count(&self) -> u32 {
        self.scheme.bank_count
    }

    pub fn bank(&self, id: u32) -> &Bank {
        &self.banks[id as usize]
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn set_record_served(&mut self, on: bool) {
        self.record_served = on;
        if !on {
            self.served_log.clear();
        }
    }

    pub fn served_log(&self) -> &[ServedRecord] {
        &self.served_log
    }

    /// Work (in time) still queued at `bank` as of `now`.
    pub fn backlog(&self, bank: u32, now: SimTime) -> SimTime {
        self.banks[bank as usize].busy_until.saturating_sub(now)
    }

    /// Enqueue one 64B read; returns its completion time.
    ///
    /// FIFO per bank: completion = max(arrival, busy_until) + service_time.
    pub fn submit(&mut self, req: MemRequest) -> Result<SimTime> {
        if req.phys_addr % CACHE_BLOCK != 0 {
            return Err(Error::Contract(format!(
                "address {:#x} is not 64B-aligned",
                req.phys_addr
            )));
        }
        let bank = self.scheme.route_aligned(req.phys_addr);
        Ok(self.submit_to_bank(bank, req.issue_time, req.origin))
    }

    /// Enqueue on an already-routed bank (used by the NIC dispatch path,
    /// which routes once at ingress).
    pub fn submit_to_bank(&mut self, bank: u32, arrival: SimTime, origin: Origin) -> SimTime {
        let arrival = arrival + self.route_latency;
        let slot = &mut self.banks[bank as usize];
        let start = slot.busy_until.max(arrival);
        let completion = start + self.timing.service_time();
        slot.busy_until = completion;
        slot.served_count += 1;
        slot.served_bytes += CACHE_BLOCK;
        self.origin_bytes[origin.index()] += CACHE_BLOCK;
        if self.record_served {
            self.served_log.push(ServedRecord {
                completion,
                origin,
                bank,
                bytes: CACHE_BLOCK,
            });
        }
        completion
    }

    /// Served bytes per second over `window`, counting only the listed
    /// origins (by completion timestamp).
    pub fn measured_bandwidth(
        &self,
        window: (SimTime, SimTime),
        filter: &[Origin],
    ) -> Result<f64> {
        let (start, end) = window;
        if end <= start {
            return Err(Error::Contract("empty measurement window".into()));
        }
        let bytes: u64 = self
            .served_log
            .iter()
            .filter(|r| r.completion > start && r.completion <= end && filter.contains(&r.origin))
            .map(|r| r.bytes)
            .sum();
        Ok(bytes as f64 / (end - start).as_secs_f64())
    }
}

/// Percentiles (nearest-rank) of a latency sample set, in sample units.
///
/// Errors if the sample count cannot resolve the deepest requested tail,
/// naming the minimum.
pub fn local_latency_percentiles(samples: &[u64], percentiles: &[f64]) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        out.push(stats::percentile(samples, p)?);
    }
    Ok(out)
}

/// Construct a random XOR-linear scheme whose selector-input bits are
/// exactly the span `[6, span_high]`, by partitioning the span across the
/// selector functions (partitions are always linearly independent).
pub fn random_span_scheme(rng: &mut impl rand::Rng, span_high: u8, max_selector_bits: u32) -> InterleavingScheme {
    assert!(span_high >= 6);
    let span: Vec<u8> = (6..=span_high).collect();
    let selector_bits = (span.len() as u32).min(max_selector_bits).max(1);
    let mut bits = span;
    // Fisher-Yates, then deal one bit to each function before spreading the rest.
    for i in (1..bits.len()).rev() {
        let j = rng.gen_range(0..=i);
        bits.swap(i, j);
    }
    let mut functions: Vec<Vec<u8>> = vec![Vec::new(); selector_bits as usize];
    for (i, bit) in bits.into_iter().enumerate() {
        if i < selector_bits as usize {
            functions[i].push(bit);
        } else {
            let j = rng.gen_range(0..selector_bits as usize);
            functions[j].push(bit);
        }
    }
    for f in &mut functions {
        f.sort_unstable();
    }
    InterleavingScheme::xor_linear(1 << selector_bits, functions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::RngStream;
    use rand::Rng;

    fn default_subsystem(scheme: InterleavingScheme) -> MemorySubsystem {
        MemorySubsystem::new(DramTiming::default(), scheme).unwrap()
    }

    #[test]
    fn default_timing_is_in_envelope() {
        let t = DramTiming::default();
        t.validate().unwrap();
        assert_eq!(t.service_time(), SimTime::from_ns(40));
        let peak = t.per_bank_peak();
        assert!((1.42e9..=1.64e9).contains(&peak), "peak {peak}");
    }

    #[test]
    fn identity_span_routes_zero_to_bank_zero() {
        let scheme = InterleavingScheme::identity_span(8, 6);
        assert_eq!(scheme.route(0).unwrap(), 0);
        assert_eq!(scheme.route(0b1_000000).unwrap(), 1);
        assert_eq!(scheme.route(0b100_000000).unwrap(), 4);
    }

    #[test]
    fn xor_function_cancels_paired_bits() {
        let scheme = InterleavingScheme::xor_linear(2, vec![vec![6, 13]]);
        let addr = (1u64 << 6) | (1u64 << 13);
        assert_eq!(scheme.route(addr).unwrap(), 0);
        assert_eq!(scheme.route(1u64 << 6).unwrap(), 1);
    }

    #[test]
    fn unaligned_address_is_a_contract_violation() {
        let scheme = InterleavingScheme::identity_span(8, 6);
        assert!(matches!(scheme.route(7), Err(Error::Contract(_))));
    }

    #[test]
    fn route_depends_only_on_span_bits() {
        let scheme = crate::presets::private_scheme();
        let (low, high) = scheme.bit_span();
        assert_eq!((low, high), (6, 26));
        let mut rng = RngStream::new(9, "span");
        let span_mask: u64 = ((1u64 << (high + 1)) - 1) & !((1u64 << low) - 1);
        for _ in 0..1000 {
            let a: u64 = rng.rng().gen::<u64>() & !63;
            let b = (a & span_mask) | (rng.rng().gen::<u64>() & !span_mask & !63);
            assert_eq!(scheme.route_aligned(a), scheme.route_aligned(b));
        }
    }

    // Monte-Carlo uniformity oracle: uniform 64B-aligned addresses must
    // spread within +/-5% of 1/bank_count per bank over 1e6 draws.
    #[test]
    fn uniform_addresses_spread_evenly() {
        for scheme in [
            crate::presets::private_scheme(),
            crate::presets::cloud_scheme(),
            InterleavingScheme::cryptographic(64, 0xfeed_beef),
        ] {
            let mut counts = vec![0u64; scheme.bank_count as usize];
            let mut rng = RngStream::new(1234, "uniformity");
            let draws = 1_000_000u64;
            for _ in 0..draws {
                let addr = rng.rng().gen::<u64>() & !63;
                counts[scheme.route_aligned(addr) as usize] += 1;
            }
            let expected = draws as f64 / scheme.bank_count as f64;
            for (bank, &c) in counts.iter().enumerate() {
                let dev = (c as f64 - expected).abs() / expected;
                assert!(dev < 0.05, "bank {bank} share off by {dev:.3}");
            }
        }
    }

    #[test]
    fn feistel_is_a_permutation_on_low_bits() {
        // Bijectivity check over a 16-bit slice of the domain.
        let key = 0xdead_beef_cafe_f00d;
        let mut seen = vec![false; 1 << 16];
        let mut collisions = 0;
        for x in 0..(1u64 << 16) {
            let y = (feistel_permute(x << 6, key) & 0xffff) as usize;
            if seen[y] {
                collisions += 1;
            }
            seen[y] = true;
        }
        // Truncated outputs may collide, but only at the birthday rate.
        assert!(collisions < (1 << 16) / 2);
        // Full-width outputs must be distinct for distinct inputs.
        assert_ne!(
            feistel_permute(64, key),
            feistel_permute(128, key),
        );
    }

    #[test]
    fn empty_bank_completes_after_service_time() {
        let mut mem = default_subsystem(InterleavingScheme::identity_span(8, 6));
        let done = mem
            .submit(MemRequest {
                phys_addr: 0,
                issue_time: SimTime::from_us(1),
                origin: Origin::LocalProbe,
            })
            .unwrap();
        assert_eq!(done, SimTime::from_us(1) + SimTime::from_ns(40));
    }

    // Closed-form FIFO oracle: 32 back-to-back reads to one bank drain in
    // exactly 32 service times.
    #[test]
    fn burst_to_one_bank_drains_serially() {
        let mut mem = default_subsystem(InterleavingScheme::identity_span(8, 6));
        let t0 = SimTime::from_us(10);
        let mut last = SimTime::ZERO;
        let mut prev = None;
        for _ in 0..32 {
            last = mem.submit_to_bank(0, t0, Origin::ChannelSender);
            if let Some(p) = prev {
                assert_eq!(last - p, SimTime::from_ns(40));
            }
            prev = Some(last);
        }
        assert_eq!(last, t0 + SimTime::from_ns(32 * 40));
        assert_eq!(mem.bank(0).served_bytes, 32 * 64);
        assert_eq!(mem.bank(0).served_count, 32);
    }

    #[test]
    fn spread_requests_enjoy_full_bank_parallelism() {
        let mut mem = default_subsystem(InterleavingScheme::identity_span(32, 6));
        let t0 = SimTime::from_us(3);
        for bank in 0..32 {
            let done = mem.submit_to_bank(bank, t0, Origin::LocalLoad);
            assert_eq!(done, t0 + SimTime::from_ns(40));
        }
    }

    #[test]
    fn bank_isolation_holds() {
        let mut mem = default_subsystem(InterleavingScheme::identity_span(8, 6));
        let t0 = SimTime::from_us(1);
        for _ in 0..100 {
            mem.submit_to_bank(3, t0, Origin::ChannelSender);
        }
        let done = mem.submit_to_bank(4, t0, Origin::LocalProbe);
        assert_eq!(done, t0 + SimTime::from_ns(40));
    }

    #[test]
    fn measured_bandwidth_filters_by_origin() {
        let mut mem = default_subsystem(InterleavingScheme::identity_span(8, 6));
        mem.set_record_served(true);
        assert_eq!(
            mem.measured_bandwidth(
                (SimTime::ZERO, SimTime::from_us(1)),
                &[Origin::ChannelSender]
            )
            .unwrap(),
            0.0
        );
        for i in 0..10 {
            mem.submit_to_bank(0, SimTime::from_ns(100 * i), Origin::ChannelSender);
            mem.submit_to_bank(1, SimTime::from_ns(100 * i), Origin::LocalLoad);
        }
        let window = (SimTime::ZERO, SimTime::from_us(1));
        let sender = mem
            .measured_bandwidth(window, &[Origin::ChannelSender])
            .unwrap();
        let both = mem
            .measured_bandwidth(window, &[Origin::ChannelSender, Origin::LocalLoad])
            .unwrap();
        assert_eq!(sender, 640.0 / 1e-6);
        assert_eq!(both, 2.0 * sender);
        assert!(mem.measured_bandwidth((window.1, window.1), &[]).is_err());
    }

    #[test]
    fn scheme_json_roundtrip() {
        let scheme = crate::presets::private_scheme();
        let json = scheme.to_json();
        let back = InterleavingScheme::from_json(&json).unwrap();
        assert_eq!(back.bank_count, scheme.bank_count);
        assert_eq!(back.functions, scheme.functions);
        for addr in (0..4096u64).map(|i| i * 64) {
            assert_eq!(back.route_aligned(addr), scheme.route_aligned(addr));
        }
    }

    #[test]
    fn random_span_schemes_cover_their_span() {
        let mut rng = RngStream::new(5, "scheme-gen");
        for high in [10u8, 17, 26, 30] {
            let scheme = random_span_scheme(rng.rng(), high, 6);
            scheme.validate().unwrap();
            assert_eq!(scheme.bit_span(), (6, high));
            let mut all: Vec<u8> = scheme.functions.iter().flatten().copied().collect();
            all.sort_unstable();
            let expect: Vec<u8> = (6..=high).collect();
            assert_eq!(all, expect, "partition must cover the span exactly once");
        }
    }
}
