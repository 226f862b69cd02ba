//! Bank-bit discovery: from a node with nothing but RDMA-read access,
//! locate the most-significant bank-influencing address bit X and produce
//! address sets that co-map to one bank.
//!
//! The agent fixes one more low address bit to zero per iteration and
//! watches the closed-loop read throughput; once it collapses to a single
//! bank's worth, every bank-selector input is pinned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memsys::Origin;
use crate::rdmanet::{MemoryRegion, NodeId};
use crate::sim::World;
use crate::simkernel::{RngStream, SimTime};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    /// Addresses per measurement; large enough to defeat NIC request
    /// coalescing.
    pub probe_set_size: usize,
    pub measure_duration: SimTime,
    pub warmup: SimTime,
    /// Gap after each measurement for in-flight reads to drain.
    pub quiesce: SimTime,
    /// Convergence: throughput at or below `factor * per-bank peak`.
    pub single_bank_threshold_factor: f64,
    /// Iterations confirming convergence before accepting it.
    pub confirmations: u32,
    pub max_bit: u8,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            probe_set_size: 64,
            measure_duration: SimTime::from_us(40),
            warmup: SimTime::from_us(10),
            quiesce: SimTime::from_us(15),
            single_bank_threshold_factor: 1.05,
            confirmations: 2,
            max_bit: 35,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probe_set_size < 64 {
            return Err(Error::Config(
                "probe_set_size must be >= 64 to defeat request coalescing".into(),
            ));
        }
        if self.measure_duration.as_ps() == 0 {
            return Err(Error::Contract("measurement duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Highest address bit fixed to zero during this measurement (5 means
    /// only the 64B alignment bits).
    pub fixed_high_bit: u8,
    pub throughput_bps: f64,
    /// Ground-truth diagnostic: distinct banks the probe set touched.
    pub distinct_banks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscoveryOutcome {
    Converged { x_bit: u8 },
    /// Throughput never collapsed to one bank: cryptographic or unknown
    /// interleaving (the mitigation signal, not a failure).
    CryptoOrUnknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub outcome: DiscoveryOutcome,
    /// `[6, x_bit]` when converged.
    pub fixed_span: Option<(u8, u8)>,
    pub throughput_by_iteration: Vec<IterationRecord>,
    /// Virtual addresses with every span bit zero (single-bank by
    /// construction once converged).
    pub sample_addresses: Vec<u64>,
}

impl DiscoveryResult {
    pub fn x_bit(&self) -> Option<u8> {
        match self.outcome {
            DiscoveryOutcome::Converged { x_bit } => Some(x_bit),
            DiscoveryOutcome::CryptoOrUnknown { .. } => None,
        }
    }
}

fn origin_for(src: NodeId) -> Origin {
    match src {
        NodeId::Receiver => Origin::ChannelReceiver,
        _ => Origin::ChannelSender,
    }
}

/// Closed-loop pipelined read throughput over `addrs` for `duration`
/// (after `warmup`), in bytes per second of completed responses.
pub fn measure_throughput(
    world: &mut World,
    src: NodeId,
    addrs: &[u64],
    duration: SimTime,
    warmup: SimTime,
) -> Result<f64> {
    if addrs.is_empty() {
        return Err(Error::Contract("empty address set".into()));
    }
    if duration.as_ps() == 0 {
        return Err(Error::Contract("measurement duration must be positive".into()));
    }
    let t0 = world.now();
    let end = t0 + warmup + duration;
    world.start_chains_with_origin(src, addrs, end, origin_for(src));
    world.run_until(t0 + warmup);
    let start_bytes = world.chain_bytes();
    world.run_until(end);
    let completed = world.chain_bytes() - start_bytes;
    world.stop_chains();
    Ok(completed as f64 / duration.as_secs_f64())
}

/// Free (drawable) bit positions of a region's offset space above
/// `fixed_high`, excluding the 64B alignment bits.
fn free_bits(region: &MemoryRegion, fixed_high: u8) -> Vec<u8> {
    let top = 64 - (region.size() - 1).leading_zeros() as u8; // offset bits [0, top)
    ((fixed_high + 1).max(6)..top).collect()
}

fn scatter(combo: u64, positions: &[u8]) -> u64 {
    positions
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &p)| acc | (((combo >> i) & 1) << p))
}

/// Draw `count` distinct offsets with bits `[0, fixed_high]` zero and the
/// remaining free bits uniform.
fn draw_offsets(
    region: &MemoryRegion,
    fixed_high: u8,
    count: usize,
    rng: &mut RngStream,
) -> Option<Vec<u64>> {
    use rand::Rng;
    let positions = free_bits(region, fixed_high);
    if (1u128 << positions.len()) < count as u128 {
        return None;
    }
    let capacity = 1u64 << positions.len();
    if capacity == count as u64 {
        // Exactly enough: enumerate rather than reject-sample.
        return Some((0..capacity).map(|c| scatter(c, &positions)).collect());
    }
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < count {
        let combo = rng.rng().gen::<u64>() & (capacity - 1);
        seen.insert(scatter(combo, &positions));
    }
    Some(seen.into_iter().collect())
}

/// Iteratively pin low address bits to zero until read throughput collapses
/// to one bank, revealing the most-significant bank bit.
pub fn discover_bank_span(
    world: &mut World,
    src: NodeId,
    cfg: &DiscoveryConfig,
) -> Result<DiscoveryResult> {
    cfg.validate()?;
    let region = world.region(src).clone();
    let mut rng = RngStream::new(world.seed(), &format!("discovery-{src}"));
    let threshold =
        cfg.single_bank_threshold_factor * world.mem.timing.per_bank_peak();

    let mut records = Vec::new();
    let mut crossing: Option<u8> = None;
    let mut confirmed = 0u32;
    let mut exhausted = false;

    // fixed_high = 5 is the alignment-only baseline measurement.
    for fixed_high in 5..=cfg.max_bit {
        let offsets = match draw_offsets(&region, fixed_high, cfg.probe_set_size, &mut rng) {
            Some(o) => o,
            None => {
                if fixed_high == 5 {
                    return Err(Error::Config(format!(
                        "region of {} cannot yield {} distinct probe addresses",
                        src, cfg.probe_set_size
                    )));
                }
                exhausted = true;
                break;
            }
        };
        let addrs: Vec<u64> = offsets.iter().map(|o| region.base_virt + o).collect();
        let distinct_banks = ground_truth_banks(world, &region, &addrs);
        let tput = measure_throughput(world, src, &addrs, cfg.measure_duration, cfg.warmup)?;
        let t = world.now();
        world.run_until(t + cfg.quiesce);
        records.push(IterationRecord {
            fixed_high_bit: fixed_high,
            throughput_bps: tput,
            distinct_banks,
        });

        if tput <= threshold {
            match crossing {
                None => {
                    crossing = Some(fixed_high);
                    confirmed = 0;
                }
                Some(_) => {
                    confirmed += 1;
                    if confirmed >= cfg.confirmations {
                        break;
                    }
                }
            }
        } else {
            crossing = None;
            confirmed = 0;
        }
    }

    match crossing {
        Some(x_bit) if confirmed >= cfg.confirmations => {
            let sample_addresses =
                pick_bank_addresses(&region, (6, x_bit), cfg.probe_set_size)?;
            Ok(DiscoveryResult {
                outcome: DiscoveryOutcome::Converged { x_bit },
                fixed_span: Some((6, x_bit)),
                throughput_by_iteration: records,
                sample_addresses,
            })
        }
        _ => {
            let reason = if exhausted {
                "address capacity exhausted before throughput converged".to_string()
            } else {
                format!(
                    "throughput never converged to a single bank within bit {}",
                    cfg.max_bit
                )
            };
            Ok(DiscoveryResult {
                outcome: DiscoveryOutcome::CryptoOrUnknown { reason },
                fixed_span: None,
                throughput_by_iteration: records,
                sample_addresses: Vec::new(),
            })
        }
    }
}

fn ground_truth_banks(world: &World, region: &MemoryRegion, addrs: &[u64]) -> u32 {
    let mut banks = std::collections::BTreeSet::new();
    for &a in addrs {
        if let Ok(phys) = region.virt_to_phys(a) {
            banks.insert(world.mem.scheme.route_aligned(phys));
        }
    }
    banks.len() as u32
}

/// `count` distinct 64B-aligned addresses with all span bits zero, spread
/// across the region's pages.
pub fn pick_bank_addresses(
    region: &MemoryRegion,
    span: (u8, u8),
    count: usize,
) -> Result<Vec<u64>> {
    let page_shift = region.page_size.shift() as u8;
    let free: Vec<u8> = (6..page_shift)
        .filter(|b| *b < span.0 || *b > span.1)
        .collect();
    let per_page = 1u64 << free.len();
    let pages = region.frames.len() as u64;
    if (count as u64) > per_page * pages {
        return Err(Error::Contract(format!(
            "region yields {per_page} single-bank addresses per page ({pages} pages); {count} requested"
        )));
    }
    let mut out = Vec::with_capacity(count);
    for idx in 0..count as u64 {
        let page = idx % pages;
        let combo = idx / pages;
        let offset = (page << page_shift) | scatter(combo, &free);
        out.push(region.base_virt + offset);
    }
    Ok(out)
}
