//! RDMA fabric types: node roles, link parameters, RDMA-exposed memory
//! regions with page-granular translation, and background-noise profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Sender,
    Receiver,
    Intermediary,
    Loader(u8),
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Sender => write!(f, "sender"),
            NodeId::Receiver => write!(f, "receiver"),
            NodeId::Intermediary => write!(f, "intermediary"),
            NodeId::Loader(k) => write!(f, "loader-{k}"),
        }
    }
}

/// Star topology around one top-of-rack switch; the cloud preset inserts
/// an extra core hop on every path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FabricConfig {
    pub link_bandwidth_bps: u64,
    pub propagation: SimTime,
    pub switch_latency: SimTime,
    pub extra_switch_hops: u32,
    pub nic_rx_delay: SimTime,
    pub nic_tx_delay: SimTime,
    pub client_overhead: SimTime,
    pub req_packet_bytes: u64,
    pub resp_header_bytes: u64,
    /// Max outstanding NIC-issued (DMA) reads per bank; overflow waits in
    /// the NIC, not in the memory controller. CPU-issued requests bypass it.
    pub net_window_per_bank: u32,
}

impl FabricConfig {
    /// Wire serialization time of `bytes` at the link rate.
    pub fn serialization(&self, bytes: u64) -> SimTime {
        SimTime::from_ps(bytes * 8 * 1_000_000 / (self.link_bandwidth_bps / 1_000_000))
    }

    /// Fixed one-way delay excluding both serialization points.
    pub fn one_way_fixed(&self) -> SimTime {
        let hops = 1 + self.extra_switch_hops as u64;
        SimTime::from_ps(hops * (self.propagation.as_ps() + self.switch_latency.as_ps()))
    }

    /// Idle round trip of a 64B read, as the sum of configured path delays.
    pub fn idle_rtt(&self, service_time: SimTime) -> SimTime {
        self.serialization(self.req_packet_bytes)
            + self.one_way_fixed()
            + self.serialization(self.req_packet_bytes)
            + self.nic_rx_delay
            + service_time
            + self.nic_tx_delay
            + self.serialization(64 + self.resp_header_bytes)
            + self.one_way_fixed()
            + self.client_overhead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PageSize {
    Small4K,
    Huge2M,
    Huge1G,
}

impl PageSize {
    pub fn bytes(self) -> u64 {
        match self {
            PageSize::Small4K => 4 << 10,
            PageSize::Huge2M => 2 << 20,
            PageSize::Huge1G => 1 << 30,
        }
    }

    pub fn shift(self) -> u32 {
        self.bytes().trailing_zeros()
    }
}

/// An RDMA-registered region: contiguous virtual range backed by
/// per-page physical frames. Virtual and physical addresses agree on the
/// low `page shift` bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryRegion {
    pub owner: NodeId,
    pub base_virt: u64,
    pub page_size: PageSize,
    /// Physical frame base per page, each aligned to the page size.
    pub frames: Vec<u64>,
}

impl MemoryRegion {
    pub fn size(&self) -> u64 {
        self.frames.len() as u64 * self.page_size.bytes()
    }

    pub fn end_virt(&self) -> u64 {
        self.base_virt + self.size()
    }

    pub fn contains(&self, virt: u64, len: u64) -> bool {
        virt >= self.base_virt && virt.checked_add(len).is_some_and(|e| e <= self.end_virt())
    }

    /// Page-granular translation; identity on the page-offset bits.
    pub fn virt_to_phys(&self, virt: u64) -> Result<u64> {
        if !self.contains(virt, 1) {
            return Err(Error::ProtectionFault(format!(
                "address {virt:#x} outside region of {}",
                self.owner
            )));
        }
        let off = virt - self.base_virt;
        let page = (off >> self.page_size.shift()) as usize;
        Ok(self.frames[page] | (off & (self.page_size.bytes() - 1)))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RttJitter {
    pub scale_ns: f64,
    pub sigma: f64,
}

impl RttJitter {
    pub fn is_off(&self) -> bool {
        self.scale_ns <= 0.0
    }
}

/// Background load levels plus the ambient round-trip jitter term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Open-loop read stream toward the intermediary (response bytes on its
    /// egress link), in Gb/s of wire traffic.
    pub network_load_gbps: f64,
    /// Read size the network loader uses.
    pub network_read_bytes: u64,
    /// Aggregate local memory traffic sweep range (GB/s) from the sixteen
    /// on-intermediary generators.
    pub local_load_gbps: (f64, f64),
    pub rtt_jitter: RttJitter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub _preset_hint: Option<String>,
}

impl NoiseProfile {
    pub fn validate(&self, fabric: &FabricConfig) -> Result<()> {
        let link_gbps = fabric.link_bandwidth_bps as f64 / 1e9;
        if self.network_load_gbps > link_gbps {
            return Err(Error::Config(format!(
                "network load {} Gb/s exceeds link bandwidth {} Gb/s",
                self.network_load_gbps, link_gbps
            )));
        }
        if self.network_load_gbps < 0.0 {
            return Err(Error::Config("network load must be non-negative".into()));
        }
        if self.network_read_bytes == 0 || self.network_read_bytes % 64 != 0 {
            return Err(Error::Config(
                "network_read_bytes must be a positive multiple of 64".into(),
            ));
        }
        let (lo, hi) = self.local_load_gbps;
        if lo < 0.0 || hi < lo {
            return Err(Error::Config(format!(
                "local load range [{lo}, {hi}] is not a valid sweep"
            )));
        }
        Ok(())
    }
}

/// Intermediary-local access-latency noise: a lognormal bulk plus explicit
/// rare tail bands `(probability, lo_ns, hi_ns)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLatencyProfile {
    pub base_ns: f64,
    pub bulk_median_ns: f64,
    pub bulk_sigma: f64,
    pub tail_bands: Vec<(f64, f64, f64)>,
}
