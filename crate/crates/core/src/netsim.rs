//! Single bottleneck link with a drop-tail FIFO and piecewise-constant capacity.
//!
//! The event loop is deterministic: events are ordered by time, then by
//! kind (completions before arrivals, so a departure frees queue space for a
//! simultaneous arrival), then by packet id.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{SimTime, NANOS_PER_SEC};
use crate::trace::{PacketRecord, ReceivedRecord, DEFAULT_MTU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub start: SimTime,
    pub bps: u64,
}

/// Available bandwidth as a staircase. The rate of a step applies on
/// `[start, next.start)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    steps: Vec<Step>,
}

impl BandwidthSchedule {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::config("link.schedule", "needs at least one step"));
        }
        for (i, s) in steps.iter().enumerate() {
            if s.bps == 0 {
                return Err(Error::config(format!("link.schedule[{i}].bps"), "must be positive"));
            }
            if i > 0 && s.start <= steps[i - 1].start {
                return Err(Error::config(
                    format!("link.schedule[{i}].start_s"),
                    "start times must be strictly increasing",
                ));
            }
        }
        Ok(BandwidthSchedule { steps })
    }

    pub fn constant(start: SimTime, bps: u64) -> Result<Self> {
        Self::new(vec![Step { start, bps }])
    }

    /// Builds a schedule from `(start_seconds, bits_per_second)` pairs.
    pub fn from_secs(steps: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            steps
                .iter()
                .map(|&(t, bps)| Step {
                    start: SimTime::from_secs_f64(t),
                    bps: bps.round().max(0.0) as u64,
                })
                .collect(),
        )
    }

    /// Staircase used by the default scenario: 1.5 Mb/s at 10 s stepping
    /// down every 4 s to a 0.2 Mb/s floor held over 22-30 s, then climbing
    /// back to 1.5 Mb/s. The intermediate plateau values are artifact choices.
    pub fn default_staircase() -> Self {
        Self::from_secs(&DEFAULT_STAIRCASE).expect("static schedule is valid")
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn start(&self) -> SimTime {
        self.steps[0].start
    }

    pub fn max_bps(&self) -> u64 {
        self.steps.iter().map(|s| s.bps).max().unwrap_or(0)
    }

    fn index_at(&self, t: SimTime) -> Option<usize> {
        match self.steps.partition_point(|s| s.start <= t) {
            0 => None,
            n => Some(n - 1),
        }
    }

    pub fn at(&self, t: SimTime) -> Result<u64> {
        self.index_at(t)
            .map(|i| self.steps[i].bps)
            .ok_or_else(|| Error::Query(format!("t={t} precedes the schedule start {}", self.start())))
    }

    /// Plateaus as `(start, end, bps)`, the last one closed at `horizon`.
    /// Plateaus starting at or after `horizon` are omitted.
    pub fn plateaus(&self, horizon: SimTime) -> Vec<(SimTime, SimTime, u64)> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.start < horizon)
            .map(|(i, s)| {
                let end = self.steps.get(i + 1).map_or(horizon, |n| n.start.min(horizon));
                (s.start, end, s.bps)
            })
            .collect()
    }

    /// Capacity offered over `[a, b]`, in bits, as an exact `bits * 1e9` integer.
    pub fn capacity_scaled(&self, a: SimTime, b: SimTime) -> u128 {
        if b <= a {
            return 0;
        }
        let mut total = 0u128;
        for (i, s) in self.steps.iter().enumerate() {
            let end = self.steps.get(i + 1).map_or(SimTime::MAX, |n| n.start);
            let lo = a.max(s.start);
            let hi = b.min(end);
            if hi > lo {
                total += u128::from(s.bps) * u128::from((hi - lo).as_nanos());
            }
        }
        total
    }

    pub fn capacity_bits(&self, a: SimTime, b: SimTime) -> f64 {
        self.capacity_scaled(a, b) as f64 / NANOS_PER_SEC as f64
    }

    /// Time at which `bits` finish serialising when started at `start`,
    /// integrating the rate across step boundaries.
    pub fn transmission_end(&self, start: SimTime, bits: u64) -> Result<SimTime> {
        let mut i = self
            .index_at(start)
            .ok_or_else(|| Error::Query(format!("transmission at {start} precedes the schedule")))?;
        let mut t = start;
        let mut remaining = u128::from(bits) * u128::from(NANOS_PER_SEC);
        loop {
            let bps = u128::from(self.steps[i].bps);
            match self.steps.get(i + 1) {
                Some(next) => {
                    let available = bps * u128::from((next.start - t).as_nanos());
                    if remaining <= available {
                        return Ok(t + SimTime(remaining.div_ceil(bps) as u64));
                    }
                    remaining -= available;
                    t = next.start;
                    i += 1;
                }
                None => return Ok(t + SimTime(remaining.div_ceil(bps).min(u128::from(u64::MAX)) as u64)),
            }
        }
    }
}

pub(crate) const DEFAULT_STAIRCASE: [(f64, f64); 12] = [
    (10.0, 1.5e6),
    (14.0, 1.0e6),
    (18.0, 0.6e6),
    (22.0, 0.2e6),
    (26.0, 0.2e6),
    (30.0, 0.3e6),
    (34.0, 0.4e6),
    (38.0, 0.5e6),
    (42.0, 0.6e6),
    (46.0, 0.9e6),
    (50.0, 1.2e6),
    (54.0, 1.5e6),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub schedule: BandwidthSchedule,
    /// Bytes waiting behind the packet in service.
    pub queue_capacity_bytes: u64,
    pub propagation_delay: SimTime,
    /// Width of the [`LinkStats`] time bins.
    pub stats_bin: SimTime,
}

impl LinkConfig {
    pub fn new(schedule: BandwidthSchedule) -> Self {
        LinkConfig {
            schedule,
            queue_capacity_bytes: 50 * u64::from(DEFAULT_MTU),
            propagation_delay: SimTime(10_000_000),
            stats_bin: SimTime(NANOS_PER_SEC),
        }
    }

    pub fn validate(&self, mtu: u32) -> Result<()> {
        if self.queue_capacity_bytes < u64::from(mtu) {
            return Err(Error::config(
                "link.queue_capacity_bytes",
                format!("{} is smaller than the MTU {mtu}", self.queue_capacity_bytes),
            ));
        }
        if self.stats_bin == SimTime::ZERO {
            return Err(Error::config("link.stats_bin_s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    TransmissionComplete,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimEvent {
    pub time: SimTime,
    pub kind: EventKind,
    pub packet_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Transmit,
    DropAtSource,
}

/// What a source-side hook may observe when deciding on a packet.
pub struct LinkView<'a> {
    pub now: SimTime,
    pub schedule: &'a BandwidthSchedule,
    deliveries: &'a [(SimTime, u64)],
}

impl<'a> LinkView<'a> {
    /// The same view truncated to an earlier instant.
    pub fn at(&self, t: SimTime) -> LinkView<'a> {
        LinkView { now: t.min(self.now), schedule: self.schedule, deliveries: self.deliveries }
    }

    /// Bits that reached the receiver in `[from, self.now]`.
    pub fn delivered_bits_since(&self, from: SimTime) -> u64 {
        let lo = self.deliveries.partition_point(|(t, _)| *t < from);
        let hi = self.deliveries.partition_point(|(t, _)| *t <= self.now);
        self.deliveries[lo..hi.max(lo)].iter().map(|(_, b)| *b).sum()
    }
}

/// Consulted for every packet before it enters the queue.
pub trait AdmissionHook {
    fn admit(&mut self, packet: &PacketRecord, view: &LinkView<'_>) -> Admission;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketFate {
    Delivered,
    CongestionDrop,
    SourceFiltered,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsBin {
    pub start: SimTime,
    pub throughput_bps: f64,
    pub mean_queue_bytes: f64,
    pub drops_congestion: u64,
    pub drops_filtered: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub offered: u64,
    pub delivered: u64,
    pub drops_congestion: u64,
    pub drops_filtered: u64,
    pub mean_queue_bytes: f64,
    pub bins: Vec<StatsBin>,
}

impl LinkStats {
    /// `t_bin throughput_bps queue_bytes drops_congestion drops_filtered`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_bin,throughput_bps,queue_bytes,drops_congestion,drops_filtered\n");
        for b in &self.bins {
            s.push_str(&format!(
                "{},{:.3},{:.3},{},{}\n",
                b.start, b.throughput_bps, b.mean_queue_bytes, b.drops_congestion, b.drops_filtered
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRun {
    /// In arrival order.
    pub received: Vec<ReceivedRecord>,
    pub stats: LinkStats,
    /// Indexed like the input packet list.
    pub fates: Vec<PacketFate>,
}

struct BinAccumulator {
    width: SimTime,
    origin: u64,
    bins: Vec<StatsBin>,
    queue_area: Vec<u128>,
    bits: Vec<u64>,
    last_change: SimTime,
    queue_bytes: u64,
    total_area: u128,
    first: SimTime,
}

impl BinAccumulator {
    fn new(width: SimTime, first: SimTime) -> Self {
        let origin = first.as_nanos() / width.as_nanos();
        BinAccumulator {
            width,
            origin,
            bins: Vec::new(),
            queue_area: Vec::new(),
            bits: Vec::new(),
            last_change: first,
            queue_bytes: 0,
            total_area: 0,
            first,
        }
    }

    fn bin(&mut self, t: SimTime) -> usize {
        let idx = (t.as_nanos() / self.width.as_nanos() - self.origin) as usize;
        while self.bins.len() <= idx {
            let start = SimTime((self.origin + self.bins.len() as u64) * self.width.as_nanos());
            self.bins.push(StatsBin { start, ..Default::default() });
            self.queue_area.push(0);
            self.bits.push(0);
        }
        idx
    }

    /// Integrates the current queue level up to `t`, then sets it to `bytes`.
    fn set_queue(&mut self, t: SimTime, bytes: u64) {
        let mut from = self.last_change;
        while from < t {
            let idx = self.bin(from);
            let bin_end = self.bins[idx].start + self.width;
            let to = bin_end.min(t);
            let area = u128::from(self.queue_bytes) * u128::from((to - from).as_nanos());
            self.queue_area[idx] += area;
            self.total_area += area;
            from = to;
        }
        self.last_change = t;
        self.queue_bytes = bytes;
    }

    fn finish(mut self, end: SimTime, mut stats: LinkStats) -> LinkStats {
        self.set_queue(end, self.queue_bytes);
        let w = self.width.as_secs_f64();
        for (i, b) in self.bins.iter_mut().enumerate() {
            b.throughput_bps = self.bits[i] as f64 / w;
            b.mean_queue_bytes = self.queue_area[i] as f64 / self.width.as_nanos() as f64;
        }
        let span = (end - self.first).as_nanos();
        stats.mean_queue_bytes = if span > 0 { self.total_area as f64 / span as f64 } else { 0.0 };
        stats.bins = self.bins;
        stats
    }
}

/// Runs `packets` (sorted by send time) through the link.
///
/// Delivered packets arrive at `service completion + propagation delay`.
/// A packet that finds the queue full is dropped; one rejected by `hook`
/// never enters the network. Neither produces a received record.
pub fn run_link(
    packets: &[PacketRecord],
    link: &LinkConfig,
    mut hook: Option<&mut dyn AdmissionHook>,
) -> Result<LinkRun> {
    if packets.windows(2).any(|w| w[1].send_time < w[0].send_time) {
        return Err(Error::Precondition("packets are not sorted by send time".into()));
    }
    if let Some(first) = packets.first() {
        if first.send_time < link.schedule.start() {
            return Err(Error::Precondition(format!(
                "first packet at {} precedes the bandwidth schedule start {}",
                first.send_time,
                link.schedule.start()
            )));
        }
    }
    if link.stats_bin == SimTime::ZERO {
        return Err(Error::config("link.stats_bin_s", "must be positive"));
    }

    let mut stats = LinkStats { offered: packets.len() as u64, ..Default::default() };
    let mut fates = vec![PacketFate::Delivered; packets.len()];
    let mut received = Vec::new();
    let Some(first) = packets.first() else {
        return Ok(LinkRun { received, stats, fates });
    };

    let mut acc = BinAccumulator::new(link.stats_bin, first.send_time);
    let mut events: BinaryHeap<Reverse<SimEvent>> = packets
        .iter()
        .enumerate()
        .map(|(i, p)| Reverse(SimEvent { time: p.send_time, kind: EventKind::Arrival, packet_id: i as u64 }))
        .collect();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut queued_bytes = 0u64;
    let mut in_service: Option<usize> = None;
    let mut deliveries: Vec<(SimTime, u64)> = Vec::new();
    let mut now = first.send_time;

    let start_service = |idx: usize, now: SimTime, events: &mut BinaryHeap<Reverse<SimEvent>>| -> Result<()> {
        let bits = u64::from(packets[idx].size_bytes) * 8;
        let done = link.schedule.transmission_end(now, bits)?;
        events.push(Reverse(SimEvent { time: done, kind: EventKind::TransmissionComplete, packet_id: idx as u64 }));
        Ok(())
    };

    while let Some(Reverse(ev)) = events.pop() {
        now = ev.time;
        let idx = ev.packet_id as usize;
        let pkt = &packets[idx];
        match ev.kind {
            EventKind::Arrival => {
                if let Some(h) = hook.as_deref_mut() {
                    let view = LinkView { now, schedule: &link.schedule, deliveries: &deliveries };
                    if h.admit(pkt, &view) == Admission::DropAtSource {
                        fates[idx] = PacketFate::SourceFiltered;
                        stats.drops_filtered += 1;
                        let b = acc.bin(now);
                        acc.bins[b].drops_filtered += 1;
                        continue;
                    }
                }
                if in_service.is_none() {
                    in_service = Some(idx);
                    start_service(idx, now, &mut events)?;
                } else if queued_bytes + u64::from(pkt.size_bytes) <= link.queue_capacity_bytes {
                    queue.push_back(idx);
                    queued_bytes += u64::from(pkt.size_bytes);
                    acc.set_queue(now, queued_bytes);
                } else {
                    fates[idx] = PacketFate::CongestionDrop;
                    stats.drops_congestion += 1;
                    let b = acc.bin(now);
                    acc.bins[b].drops_congestion += 1;
                }
            }
            EventKind::TransmissionComplete => {
                debug_assert_eq!(in_service, Some(idx));
                let arrival = now + link.propagation_delay;
                let bits = u64::from(pkt.size_bytes) * 8;
                received.push(ReceivedRecord { packet_id: pkt.packet_id, arrival_time: arrival, delay: arrival - pkt.send_time });
                deliveries.push((arrival, bits));
                stats.delivered += 1;
                let b = acc.bin(now);
                acc.bits[b] += bits;
                in_service = queue.pop_front();
                if let Some(next) = in_service {
                    queued_bytes -= u64::from(packets[next].size_bytes);
                    acc.set_queue(now, queued_bytes);
                    start_service(next, now, &mut events)?;
                }
            }
        }
    }

    let stats = acc.finish(now, stats);
    Ok(LinkRun { received, stats, fates })
}
