// Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use svcsim::receiver::{FrameOutcome, ReceivedNalu};
use svcsim::svc::{CodedUnit, DependencyGraph, GopConfig};
use svcsim::trace::{NaluKind, NaluRecord};
use svcsim::SimTime;

/// Units of a graph indexed densely, with each unit's prerequisites as a bitmask.
pub struct BitGraph {
    pub units: Vec<CodedUnit>,
    pub index: BTreeMap<CodedUnit, usize>,
    pub prereq: Vec<u128>,
}

impl BitGraph {
    pub fn new(graph: &DependencyGraph) -> Self {
        let units: Vec<CodedUnit> = graph.nodes().copied().collect();
        assert!(units.len() <= 128, "bitmask oracle holds at most 128 units");
        let index: BTreeMap<CodedUnit, usize> = units.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        let mut prereq = vec![0u128; units.len()];
        for (p, d) in graph.edges() {
            prereq[index[&d]] |= 1u128 << index[&p];
        }
        BitGraph { units, index, prereq }
    }

    pub fn full(&self) -> u128 {
        if self.units.len() == 128 {
            u128::MAX
        } else {
            (1u128 << self.units.len()) - 1
        }
    }

    /// Repeatedly deletes any unit with a missing prerequisite until nothing changes.
    pub fn iterative_deletion(&self, received: u128) -> u128 {
        let mut set = received;
        loop {
            let mut next = set;
            for i in 0..self.units.len() {
                if next & (1 << i) != 0 && self.prereq[i] & !next != 0 {
                    next &= !(1u128 << i);
                }
            }
            if next == set {
                return set;
            }
            set = next;
        }
    }

    pub fn to_set(&self, mask: u128) -> BTreeSet<CodedUnit> {
        (0..self.units.len()).filter(|i| mask & (1 << i) != 0).map(|i| self.units[i]).collect()
    }

    pub fn to_mask(&self, set: &BTreeSet<CodedUnit>) -> u128 {
        set.iter().fold(0, |m, u| m | 1u128 << self.index[u])
    }

    /// Every unit reachable backwards from `unit` (its transitive prerequisites).
    pub fn ancestors(&self, unit: usize) -> u128 {
        let mut seen = 0u128;
        let mut stack = vec![unit];
        while let Some(i) = stack.pop() {
            for j in 0..self.units.len() {
                if self.prereq[i] & (1 << j) != 0 && seen & (1 << j) == 0 {
                    seen |= 1 << j;
                    stack.push(j);
                }
            }
        }
        seen
    }
}

/// One NALU per graph unit, ids starting at 1, plus a parameter set as NALU 0.
pub fn unit_trace(graph: &DependencyGraph) -> Vec<NaluRecord> {
    let mut out = vec![NaluRecord {
        nalu_id: 0,
        frame_index: 0,
        layer: Default::default(),
        size_bytes: 24,
        kind: NaluKind::ParameterSet,
    }];
    for (i, u) in graph.nodes().enumerate() {
        out.push(NaluRecord {
            nalu_id: i as u64 + 1,
            frame_index: u.frame_index,
            layer: u.layer,
            size_bytes: 100,
            kind: if u.layer.qid == 0 { NaluKind::SliceBase } else { NaluKind::SliceEnhancement },
        });
    }
    out
}

pub fn received_nalus(bits: &BitGraph, trace: &[NaluRecord], mask: u128) -> Vec<ReceivedNalu> {
    trace
        .iter()
        .filter(|n| {
            n.kind == NaluKind::ParameterSet
                || mask & (1u128 << bits.index[&CodedUnit::new(n.frame_index, n.layer)]) != 0
        })
        .map(|n| ReceivedNalu { nalu_id: n.nalu_id, delay: SimTime::ZERO })
        .collect()
}

/// Frame outcomes derived directly from a decodable unit mask.
pub fn expected_outcomes(bits: &BitGraph, decodable: u128, gop: &GopConfig, num_frames: u32) -> Vec<FrameOutcome> {
    let mut base = vec![false; num_frames as usize];
    let mut qid: Vec<Option<u8>> = vec![None; num_frames as usize];
    for (i, u) in bits.units.iter().enumerate() {
        if decodable & (1 << i) == 0 {
            continue;
        }
        let f = u.frame_index as usize;
        if u.layer.qid == 0 {
            base[f] = true;
        }
        qid[f] = Some(qid[f].map_or(u.layer.qid, |q| q.max(u.layer.qid)));
    }
    let g = gop.gop_size;
    let top = gop.temporal_levels - 1;
    (0..num_frames)
        .map(|f| {
            let k = f / g;
            let members: Vec<u32> = (k * g..((k + 1) * g).min(num_frames)).collect();
            let tid = if members.iter().all(|&m| base[m as usize]) {
                top
            } else {
                members.iter().filter(|&&m| base[m as usize]).map(|&m| gop.tid_of(m)).max().unwrap_or(0)
            };
            FrameOutcome {
                frame_index: f,
                decodable: base[f as usize],
                delivered_qid: if base[f as usize] { qid[f as usize] } else { None },
                delivered_tid: tid,
            }
        })
        .collect()
}

/// Keeps each of `n` units independently with probability `1 - loss`.
pub fn loss_mask(rng: &mut impl Rng, n: usize, loss: f64) -> u128 {
    (0..n).filter(|_| !rng.random_bool(loss)).fold(0, |m, i| m | 1u128 << i)
}
