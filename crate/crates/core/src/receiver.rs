//! Receiver-side post-processing: NALU reassembly, playout deadline,
//! dependency pruning and per-frame outcomes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svc::{decodable_units, CodedUnit, DependencyGraph, GopConfig};
use crate::time::SimTime;
use crate::trace::{NaluKind, NaluRecord, PacketRecord, ReceivedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayoutConfig {
    /// Maximum end-to-end delay; [`SimTime::MAX`] disables the check.
    pub deadline: SimTime,
}

impl Default for PlayoutConfig {
    fn default() -> Self {
        PlayoutConfig { deadline: SimTime(1_000_000_000) }
    }
}

impl PlayoutConfig {
    pub fn unlimited() -> Self {
        PlayoutConfig { deadline: SimTime::MAX }
    }

    pub fn validate(&self) -> Result<()> {
        if self.deadline == SimTime::ZERO {
            return Err(Error::config("playout.deadline_s", "must be positive"));
        }
        Ok(())
    }
}

/// A NALU all of whose fragments arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReceivedNalu {
    pub nalu_id: u64,
    /// Largest delay among its fragments.
    pub delay: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame_index: u32,
    pub decodable: bool,
    /// Highest decodable quality level; `None` iff not decodable.
    pub delivered_qid: Option<u8>,
    /// Temporal operating level of the frame's GOP: the highest temporal
    /// level among its decodable frames, or the top level when every frame
    /// of the GOP decodes.
    pub delivered_tid: u8,
}

/// Groups received packets into NALUs. Returned in send (NALU id) order.
pub fn reassemble_nalus(received: &[ReceivedRecord], packets: &[PacketRecord]) -> Result<Vec<ReceivedNalu>> {
    let by_id: BTreeMap<u64, &PacketRecord> = packets.iter().map(|p| (p.packet_id, p)).collect();
    let mut fragments: BTreeMap<u64, u32> = BTreeMap::new();
    for p in packets {
        *fragments.entry(p.nalu_id).or_default() += 1;
    }
    let mut got: BTreeMap<u64, (BTreeSet<u32>, SimTime)> = BTreeMap::new();
    for r in received {
        let p = by_id
            .get(&r.packet_id)
            .ok_or_else(|| Error::Input(format!("received packet {} is not in the packet trace", r.packet_id)))?;
        let e = got.entry(p.nalu_id).or_insert_with(|| (BTreeSet::new(), SimTime::ZERO));
        e.0.insert(p.fragment_index);
        e.1 = e.1.max(r.delay);
    }
    Ok(got
        .into_iter()
        .filter(|(id, (frags, _))| frags.len() as u32 == fragments[id])
        .map(|(nalu_id, (_, delay))| ReceivedNalu { nalu_id, delay })
        .collect())
}

/// Drops NALUs later than the deadline (strictly greater) and sorts the rest
/// into send order.
pub fn apply_deadline(nalus: &[ReceivedNalu], cfg: &PlayoutConfig) -> Vec<ReceivedNalu> {
    let mut out: Vec<ReceivedNalu> = nalus.iter().copied().filter(|n| n.delay <= cfg.deadline).collect();
    out.sort();
    out
}

/// Decodes the surviving NALUs and reports one outcome per source frame.
///
/// `trace` maps NALU ids to coded units; parameter sets are ignored.
pub fn prune_and_decode(
    nalus: &[ReceivedNalu],
    trace: &[NaluRecord],
    graph: &DependencyGraph,
    gop: &GopConfig,
    num_frames: u32,
) -> Result<Vec<FrameOutcome>> {
    let units: BTreeMap<u64, &NaluRecord> = trace.iter().map(|n| (n.nalu_id, n)).collect();
    let mut received = BTreeSet::new();
    for n in nalus {
        let rec = units
            .get(&n.nalu_id)
            .ok_or_else(|| Error::Input(format!("NALU {} is not in the NALU trace", n.nalu_id)))?;
        if rec.kind == NaluKind::ParameterSet {
            continue;
        }
        let unit = CodedUnit { frame_index: rec.frame_index, layer: rec.layer };
        if !graph.contains(&unit) {
            return Err(Error::Input(format!(
                "NALU {} maps to frame {} layer {} which is not in the dependency graph",
                n.nalu_id, rec.frame_index, rec.layer
            )));
        }
        received.insert(unit);
    }
    let decodable = decodable_units(&received, graph);

    let mut best_qid: BTreeMap<u32, u8> = BTreeMap::new();
    let mut base_ok: BTreeSet<u32> = BTreeSet::new();
    for u in &decodable {
        if u.layer.qid == 0 {
            base_ok.insert(u.frame_index);
        }
        let q = best_qid.entry(u.frame_index).or_insert(u.layer.qid);
        *q = (*q).max(u.layer.qid);
    }

    // A GOP whose frames all decode plays at full frame rate even when it is
    // truncated by the end of the video and lacks the upper temporal levels.
    let g = gop.gop_size.max(1);
    let top_tid = gop.temporal_levels - 1;
    let mut gop_level: BTreeMap<u32, u8> = BTreeMap::new();
    for &f in &base_ok {
        let lvl = gop_level.entry(f / g).or_insert(0);
        *lvl = (*lvl).max(gop.tid_of(f));
    }
    for (&k, lvl) in gop_level.iter_mut() {
        let frames = (k * g)..((k + 1) * g).min(num_frames);
        if frames.clone().all(|f| base_ok.contains(&f)) {
            *lvl = top_tid;
        }
    }

    Ok((0..num_frames)
        .map(|f| {
            let decodable = base_ok.contains(&f);
            FrameOutcome {
                frame_index: f,
                decodable,
                delivered_qid: if decodable { best_qid.get(&f).copied() } else { None },
                delivered_tid: gop_level.get(&(f / g)).copied().unwrap_or(0),
            }
        })
        .collect())
}

/// Decodable frames over all frames the source produced.
pub fn decodable_frame_ratio(outcomes: &[FrameOutcome], total_sent_frames: u64) -> Result<f64> {
    if total_sent_frames == 0 {
        return Err(Error::Precondition("total_sent_frames must be at least 1".into()));
    }
    let n = outcomes.iter().filter(|o| o.decodable).count() as f64;
    Ok((n / total_sent_frames as f64).min(1.0))
}

/// `frame_index decodable delivered_tid delivered_qid`
pub fn frame_outcomes_csv(outcomes: &[FrameOutcome]) -> String {
    let mut s = String::from("frame_index,decodable,delivered_tid,delivered_qid\n");
    for o in outcomes {
        let q = o.delivered_qid.map(|q| q.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", o.frame_index, u8::from(o.decodable), o.delivered_tid, q));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svc::{build_graph, LayerId, Scheme};
    use crate::trace::{packetize, NaluKind};

    fn secs(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn three_fragment_nalu() -> Vec<PacketRecord> {
        let nalu = NaluRecord {
            nalu_id: 7,
            frame_index: 0,
            layer: LayerId::BASE,
            size_bytes: 3000,
            kind: NaluKind::SliceBase,
        };
        packetize(&[nalu], 1500, 40, 30.0).unwrap()
    }

    fn rec(id: u64, delay: f64) -> ReceivedRecord {
        ReceivedRecord { packet_id: id, arrival_time: secs(1.0 + delay), delay: secs(delay) }
    }

    #[test]
    fn nalu_delay_is_max_fragment_delay() {
        let pkts = three_fragment_nalu();
        let got = reassemble_nalus(&[rec(0, 0.02), rec(1, 0.05), rec(2, 0.03)], &pkts).unwrap();
        assert_eq!(got, vec![ReceivedNalu { nalu_id: 7, delay: secs(0.05) }]);
    }

    #[test]
    fn partial_nalu_is_discarded() {
        let pkts = three_fragment_nalu();
        assert!(reassemble_nalus(&[rec(0, 0.02), rec(2, 0.03)], &pkts).unwrap().is_empty());
        assert!(matches!(reassemble_nalus(&[rec(9, 0.0)], &pkts), Err(Error::Input(_))));
    }

    #[test]
    fn deadline_is_strict() {
        let nalus: Vec<_> = [0.1, 0.49, 0.51, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &d)| ReceivedNalu { nalu_id: 3 - i as u64, delay: secs(d) })
            .collect();
        let out = apply_deadline(&nalus, &PlayoutConfig { deadline: secs(0.5) });
        assert_eq!(out.iter().map(|n| n.nalu_id).collect::<Vec<_>>(), vec![0, 2, 3]);
        let all = apply_deadline(&nalus, &PlayoutConfig::unlimited());
        assert_eq!(all.len(), 4);
    }

    fn trace_for(gop: &GopConfig, frames: u32) -> Vec<NaluRecord> {
        let mut v = vec![NaluRecord { nalu_id: 0, frame_index: 0, layer: LayerId::BASE, size_bytes: 24, kind: NaluKind::ParameterSet }];
        for f in 0..frames {
            for q in 0..gop.quality_levels {
                v.push(NaluRecord {
                    nalu_id: v.len() as u64,
                    frame_index: f,
                    layer: LayerId::tq(gop.tid_of(f), q),
                    size_bytes: 100,
                    kind: if q == 0 { NaluKind::SliceBase } else { NaluKind::SliceEnhancement },
                });
            }
        }
        v
    }

    fn all_received(trace: &[NaluRecord]) -> Vec<ReceivedNalu> {
        trace.iter().map(|n| ReceivedNalu { nalu_id: n.nalu_id, delay: SimTime::ZERO }).collect()
    }

    #[test]
    fn lossless_decodes_everything_at_top() {
        let gop = GopConfig::new(4, 2, Scheme::Cgs).unwrap();
        let trace = trace_for(&gop, 9);
        let graph = build_graph(&gop, 9).unwrap();
        let out = prune_and_decode(&all_received(&trace), &trace, &graph, &gop, 9).unwrap();
        assert!(out.iter().all(|o| o.decodable && o.delivered_qid == Some(1) && o.delivered_tid == 2));
        assert_eq!(decodable_frame_ratio(&out, 9).unwrap(), 1.0);
    }

    #[test]
    fn lost_anchor_base_hits_its_neighbours() {
        // frame 4 base lost: frame 4 and the frames predicted from it go
        let gop = GopConfig::new(4, 1, Scheme::Fgs).unwrap();
        let trace = trace_for(&gop, 9);
        let graph = build_graph(&gop, 9).unwrap();
        let nalus: Vec<_> = all_received(&trace).into_iter().filter(|n| n.nalu_id != 5).collect();
        let out = prune_and_decode(&nalus, &trace, &graph, &gop, 9).unwrap();
        let bad: Vec<u32> = out.iter().filter(|o| !o.decodable).map(|o| o.frame_index).collect();
        assert_eq!(bad, vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(out[0].delivered_qid, Some(0));
        assert_eq!(out[1].delivered_qid, None);
    }

    #[test]
    fn unmapped_nalu_is_an_input_error() {
        let gop = GopConfig::new(4, 1, Scheme::Fgs).unwrap();
        let trace = trace_for(&gop, 4);
        let graph = build_graph(&gop, 4).unwrap();
        let bogus = [ReceivedNalu { nalu_id: 99, delay: SimTime::ZERO }];
        assert!(matches!(prune_and_decode(&bogus, &trace, &graph, &gop, 4), Err(Error::Input(_))));
    }

    #[test]
    fn temporal_operating_point_per_gop() {
        // only T0 frames arrive: every GOP runs at T0
        let gop = GopConfig::new(4, 1, Scheme::Cgs).unwrap();
        let trace = trace_for(&gop, 8);
        let graph = build_graph(&gop, 8).unwrap();
        let nalus: Vec<_> = all_received(&trace)
            .into_iter()
            .filter(|n| n.nalu_id == 0 || trace[n.nalu_id as usize].layer.tid == 0)
            .collect();
        let out = prune_and_decode(&nalus, &trace, &graph, &gop, 8).unwrap();
        assert!(out.iter().all(|o| o.delivered_tid == 0));
        assert_eq!(decodable_frame_ratio(&out, 8).unwrap(), 0.25);
    }

    #[test]
    fn ratio_bounds() {
        assert!(decodable_frame_ratio(&[], 0).is_err());
        assert_eq!(decodable_frame_ratio(&[], 5).unwrap(), 0.0);
    }
}
