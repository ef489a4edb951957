//! End-to-end experiment: for each scheme, synthesise a trace, packetise it,
//! push it through the adaptive link, post-process at the receiver and score
//! the result. Every intermediate trace can be written out and re-scored.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::adaptation::{AdaptationUnit, Selection};
use crate::error::{Error, Result};
use crate::metrics::{mos_from_psnr, network_stats, reconstruct_psnr_timeline, segment_means, NetworkStats, QualityTimeline, SegmentMean};
use crate::netsim::{run_link, LinkStats, PacketFate};
use crate::receiver::{apply_deadline, decodable_frame_ratio, prune_and_decode, reassemble_nalus, FrameOutcome};
use crate::svc::{build_graph, Scheme};
use crate::time::SimTime;
use crate::trace::{packetize, synthesize_trace, BitrateLadder, NaluRecord, PacketRecord, ReceivedRecord};

pub use config::{
    EstimatorSection, LadderEntry, Ladders, LinkSection, PlayoutSection, QualitySection, ScenarioConfig, ScheduleStep,
    TransportConfig, VideoConfig,
};
pub use output::{check_report, emit_plots, recompute_report, write_run, ReportCheck};

/// Headline numbers for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub run_mean_psnr_db: f64,
    pub decodable_frame_ratio: f64,
    pub mos: u8,
    pub mos_label: String,
    pub loss_rate: f64,
    pub mean_delay_s: f64,
    pub frames: u32,
    pub decodable_frames: u32,
    pub packets_offered: u64,
    pub packets_sent: u64,
    pub packets_received: u64,
    pub packets_filtered: u64,
    pub segments: Vec<SegmentMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub schemes: BTreeMap<Scheme, SchemeReport>,
}

/// Everything one scheme's pipeline produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Bitrates measured from the synthesised trace.
    pub ladder: BitrateLadder,
    pub nalus: Vec<NaluRecord>,
    /// Every packet the encoder produced.
    pub packets: Vec<PacketRecord>,
    /// Packets the adaptation unit let into the network.
    pub sent: Vec<PacketRecord>,
    pub received: Vec<ReceivedRecord>,
    pub selections: Vec<Selection>,
    pub link_stats: LinkStats,
    pub outcomes: Vec<FrameOutcome>,
    pub timeline: QualityTimeline,
    pub network: NetworkStats,
    pub report: SchemeReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub schemes: Vec<SchemeRun>,
}

impl ScenarioRun {
    pub fn report(&self) -> RunReport {
        RunReport {
            seed: self.config.seed,
            schemes: self.schemes.iter().map(|s| (s.scheme, s.report.clone())).collect(),
        }
    }

    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeRun> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

/// Runs every configured scheme. Schemes are independent and run on their
/// own threads; results come back in configuration order.
pub fn simulate(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let results: Vec<Result<SchemeRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg.schemes.iter().map(|&scheme| s.spawn(move || simulate_scheme(cfg, scheme))).collect();
        handles.into_iter().map(|h| h.join().expect("scheme pipeline panicked")).collect()
    });
    Ok(ScenarioRun { config: cfg.clone(), schemes: results.into_iter().collect::<Result<_>>()? })
}

/// [`simulate`], then write all traces, the report and the plot data to `outdir`.
pub fn run_scenario(cfg: &ScenarioConfig, outdir: &Path) -> Result<RunReport> {
    let run = simulate(cfg)?;
    write_run(&run, outdir)?;
    Ok(run.report())
}

fn shift(packets: &mut [PacketRecord], start: SimTime) {
    for p in packets {
        p.send_time = p.send_time + start;
    }
}

fn simulate_scheme(cfg: &ScenarioConfig, scheme: Scheme) -> Result<SchemeRun> {
    let gop = cfg.gop(scheme)?;
    let v = &cfg.video;
    let (nalus, ladder) = synthesize_trace(&gop, v.num_frames, &cfg.ladder(scheme)?, v.frame_rate, cfg.seed, &cfg.size_model())?;
    let mut packets = packetize(&nalus, cfg.transport.mtu, cfg.transport.header_overhead, v.frame_rate)?;
    shift(&mut packets, cfg.start());
    debug!("{scheme}: {} NALUs, {} packets", nalus.len(), packets.len());

    let link = cfg.link_config()?;
    let mut unit = AdaptationUnit::new(ladder.clone(), cfg.estimator_config()?)?;
    let run = run_link(&packets, &link, Some(&mut unit))?;
    let sent: Vec<PacketRecord> = packets
        .iter()
        .zip(&run.fates)
        .filter(|(_, f)| **f != PacketFate::SourceFiltered)
        .map(|(p, _)| *p)
        .collect();

    let scored = score(cfg, scheme, &nalus, &ladder, &packets, &sent, &run.received)?;
    info!(
        "{scheme}: mean PSNR {:.2} dB, decodable {:.1}%, loss {:.2}%",
        scored.report.run_mean_psnr_db,
        scored.report.decodable_frame_ratio * 100.0,
        scored.report.loss_rate * 100.0
    );
    Ok(SchemeRun {
        scheme,
        ladder,
        nalus,
        packets,
        sent,
        received: run.received,
        selections: unit.into_log(),
        link_stats: run.stats,
        outcomes: scored.outcomes,
        timeline: scored.timeline,
        network: scored.network,
        report: scored.report,
    })
}

pub(crate) struct Scored {
    pub outcomes: Vec<FrameOutcome>,
    pub timeline: QualityTimeline,
    pub network: NetworkStats,
    pub report: SchemeReport,
}

/// Receiver and metrics stages; a pure function of the traces so that a
/// written run can be re-scored from disk.
pub(crate) fn score(
    cfg: &ScenarioConfig,
    scheme: Scheme,
    nalus: &[NaluRecord],
    ladder: &BitrateLadder,
    packets: &[PacketRecord],
    sent: &[PacketRecord],
    received: &[ReceivedRecord],
) -> Result<Scored> {
    let gop = cfg.gop(scheme)?;
    let n = cfg.video.num_frames;
    let complete = reassemble_nalus(received, packets)?;
    let on_time = apply_deadline(&complete, &cfg.playout_config()?);
    let graph = build_graph(&gop, n)?;
    let outcomes = prune_and_decode(&on_time, nalus, &graph, &gop, n)?;
    let ratio = decodable_frame_ratio(&outcomes, u64::from(n))?;

    let mut timeline =
        reconstruct_psnr_timeline(&outcomes, ladder, cfg.quality.nondecodable_psnr_db, cfg.start(), cfg.video.frame_rate)?;
    let intervals: Vec<(SimTime, SimTime)> =
        cfg.schedule()?.plateaus(cfg.end()).into_iter().map(|(a, b, _)| (a, b)).collect();
    timeline.segments = segment_means(&timeline.frames, &intervals);

    let link = cfg.link_config()?;
    let network = network_stats(sent, received, link.stats_bin)?;
    if sent.len() > packets.len() {
        return Err(Error::Input("more packets sent than produced".into()));
    }
    let mos = mos_from_psnr(timeline.run_mean_psnr_db);
    let report = SchemeReport {
        scheme,
        run_mean_psnr_db: timeline.run_mean_psnr_db,
        decodable_frame_ratio: ratio,
        mos: mos.score,
        mos_label: mos.label.to_string(),
        loss_rate: network.loss_rate,
        mean_delay_s: network.mean_delay_s,
        frames: n,
        decodable_frames: outcomes.iter().filter(|o| o.decodable).count() as u32,
        packets_offered: packets.len() as u64,
        packets_sent: sent.len() as u64,
        packets_received: received.len() as u64,
        packets_filtered: (packets.len() - sent.len()) as u64,
        segments: timeline.segments.clone(),
    };
    Ok(Scored { outcomes, timeline, network, report })
}
