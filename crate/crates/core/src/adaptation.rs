//! Source-side rate adaptation.
//!
//! Every estimation period the network reports an available-bandwidth
//! estimate; the adaptation unit picks the highest ladder layer whose rate
//! fits under it and drops, before they enter the network, all NALUs whose
//! layer lies outside that extraction point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::{Admission, AdmissionHook, LinkView};
use crate::svc::LayerId;
use crate::time::SimTime;
use crate::trace::{BitrateLadder, PacketRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// The schedule's true available bandwidth.
    Oracle,
    /// Bits delivered to the receiver over a trailing window.
    ThroughputWindow,
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Oracle => "oracle",
            EstimatorMode::ThroughputWindow => "throughput-window",
        })
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(EstimatorMode::Oracle),
            "throughput-window" => Ok(EstimatorMode::ThroughputWindow),
            other => Err(Error::config("estimator.mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub period: SimTime,
    pub mode: EstimatorMode,
    pub window: SimTime,
    /// Periods between taking an estimate and acting on it.
    pub reaction_delay_periods: u32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            period: SimTime::from_secs_f64(1.0),
            mode: EstimatorMode::Oracle,
            window: SimTime::from_secs_f64(1.0),
            reaction_delay_periods: 1,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == SimTime::ZERO {
            return Err(Error::config("estimator.period_s", "must be positive"));
        }
        if self.mode == EstimatorMode::ThroughputWindow && self.window < self.period {
            return Err(Error::config("estimator.window_s", "must be at least one period"));
        }
        Ok(())
    }
}

/// Layer chosen at one estimation instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub time: SimTime,
    pub estimate_bps: f64,
    pub chosen_layer: LayerId,
    pub chosen_bitrate_kbps: f64,
}

/// Available bandwidth as seen at `t`.
pub fn estimate_bandwidth(t: SimTime, view: &LinkView<'_>, cfg: &EstimatorConfig) -> f64 {
    match cfg.mode {
        EstimatorMode::Oracle => view.schedule.at(t).map(|b| b as f64).unwrap_or(0.0),
        EstimatorMode::ThroughputWindow => {
            let from = t.saturating_sub(cfg.window);
            let bits = view.at(t).delivered_bits_since(from);
            bits as f64 / cfg.window.as_secs_f64()
        }
    }
}

/// Highest row whose rate is `<=` the estimate; the lowest row when none fits.
pub fn select_layer(ladder: &BitrateLadder, estimate_bps: f64, time: SimTime) -> Result<Selection> {
    if ladder.rows.is_empty() {
        return Err(Error::config("ladder", "ladder is empty"));
    }
    let row = ladder
        .rows
        .iter()
        .rev()
        .find(|r| r.bitrate_kbps * 1000.0 <= estimate_bps)
        .unwrap_or(&ladder.rows[0]);
    Ok(Selection {
        time,
        estimate_bps,
        chosen_layer: row.layer,
        chosen_bitrate_kbps: row.bitrate_kbps,
    })
}

/// Transmit iff the packet's layer is within the current extraction point.
/// Parameter sets ride on the base layer and always pass.
pub fn filter_packet(packet: &PacketRecord, current: &Selection) -> Admission {
    if packet.layer.within(&current.chosen_layer) {
        Admission::Transmit
    } else {
        Admission::DropAtSource
    }
}

/// Stateful adaptation unit plugged into the link as an [`AdmissionHook`].
pub struct AdaptationUnit {
    ladder: BitrateLadder,
    cfg: EstimatorConfig,
    next_tick: Option<SimTime>,
    pending: Vec<f64>,
    current: Option<Selection>,
    log: Vec<Selection>,
    nalu_verdict: Option<(u64, Admission)>,
}

impl AdaptationUnit {
    pub fn new(ladder: BitrateLadder, cfg: EstimatorConfig) -> Result<Self> {
        ladder.validate()?;
        cfg.validate()?;
        Ok(AdaptationUnit {
            ladder,
            cfg,
            next_tick: None,
            pending: Vec::new(),
            current: None,
            log: Vec::new(),
            nalu_verdict: None,
        })
    }

    pub fn current(&self) -> Option<&Selection> {
        self.current.as_ref()
    }

    /// One entry per estimation period, in time order.
    pub fn log(&self) -> &[Selection] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Selection> {
        self.log
    }

    fn tick(&mut self, t: SimTime, view: &LinkView<'_>) {
        let estimate = estimate_bandwidth(t, view, &self.cfg);
        if self.current.is_none() {
            // nothing measured yet: act on the first estimate immediately
            self.pending = vec![estimate; self.cfg.reaction_delay_periods as usize];
            self.pending.push(estimate);
        } else {
            self.pending.push(estimate);
        }
        let applied = self.pending.remove(0);
        let sel = select_layer(&self.ladder, applied, t).expect("ladder validated at construction");
        self.current = Some(sel);
        self.log.push(sel);
    }

    /// Runs every estimation instant up to and including `now`.
    pub fn advance(&mut self, view: &LinkView<'_>) {
        let mut t = *self.next_tick.get_or_insert(view.now);
        while t <= view.now {
            self.tick(t, view);
            t = t + self.cfg.period;
        }
        self.next_tick = Some(t);
    }
}

impl AdmissionHook for AdaptationUnit {
    fn admit(&mut self, packet: &PacketRecord, view: &LinkView<'_>) -> Admission {
        self.advance(view);
        // decisions are taken per NALU so a selection change never splits one
        if let Some((nalu, verdict)) = self.nalu_verdict {
            if nalu == packet.nalu_id && packet.fragment_index > 0 {
                return verdict;
            }
        }
        let verdict = filter_packet(packet, self.current.as_ref().expect("advance sets a selection"));
        self.nalu_verdict = Some((packet.nalu_id, verdict));
        verdict
    }
}

/// `time estimate_bps did tid qid bitrate_kbps`
pub fn selection_log_csv(log: &[Selection]) -> String {
    let mut s = String::from("time,estimate_bps,did,tid,qid,bitrate_kbps\n");
    for sel in log {
        s.push_str(&format!(
            "{},{:.3},{},{},{},{:.3}\n",
            sel.time, sel.estimate_bps, sel.chosen_layer.did, sel.chosen_layer.tid, sel.chosen_layer.qid, sel.chosen_bitrate_kbps
        ));
    }
    s
}
