use serde::{Deserialize, Serialize};

use crate::adaptation::{EstimatorConfig, EstimatorMode};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_NONDECODABLE_PSNR_DB;
use crate::netsim::{BandwidthSchedule, LinkConfig, Step, DEFAULT_STAIRCASE};
use crate::receiver::PlayoutConfig;
use crate::svc::{GopConfig, LayerId, Scheme};
use crate::time::SimTime;
use crate::trace::{BitrateLadder, LadderRow, SizeModel, DEFAULT_HEADER_OVERHEAD, DEFAULT_MTU};

/// Everything needed to run one experiment. Serialised as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub video: VideoConfig,
    pub transport: TransportConfig,
    pub link: LinkSection,
    pub estimator: EstimatorSection,
    pub playout: PlayoutSection,
    pub quality: QualitySection,
    pub ladders: Ladders,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoConfig {
    pub num_frames: u32,
    pub frame_rate: f64,
    /// Time at which frame 0 is sent.
    pub start_s: f64,
    pub gop_size: u32,
    pub quality_levels: u8,
    pub mgs_key_period: u32,
    /// Spread of per-frame complexity (log-normal sigma).
    pub size_sigma: f64,
    pub parameter_set_bytes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub mtu: u32,
    pub header_overhead: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    pub start_s: f64,
    pub mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub queue_capacity_bytes: u64,
    pub propagation_delay_s: f64,
    pub stats_bin_s: f64,
    pub schedule: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub mode: EstimatorMode,
    pub period_s: f64,
    pub window_s: f64,
    pub reaction_delay_periods: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayoutSection {
    /// Omit for no deadline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySection {
    pub nondecodable_psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderEntry {
    pub tid: u8,
    pub qid: u8,
    pub fps: f64,
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
}

/// One ladder per scheme: the schemes code the same content with different
/// efficiency, so each has its own rate/quality table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladders {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cgs: Option<Vec<LadderEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fgs: Option<Vec<LadderEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgs: Option<Vec<LadderEntry>>,
}

impl Ladders {
    pub fn get(&self, scheme: Scheme) -> Option<&Vec<LadderEntry>> {
        match scheme {
            Scheme::Cgs => self.cgs.as_ref(),
            Scheme::Fgs => self.fgs.as_ref(),
            Scheme::Mgs => self.mgs.as_ref(),
        }
    }
}

// Artifact defaults standing in for the unknown encoder settings, in
// extraction order T0Q0, T0Q1, T1Q0, T1Q1, T2Q0, T2Q1: (kbps, dB).
// MGS reaches each operating point at the lowest rate, FGS carries a base
// layer just under the 0.2 Mbps floor, CGS a base layer above it.
const CGS_LADDER: [(f64, f64); 6] = [(240.0, 24.0), (290.0, 26.5), (350.0, 28.0), (430.0, 30.5), (640.0, 31.5), (1000.0, 34.0)];
const FGS_LADDER: [(f64, f64); 6] = [(190.0, 24.3), (240.0, 26.8), (310.0, 28.3), (370.0, 30.8), (480.0, 31.8), (850.0, 34.3)];
const MGS_LADDER: [(f64, f64); 6] = [(100.0, 24.6), (130.0, 27.1), (150.0, 28.6), (310.0, 31.1), (440.0, 32.1), (750.0, 34.6)];

fn default_ladder(values: &[(f64, f64); 6], frame_rate: f64) -> Vec<LadderEntry> {
    values
        .iter()
        .enumerate()
        .map(|(i, &(bitrate_kbps, psnr_db))| {
            let tid = (i / 2) as u8;
            LadderEntry {
                tid,
                qid: (i % 2) as u8,
                fps: frame_rate / f64::from(1u32 << (2 - tid)),
                bitrate_kbps,
                psnr_db,
            }
        })
        .collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let frame_rate = 30.0;
        ScenarioConfig {
            seed: 1,
            schemes: Scheme::ALL.to_vec(),
            video: VideoConfig {
                num_frames: 4 * 360,
                frame_rate,
                start_s: 10.0,
                gop_size: 4,
                quality_levels: 2,
                mgs_key_period: 4,
                size_sigma: SizeModel::default().sigma,
                parameter_set_bytes: SizeModel::default().parameter_set_bytes,
            },
            transport: TransportConfig { mtu: DEFAULT_MTU, header_overhead: DEFAULT_HEADER_OVERHEAD },
            link: LinkSection {
                queue_capacity_bytes: 50 * u64::from(DEFAULT_MTU),
                propagation_delay_s: 0.01,
                stats_bin_s: 1.0,
                schedule: DEFAULT_STAIRCASE
                    .iter()
                    .map(|&(start_s, bps)| ScheduleStep { start_s, mbps: bps / 1e6 })
                    .collect(),
            },
            estimator: EstimatorSection {
                mode: EstimatorMode::Oracle,
                period_s: 1.0,
                window_s: 1.0,
                reaction_delay_periods: 1,
            },
            playout: PlayoutSection { deadline_s: Some(1.0) },
            quality: QualitySection { nondecodable_psnr_db: DEFAULT_NONDECODABLE_PSNR_DB },
            ladders: Ladders {
                cgs: Some(default_ladder(&CGS_LADDER, frame_rate)),
                fgs: Some(default_ladder(&FGS_LADDER, frame_rate)),
                mgs: Some(default_ladder(&MGS_LADDER, frame_rate)),
            },
        }
    }
}

fn positive_secs(field: &str, v: f64) -> Result<SimTime> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(field, format!("{v} must be a positive number of seconds")));
    }
    Ok(SimTime::from_secs_f64(v))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                    (line, column)
                })
                .unwrap_or((0, 0));
            Error::Parse { path: "config".into(), line, column, reason: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::config(format!("schemes[{i}]"), format!("{s} listed twice")));
            }
        }
        let v = &self.video;
        if v.num_frames == 0 {
            return Err(Error::config("video.num_frames", "must be at least 1"));
        }
        if !(v.frame_rate.is_finite() && v.frame_rate > 0.0) {
            return Err(Error::config("video.frame_rate", "must be positive"));
        }
        if !(v.start_s.is_finite() && v.start_s >= 0.0) {
            return Err(Error::config("video.start_s", "must be a non-negative number"));
        }
        if !(v.size_sigma.is_finite() && v.size_sigma >= 0.0) {
            return Err(Error::config("video.size_sigma", "must be a non-negative number"));
        }
        if self.transport.mtu <= self.transport.header_overhead {
            return Err(Error::config("transport.mtu", "must exceed transport.header_overhead"));
        }
        self.link_config()?.validate(self.transport.mtu)?;
        let start = SimTime::from_secs_f64(v.start_s);
        if start < self.schedule()?.start() {
            return Err(Error::config("video.start_s", "video starts before link.schedule[0].start_s"));
        }
        self.estimator_config()?.validate()?;
        self.playout_config()?.validate()?;
        let q = self.quality.nondecodable_psnr_db;
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::config("quality.nondecodable_psnr_db", "must be a non-negative number"));
        }
        for &s in &self.schemes {
            let gop = self.gop(s)?;
            let ladder = self.ladder(s)?;
            crate::trace::substream_rates_kbps(&ladder, &gop)
                .map_err(|e| prefix(e, &format!("ladders.{s}")))?;
        }
        Ok(())
    }

    pub fn gop(&self, scheme: Scheme) -> Result<GopConfig> {
        let gop = GopConfig::new(self.video.gop_size, self.video.quality_levels, scheme)
            .map_err(|e| prefix(e, "video"))?;
        gop.with_key_period(self.video.mgs_key_period).map_err(|e| prefix(e, "video"))
    }

    pub fn ladder(&self, scheme: Scheme) -> Result<BitrateLadder> {
        let field = format!("ladders.{scheme}");
        let rows = self
            .ladders
            .get(scheme)
            .ok_or_else(|| Error::config(&field, "missing ladder for a selected scheme"))?;
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, r)| LadderRow {
                layer_id: i as u32,
                layer: LayerId::tq(r.tid, r.qid),
                frame_rate: r.fps,
                bitrate_kbps: r.bitrate_kbps,
                psnr_db: r.psnr_db,
            })
            .collect();
        BitrateLadder::new(rows).map_err(|e| prefix(e, &field))
    }

    pub fn schedule(&self) -> Result<BandwidthSchedule> {
        let mut steps = Vec::with_capacity(self.link.schedule.len());
        for (i, s) in self.link.schedule.iter().enumerate() {
            if !(s.start_s.is_finite() && s.start_s >= 0.0) {
                return Err(Error::config(format!("link.schedule[{i}].start_s"), "must be a non-negative number"));
            }
            if !(s.mbps.is_finite() && s.mbps > 0.0) {
                return Err(Error::config(format!("link.schedule[{i}].mbps"), "must be positive"));
            }
            steps.push(Step { start: SimTime::from_secs_f64(s.start_s), bps: (s.mbps * 1e6).round() as u64 });
        }
        BandwidthSchedule::new(steps)
    }

    pub fn link_config(&self) -> Result<LinkConfig> {
        Ok(LinkConfig {
            schedule: self.schedule()?,
            queue_capacity_bytes: self.link.queue_capacity_bytes,
            propagation_delay: SimTime::from_secs_f64(non_negative("link.propagation_delay_s", self.link.propagation_delay_s)?),
            stats_bin: positive_secs("link.stats_bin_s", self.link.stats_bin_s)?,
        })
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        Ok(EstimatorConfig {
            period: positive_secs("estimator.period_s", self.estimator.period_s)?,
            mode: self.estimator.mode,
            window: positive_secs("estimator.window_s", self.estimator.window_s)?,
            reaction_delay_periods: self.estimator.reaction_delay_periods,
        })
    }

    pub fn playout_config(&self) -> Result<PlayoutConfig> {
        Ok(match self.playout.deadline_s {
            None => PlayoutConfig::unlimited(),
            Some(d) => PlayoutConfig { deadline: positive_secs("playout.deadline_s", d)? },
        })
    }

    pub fn size_model(&self) -> SizeModel {
        SizeModel { sigma: self.video.size_sigma, parameter_set_bytes: self.video.parameter_set_bytes }
    }

    pub fn start(&self) -> SimTime {
        SimTime::from_secs_f64(self.video.start_s)
    }

    /// Display time just past the last frame.
    pub fn end(&self) -> SimTime {
        self.start() + SimTime::from_secs_f64(f64::from(self.video.num_frames) / self.video.frame_rate)
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::config(field, format!("{v} must be a non-negative number")));
    }
    Ok(v)
}

/// Re-roots a config error's field path under `root`.
fn prefix(e: Error, root: &str) -> Error {
    match e {
        Error::Config { field, reason } => {
            let field = match field.split_once('.') {
                Some((head, rest)) if head == "ladder" || head == "gop" => format!("{root}.{rest}"),
                _ if field == "ladder" || field == "gop" => root.to_string(),
                _ => format!("{root}.{field}"),
            };
            Error::Config { field, reason }
        }
        other => other,
    }
}
