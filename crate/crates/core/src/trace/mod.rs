//! Trace records flowing through the pipeline, their text formats, the
//! synthetic NALU trace generator and the NALU-to-packet segmentation step.

mod format;
mod packetize;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svc::LayerId;
use crate::time::SimTime;

pub use format::{
    parse_bitrate_ladder, parse_nalu_trace, parse_packet_trace, parse_received_trace, read_bitrate_ladder,
    read_nalu_trace, read_packet_trace, read_received_trace, write_bitrate_ladder, write_nalu_trace,
    write_packet_trace, write_received_trace,
};
pub use packetize::{packetize, DEFAULT_HEADER_OVERHEAD, DEFAULT_MTU};
pub use synth::{substream_rates_kbps, synthesize_trace, SizeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaluKind {
    ParameterSet,
    SliceBase,
    SliceEnhancement,
}

impl NaluKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NaluKind::ParameterSet => "param",
            NaluKind::SliceBase => "base",
            NaluKind::SliceEnhancement => "enh",
        }
    }
}

impl fmt::Display for NaluKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NaluKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "param" => Ok(NaluKind::ParameterSet),
            "base" => Ok(NaluKind::SliceBase),
            "enh" => Ok(NaluKind::SliceEnhancement),
            other => Err(format!("unknown NALU kind {other:?} (expected param, base or enh)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaluRecord {
    pub nalu_id: u64,
    pub frame_index: u32,
    pub layer: LayerId,
    pub size_bytes: u32,
    pub kind: NaluKind,
}

/// One row of the per-layer rate/quality table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub layer_id: u32,
    pub layer: LayerId,
    pub frame_rate: f64,
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
}

/// Cumulative layers in extraction order, with their rate and encoded quality.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BitrateLadder {
    pub rows: Vec<LadderRow>,
}

impl BitrateLadder {
    /// Validates and wraps `rows`.
    pub fn new(rows: Vec<LadderRow>) -> Result<Self> {
        let ladder = BitrateLadder { rows };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::config("ladder", "ladder is empty"));
        }
        for (i, row) in self.rows.iter().enumerate() {
            let field = |name: &str| format!("ladder.rows[{i}].{name}");
            if !(row.bitrate_kbps.is_finite() && row.bitrate_kbps > 0.0) {
                return Err(Error::config(field("bitrate_kbps"), format!("{} is not positive", row.bitrate_kbps)));
            }
            if !(row.frame_rate.is_finite() && row.frame_rate > 0.0) {
                return Err(Error::config(field("fps"), format!("{} is not positive", row.frame_rate)));
            }
            if !row.psnr_db.is_finite() || row.psnr_db < 0.0 {
                return Err(Error::config(field("psnr_db"), format!("{} is not a valid PSNR", row.psnr_db)));
            }
            if i > 0 {
                let prev = &self.rows[i - 1];
                if row.layer_id <= prev.layer_id {
                    return Err(Error::config(field("layer_id"), "layer ids must be strictly increasing"));
                }
                if row.bitrate_kbps <= prev.bitrate_kbps {
                    return Err(Error::config(
                        field("bitrate_kbps"),
                        format!("{} does not exceed previous row's {}", row.bitrate_kbps, prev.bitrate_kbps),
                    ));
                }
                if row.psnr_db < prev.psnr_db {
                    return Err(Error::config(
                        field("psnr_db"),
                        format!("{} is below previous row's {}", row.psnr_db, prev.psnr_db),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn lowest(&self) -> &LadderRow {
        &self.rows[0]
    }

    pub fn top(&self) -> &LadderRow {
        self.rows.last().expect("validated ladder is non-empty")
    }

    pub fn row_for(&self, layer: LayerId) -> Option<&LadderRow> {
        self.rows.iter().find(|r| r.layer == layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub send_time: SimTime,
    pub size_bytes: u32,
    pub nalu_id: u64,
    pub fragment_index: u32,
    pub layer: LayerId,
    pub frame_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedRecord {
    pub packet_id: u64,
    pub arrival_time: SimTime,
    pub delay: SimTime,
}
