use crate::error::{Error, Result};
use crate::time::SimTime;

use super::{NaluRecord, PacketRecord};

pub const DEFAULT_MTU: u32 = 1500;
/// RTP + UDP + IPv4 headers.
pub const DEFAULT_HEADER_OVERHEAD: u32 = 40;

/// Splits NALUs into transport packets of at most `mtu` bytes.
///
/// Every packet carries `header_overhead` bytes of headers; a NALU of `s`
/// bytes becomes `ceil(s / (mtu - header_overhead))` fragments. NALUs are
/// never coalesced. All packets of frame `f` are stamped `f / frame_rate`.
pub fn packetize(nalus: &[NaluRecord], mtu: u32, header_overhead: u32, frame_rate: f64) -> Result<Vec<PacketRecord>> {
    if mtu <= header_overhead {
        return Err(Error::Precondition(format!(
            "mtu {mtu} must exceed header overhead {header_overhead}"
        )));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::Precondition(format!("frame rate {frame_rate} is not positive")));
    }
    let payload_cap = mtu - header_overhead;
    let mut packets = Vec::new();
    for nalu in nalus {
        let send_time = SimTime::from_secs_f64(f64::from(nalu.frame_index) / frame_rate);
        let mut remaining = nalu.size_bytes;
        let mut fragment_index = 0;
        while remaining > 0 {
            let payload = remaining.min(payload_cap);
            packets.push(PacketRecord {
                packet_id: packets.len() as u64,
                send_time,
                size_bytes: payload + header_overhead,
                nalu_id: nalu.nalu_id,
                fragment_index,
                layer: nalu.layer,
                frame_index: nalu.frame_index,
            });
            remaining -= payload;
            fragment_index += 1;
        }
    }
    Ok(packets)
}
