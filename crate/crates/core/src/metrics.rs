//! Objective quality (PSNR over luminance), its MOS approximation, and
//! network-level loss/delay statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::receiver::FrameOutcome;
use crate::svc::LayerId;
use crate::time::SimTime;
use crate::trace::{BitrateLadder, PacketRecord, ReceivedRecord};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Default score for frames that cannot be decoded.
pub const DEFAULT_NONDECODABLE_PSNR_DB: f64 = 15.0;

/// 8-bit luminance plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if samples.len() as u64 != u64::from(width) * u64::from(height) {
            return Err(Error::Input(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        Ok(ImageBuffer { width, height, samples })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// `width height\n` followed by `width * height` raw bytes.
    pub fn from_raw(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Input("missing `width height` header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Input("header is not UTF-8".into()))?;
        let dims: Vec<u32> = header
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| Error::Input(format!("bad dimension {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [w, h] = dims[..] else {
            return Err(Error::Input(format!("header {header:?} is not `width height`")));
        };
        ImageBuffer::new(w, h, bytes[nl + 1..].to_vec())
    }

    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = format!("{} {}\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.samples);
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_raw(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_raw()).map_err(|e| Error::io(path, e))
    }
}

fn same_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Input(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(org: &ImageBuffer, rec: &ImageBuffer) -> Result<f64> {
    same_dims(org, rec)?;
    if org.samples.is_empty() {
        return Ok(0.0);
    }
    let sum: u64 = org
        .samples
        .iter()
        .zip(&rec.samples)
        .map(|(&a, &b)| {
            let d = u64::from(a.abs_diff(b));
            d * d
        })
        .sum();
    Ok(sum as f64 / org.samples.len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(org: &ImageBuffer, rec: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(org, rec)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mos {
    pub score: u8,
    pub label: &'static str,
}

/// Table-based PSNR to MOS. Bands are lower-inclusive except the top one,
/// so 37 dB is 4 and 31 dB is 4.
pub fn mos_from_psnr(psnr_db: f64) -> Mos {
    let (score, label) = if psnr_db > 37.0 {
        (5, "Excelente")
    } else if psnr_db >= 31.0 {
        (4, "Bueno")
    } else if psnr_db >= 25.0 {
        (3, "Regular")
    } else if psnr_db >= 20.0 {
        (2, "Pobre")
    } else {
        (1, "Malo")
    };
    Mos { score, label }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePsnr {
    pub frame_index: u32,
    /// Display time.
    pub time: SimTime,
    pub psnr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMean {
    pub start: SimTime,
    pub end: SimTime,
    pub mean_psnr_db: f64,
    pub frames: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityTimeline {
    pub frames: Vec<FramePsnr>,
    pub segments: Vec<SegmentMean>,
    pub run_mean_psnr_db: f64,
}

/// Per-frame PSNR from the ladder: a decodable frame scores the encoded PSNR
/// of the layer it was delivered at, anything else `nondecodable_psnr`.
/// Frame `f` is displayed at `start + f / frame_rate`.
pub fn reconstruct_psnr_timeline(
    outcomes: &[FrameOutcome],
    ladder: &BitrateLadder,
    nondecodable_psnr: f64,
    start: SimTime,
    frame_rate: f64,
) -> Result<QualityTimeline> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::config("frame_rate", "must be positive"));
    }
    if !(nondecodable_psnr.is_finite() && nondecodable_psnr >= 0.0) {
        return Err(Error::config("nondecodable_psnr_db", "must be a non-negative number"));
    }
    let mut frames = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let psnr_db = match o.delivered_qid {
            Some(q) if o.decodable => {
                let layer = LayerId::tq(o.delivered_tid, q);
                ladder
                    .row_for(layer)
                    .ok_or_else(|| Error::config("ladder", format!("no row for delivered layer {layer}")))?
                    .psnr_db
            }
            _ => nondecodable_psnr,
        };
        frames.push(FramePsnr {
            frame_index: o.frame_index,
            time: start + SimTime::from_secs_f64(f64::from(o.frame_index) / frame_rate),
            psnr_db,
        });
    }
    let run_mean_psnr_db = mean(frames.iter().map(|f| f.psnr_db));
    Ok(QualityTimeline { frames, segments: Vec::new(), run_mean_psnr_db })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0u64), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean PSNR of the frames displayed within each `[start, end)` interval.
/// Intervals containing no frame are skipped.
pub fn segment_means(frames: &[FramePsnr], intervals: &[(SimTime, SimTime)]) -> Vec<SegmentMean> {
    intervals
        .iter()
        .filter_map(|&(start, end)| {
            let inside: Vec<f64> = frames
                .iter()
                .filter(|f| f.time >= start && f.time < end)
                .map(|f| f.psnr_db)
                .collect();
            (!inside.is_empty()).then(|| SegmentMean {
                start,
                end,
                mean_psnr_db: mean(inside.iter().copied()),
                frames: inside.len() as u32,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetBin {
    pub start: SimTime,
    pub sent: u64,
    pub received: u64,
    pub loss_rate: f64,
    pub mean_delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkStats {
    pub sent: u64,
    pub received: u64,
    pub loss_rate: f64,
    pub mean_delay_s: f64,
    /// Binned by send time.
    pub bins: Vec<NetBin>,
}

/// Loss and delay of the packets that entered the network.
pub fn network_stats(sent: &[PacketRecord], received: &[ReceivedRecord], bin: SimTime) -> Result<NetworkStats> {
    if bin == SimTime::ZERO {
        return Err(Error::config("stats_bin_s", "must be positive"));
    }
    let send_time: BTreeMap<u64, SimTime> = sent.iter().map(|p| (p.packet_id, p.send_time)).collect();
    let key = |t: SimTime| t.as_nanos() / bin.as_nanos();
    let mut bins: BTreeMap<u64, (u64, u64, SimTime)> = BTreeMap::new();
    for p in sent {
        bins.entry(key(p.send_time)).or_default().0 += 1;
    }
    let mut delay_total = 0u128;
    for r in received {
        let t = send_time
            .get(&r.packet_id)
            .ok_or_else(|| Error::Input(format!("received packet {} was never sent", r.packet_id)))?;
        let b = bins.get_mut(&key(*t)).expect("bin created from the sent list");
        b.1 += 1;
        b.2 = b.2 + r.delay;
        delay_total += u128::from(r.delay.as_nanos());
    }
    let n_sent = sent.len() as u64;
    let n_recv = received.len() as u64;
    if n_recv > n_sent {
        return Err(Error::Input(format!("{n_recv} packets received but only {n_sent} sent")));
    }
    let ratio = |recv: u64, sent: u64| if sent == 0 { 0.0 } else { 1.0 - recv as f64 / sent as f64 };
    let avg = |total: f64, n: u64| if n == 0 { 0.0 } else { total / n as f64 };
    Ok(NetworkStats {
        sent: n_sent,
        received: n_recv,
        loss_rate: ratio(n_recv, n_sent),
        mean_delay_s: avg(delay_total as f64 / 1e9, n_recv),
        bins: bins
            .into_iter()
            .map(|(k, (s, r, d))| NetBin {
                start: SimTime(k * bin.as_nanos()),
                sent: s,
                received: r,
                loss_rate: ratio(r, s),
                mean_delay_s: avg(d.as_secs_f64(), r),
            })
            .collect(),
    })
}

/// `frame_index time_s psnr_db mos`
pub fn timeline_csv(tl: &QualityTimeline) -> String {
    let mut s = String::from("frame_index,time_s,psnr_db,mos\n");
    for f in &tl.frames {
        s.push_str(&format!("{},{},{:.4},{}\n", f.frame_index, f.time, f.psnr_db, mos_from_psnr(f.psnr_db).score));
    }
    s
}

/// `segment_start_s segment_end_s mean_psnr_db`
pub fn segments_csv(segments: &[SegmentMean]) -> String {
    let mut s = String::from("segment_start_s,segment_end_s,mean_psnr_db\n");
    for seg in segments {
        s.push_str(&format!("{},{},{:.4}\n", seg.start, seg.end, seg.mean_psnr_db));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::LadderRow;

    fn img(w: u32, h: u32, v: &[u8]) -> ImageBuffer {
        ImageBuffer::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn mse_and_psnr_anchors() {
        let a = img(2, 2, &[10, 20, 30, 40]);
        let b = img(2, 2, &[11, 21, 31, 41]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let black = img(1, 1, &[0]);
        let white = img(1, 1, &[255]);
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        assert!(ImageBuffer::new(2, 2, vec![0; 3]).is_err());
        assert!(matches!(mse(&img(1, 2, &[0, 0]), &img(2, 1, &[0, 0])), Err(Error::Input(_))));
    }

    #[test]
    fn raw_format_roundtrip() {
        let a = img(3, 2, &[0, 1, 2, 253, 254, 255]);
        let raw = a.to_raw();
        assert!(raw.starts_with(b"3 2\n"));
        assert_eq!(ImageBuffer::from_raw(&raw).unwrap(), a);
        assert!(ImageBuffer::from_raw(b"3 2\n\x00").is_err());
        assert!(ImageBuffer::from_raw(b"3\n").is_err());
    }

    #[test]
    fn mos_table() {
        assert_eq!(mos_from_psnr(27.4).score, 3);
        assert_eq!(mos_from_psnr(23.4).score, 2);
        assert_eq!(mos_from_psnr(20.3), Mos { score: 2, label: "Pobre" });
        assert_eq!(mos_from_psnr(38.0).score, 5);
        assert_eq!(mos_from_psnr(37.0).score, 4);
        assert_eq!(mos_from_psnr(31.0).score, 4);
        assert_eq!(mos_from_psnr(25.0).score, 3);
        assert_eq!(mos_from_psnr(19.99).score, 1);
    }

    fn ladder() -> BitrateLadder {
        BitrateLadder::new(vec![
            LadderRow { layer_id: 0, layer: LayerId::tq(0, 0), frame_rate: 15.0, bitrate_kbps: 100.0, psnr_db: 25.0 },
            LadderRow { layer_id: 1, layer: LayerId::tq(1, 0), frame_rate: 30.0, bitrate_kbps: 200.0, psnr_db: 30.0 },
            LadderRow { layer_id: 2, layer: LayerId::tq(1, 1), frame_rate: 30.0, bitrate_kbps: 300.0, psnr_db: 34.0 },
        ])
        .unwrap()
    }

    fn outcome(f: u32, q: Option<u8>) -> FrameOutcome {
        FrameOutcome { frame_index: f, decodable: q.is_some(), delivered_qid: q, delivered_tid: 1 }
    }

    #[test]
    fn timeline_from_ladder() {
        let outs: Vec<_> = (0..4).map(|f| outcome(f, Some(1))).collect();
        let tl = reconstruct_psnr_timeline(&outs, &ladder(), 15.0, SimTime::ZERO, 2.0).unwrap();
        assert!(tl.frames.iter().all(|f| f.psnr_db == 34.0));
        assert_eq!(tl.run_mean_psnr_db, 34.0);
        assert_eq!(tl.frames[3].time, SimTime(1_500_000_000));

        let outs: Vec<_> = (0..4).map(|f| outcome(f, if f < 2 { Some(0) } else { None })).collect();
        let tl = reconstruct_psnr_timeline(&outs, &ladder(), 15.0, SimTime::ZERO, 2.0).unwrap();
        assert_eq!(tl.run_mean_psnr_db, (30.0 + 30.0 + 15.0 + 15.0) / 4.0);
        let segs = segment_means(&tl.frames, &[(SimTime::ZERO, SimTime(1_000_000_000)), (SimTime(1_000_000_000), SimTime(9_000_000_000)), (SimTime(9_000_000_000), SimTime(10_000_000_000))]);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].mean_psnr_db, 30.0);
        assert_eq!(segs[1].mean_psnr_db, 15.0);
    }

    #[test]
    fn missing_ladder_row_is_config_error() {
        let mut o = outcome(0, Some(1));
        o.delivered_tid = 0;
        assert!(matches!(
            reconstruct_psnr_timeline(&[o], &ladder(), 15.0, SimTime::ZERO, 30.0),
            Err(Error::Config { .. })
        ));
    }

    fn pkt(id: u64, t: u64) -> PacketRecord {
        PacketRecord { packet_id: id, send_time: SimTime(t), size_bytes: 100, nalu_id: id, fragment_index: 0, layer: LayerId::BASE, frame_index: 0 }
    }

    #[test]
    fn loss_and_delay() {
        let sent: Vec<_> = (0..4).map(|i| pkt(i, i * 600_000_000)).collect();
        let recv = vec![
            ReceivedRecord { packet_id: 0, arrival_time: SimTime(100_000_000), delay: SimTime(100_000_000) },
            ReceivedRecord { packet_id: 2, arrival_time: SimTime(1_500_000_000), delay: SimTime(300_000_000) },
        ];
        let st = network_stats(&sent, &recv, SimTime(1_000_000_000)).unwrap();
        assert_eq!(st.loss_rate, 0.5);
        assert!((st.mean_delay_s - 0.2).abs() < 1e-12);
        assert_eq!(st.bins.len(), 2);
        assert_eq!((st.bins[0].sent, st.bins[0].received), (2, 1));
        let lossless = network_stats(&sent[..1], &recv[..1], SimTime(1_000_000_000)).unwrap();
        assert_eq!(lossless.loss_rate, 0.0);
        assert!(network_stats(&sent[..1], &recv, SimTime(1_000_000_000)).is_err());
    }
}
