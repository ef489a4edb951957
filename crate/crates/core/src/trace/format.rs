//! Whitespace-separated text formats with `#` comment lines.
//!
//! ```text
//! # nalu_id frame_index did tid qid size_bytes kind
//! # layer_id did tid qid fps bitrate_kbps psnr_db
//! # packet_id send_time_s size_bytes nalu_id frag_index did tid qid frame_index
//! # packet_id arrival_time_s delay_s
//! ```
//!
//! Times are written with nine decimals (nanosecond resolution) and floats in
//! their shortest round-trip form, so `parse(write(x)) == x`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::svc::LayerId;

use super::{BitrateLadder, LadderRow, NaluRecord, PacketRecord, ReceivedRecord};

const NALU_HEADER: &str = "# nalu_id frame_index did tid qid size_bytes kind";
const LADDER_HEADER: &str = "# layer_id did tid qid fps bitrate_kbps psnr_db";
const PACKET_HEADER: &str = "# packet_id send_time_s size_bytes nalu_id frag_index did tid qid frame_index";
const RECEIVED_HEADER: &str = "# packet_id arrival_time_s delay_s";

/// Fields of one data line with their 1-based character columns.
struct Row<'a> {
    source: &'a str,
    line: usize,
    fields: Vec<(usize, &'a str)>,
}

impl<'a> Row<'a> {
    fn error(&self, column: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            column,
            reason: reason.into(),
        }
    }

    fn get<T: FromStr>(&self, idx: usize, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (col, text) = self.fields[idx];
        text.parse::<T>()
            .map_err(|e| self.error(col, format!("field `{name}`: {e} (got {text:?})")))
    }

    fn column(&self, idx: usize) -> usize {
        self.fields[idx].0
    }
}

fn rows<'a>(text: &'a str, source: &'a str, ncols: usize) -> impl Iterator<Item = Result<Row<'a>>> + 'a {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let content = line.trim_end();
        if content.trim_start().is_empty() || content.trim_start().starts_with('#') {
            return None;
        }
        let mut fields = Vec::with_capacity(ncols);
        let mut start = None;
        for (pos, ch) in content.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(pos),
                (true, Some(s)) => {
                    fields.push((s + 1, &content[s..pos]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            fields.push((s + 1, &content[s..]));
        }
        let row = Row { source, line: i + 1, fields };
        if row.fields.len() != ncols {
            return Some(Err(row.error(1, format!("expected {ncols} columns, found {}", row.fields.len()))));
        }
        Some(Ok(row))
    })
}

fn layer_at(row: &Row<'_>, first: usize) -> Result<LayerId> {
    Ok(LayerId {
        did: row.get(first, "did")?,
        tid: row.get(first + 1, "tid")?,
        qid: row.get(first + 2, "qid")?,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_nalu_trace(text: &str, source: &str) -> Result<Vec<NaluRecord>> {
    let mut out: Vec<NaluRecord> = Vec::new();
    for row in rows(text, source, 7) {
        let row = row?;
        let rec = NaluRecord {
            nalu_id: row.get(0, "nalu_id")?,
            frame_index: row.get(1, "frame_index")?,
            layer: layer_at(&row, 2)?,
            size_bytes: row.get(5, "size_bytes")?,
            kind: row.get(6, "kind")?,
        };
        if rec.size_bytes == 0 {
            return Err(row.error(row.column(5), "size_bytes must be at least 1"));
        }
        if let Some(prev) = out.last() {
            if rec.nalu_id <= prev.nalu_id {
                return Err(row.error(row.column(0), "nalu_id must be strictly increasing"));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_nalu_trace<W: Write>(records: &[NaluRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{NALU_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            r.nalu_id, r.frame_index, r.layer.did, r.layer.tid, r.layer.qid, r.size_bytes, r.kind
        )?;
    }
    Ok(())
}

pub fn parse_bitrate_ladder(text: &str, source: &str) -> Result<BitrateLadder> {
    let mut rows_out = Vec::new();
    let mut first_line = None;
    for row in rows(text, source, 7) {
        let row = row?;
        first_line.get_or_insert(row.line);
        rows_out.push(LadderRow {
            layer_id: row.get(0, "layer_id")?,
            layer: layer_at(&row, 1)?,
            frame_rate: row.get(4, "fps")?,
            bitrate_kbps: row.get(5, "bitrate_kbps")?,
            psnr_db: row.get(6, "psnr_db")?,
        });
    }
    let ladder = BitrateLadder { rows: rows_out };
    ladder.validate().map_err(|e| Error::Parse {
        path: source.to_string(),
        line: first_line.unwrap_or(0),
        column: 1,
        reason: e.to_string(),
    })?;
    Ok(ladder)
}

pub fn write_bitrate_ladder<W: Write>(ladder: &BitrateLadder, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{LADDER_HEADER}")?;
    for r in &ladder.rows {
        writeln!(
            w,
            "{} {} {} {} {:?} {:?} {:?}",
            r.layer_id, r.layer.did, r.layer.tid, r.layer.qid, r.frame_rate, r.bitrate_kbps, r.psnr_db
        )?;
    }
    Ok(())
}

pub fn parse_packet_trace(text: &str, source: &str) -> Result<Vec<PacketRecord>> {
    let mut out = Vec::new();
    for row in rows(text, source, 9) {
        let row = row?;
        let rec = PacketRecord {
            packet_id: row.get(0, "packet_id")?,
            send_time: row.get(1, "send_time_s")?,
            size_bytes: row.get(2, "size_bytes")?,
            nalu_id: row.get(3, "nalu_id")?,
            fragment_index: row.get(4, "frag_index")?,
            layer: layer_at(&row, 5)?,
            frame_index: row.get(8, "frame_index")?,
        };
        if rec.size_bytes == 0 {
            return Err(row.error(row.column(2), "size_bytes must be at least 1"));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_packet_trace<W: Write>(records: &[PacketRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{PACKET_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            r.packet_id,
            r.send_time,
            r.size_bytes,
            r.nalu_id,
            r.fragment_index,
            r.layer.did,
            r.layer.tid,
            r.layer.qid,
            r.frame_index
        )?;
    }
    Ok(())
}

pub fn parse_received_trace(text: &str, source: &str) -> Result<Vec<ReceivedRecord>> {
    let mut out = Vec::new();
    for row in rows(text, source, 3) {
        let row = row?;
        let rec = ReceivedRecord {
            packet_id: row.get(0, "packet_id")?,
            arrival_time: row.get(1, "arrival_time_s")?,
            delay: row.get(2, "delay_s")?,
        };
        if rec.delay > rec.arrival_time {
            return Err(row.error(row.column(2), "delay exceeds arrival time"));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_received_trace<W: Write>(records: &[ReceivedRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RECEIVED_HEADER}")?;
    for r in records {
        writeln!(w, "{} {} {}", r.packet_id, r.arrival_time, r.delay)?;
    }
    Ok(())
}

macro_rules! file_io {
    ($read:ident, $parse:ident, $ty:ty) => {
        pub fn $read(path: &Path) -> Result<$ty> {
            $parse(&read_text(path)?, &path.display().to_string())
        }
    };
}

file_io!(read_nalu_trace, parse_nalu_trace, Vec<NaluRecord>);
file_io!(read_bitrate_ladder, parse_bitrate_ladder, BitrateLadder);
file_io!(read_packet_trace, parse_packet_trace, Vec<PacketRecord>);
file_io!(read_received_trace, parse_received_trace, Vec<ReceivedRecord>);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimTime;

    fn render<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn negative_size_names_the_line() {
        let text = "# header\n0 0 0 0 0 20 param\n1 0 0 0 0 -5 base\n";
        let err = parse_nalu_trace(text, "t.txt").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 11);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn nalu_ids_must_increase() {
        let text = "0 0 0 0 0 20 param\n0 0 0 0 0 20 base\n";
        assert!(parse_nalu_trace(text, "t").is_err());
    }

    #[test]
    fn wrong_column_count_rejected() {
        assert!(parse_received_trace("1 0.5\n", "r").is_err());
        assert!(parse_packet_trace("1 0.5 100 0 0 0 0 0\n", "p").is_err());
    }

    #[test]
    fn non_increasing_ladder_is_a_validation_error() {
        let text = "0 0 0 0 7.5 200 20\n1 0 0 1 7.5 200 24\n";
        let err = parse_bitrate_ladder(text, "ladder.txt").unwrap_err();
        assert!(err.to_string().contains("bitrate_kbps"), "{err}");
    }

    #[test]
    fn ladder_roundtrip_is_exact() {
        let ladder = BitrateLadder::new(vec![
            LadderRow { layer_id: 0, layer: LayerId::tq(0, 0), frame_rate: 7.5, bitrate_kbps: 187.123456789, psnr_db: 20.1 },
            LadderRow { layer_id: 1, layer: LayerId::tq(0, 1), frame_rate: 7.5, bitrate_kbps: 0.1 + 300.2, psnr_db: 1.0 / 3.0 + 22.0 },
        ])
        .unwrap();
        let text = render(|w| write_bitrate_ladder(&ladder, w));
        assert_eq!(parse_bitrate_ladder(&text, "l").unwrap(), ladder);
    }

    #[test]
    fn received_roundtrip_and_validation() {
        let recs = vec![ReceivedRecord {
            packet_id: 3,
            arrival_time: SimTime(10_018_000_001),
            delay: SimTime(18_000_001),
        }];
        let text = render(|w| write_received_trace(&recs, w));
        assert!(text.contains("10.018000001 0.018000001"));
        assert_eq!(parse_received_trace(&text, "r").unwrap(), recs);
        assert!(parse_received_trace("1 0.1 0.2\n", "r").is_err());
    }
}
