use std::fs;
use std::path::Path;

use log::info;

use crate::adaptation::selection_log_csv;
use crate::error::{Error, Result};
use crate::metrics::{segments_csv, timeline_csv, NetworkStats};
use crate::receiver::frame_outcomes_csv;
use crate::svc::Scheme;
use crate::trace::{
    read_bitrate_ladder, read_nalu_trace, read_packet_trace, read_received_trace, write_bitrate_ladder,
    write_nalu_trace, write_packet_trace, write_received_trace,
};

use super::{score, RunReport, ScenarioConfig, ScenarioRun};

fn put(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save<F>(path: &Path, render: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn network_csv(net: &NetworkStats) -> String {
    let mut s = String::from("t_bin,sent,received,loss_rate,mean_delay_s\n");
    for b in &net.bins {
        s.push_str(&format!("{},{},{},{:.6},{:.6}\n", b.start, b.sent, b.received, b.loss_rate, b.mean_delay_s));
    }
    s
}

/// Writes per-scheme traces and tables, the config, the report and the
/// plot-data files.
pub fn write_run(run: &ScenarioRun, outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    put(&outdir.join("config.toml"), &run.config.to_toml())?;
    for s in &run.schemes {
        let dir = outdir.join(s.scheme.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save(&dir.join("nalus.txt"), |w| write_nalu_trace(&s.nalus, w))?;
        save(&dir.join("ladder.txt"), |w| write_bitrate_ladder(&s.ladder, w))?;
        save(&dir.join("packets.txt"), |w| write_packet_trace(&s.packets, w))?;
        save(&dir.join("sent.txt"), |w| write_packet_trace(&s.sent, w))?;
        save(&dir.join("received.txt"), |w| write_received_trace(&s.received, w))?;
        put(&dir.join("selection.csv"), &selection_log_csv(&s.selections))?;
        put(&dir.join("link_stats.csv"), &s.link_stats.to_csv())?;
        put(&dir.join("network.csv"), &network_csv(&s.network))?;
        put(&dir.join("frames.csv"), &frame_outcomes_csv(&s.outcomes))?;
        put(&dir.join("timeline.csv"), &timeline_csv(&s.timeline))?;
        put(&dir.join("segments.csv"), &segments_csv(&s.timeline.segments))?;
    }
    let report = serde_json::to_string_pretty(&run.report()).expect("report serialises");
    put(&outdir.join("report.json"), &(report + "\n"))?;
    emit_plots(run, outdir)?;
    info!("wrote run to {}", outdir.display());
    Ok(())
}

/// Plot-ready CSVs with one column per scheme: per-frame PSNR against time,
/// per-segment mean PSNR, and the decodable-frame percentage.
pub fn emit_plots(run: &ScenarioRun, outdir: &Path) -> Result<()> {
    let names: Vec<&str> = run.schemes.iter().map(|s| s.scheme.as_str()).collect();
    let header = names.join(",");

    let mut tl = format!("frame_index,time_s,{header}\n");
    if let Some(first) = run.schemes.first() {
        for (i, f) in first.timeline.frames.iter().enumerate() {
            tl.push_str(&format!("{},{}", f.frame_index, f.time));
            for s in &run.schemes {
                tl.push_str(&format!(",{:.4}", s.timeline.frames[i].psnr_db));
            }
            tl.push('\n');
        }
    }
    put(&outdir.join("psnr_timeline.csv"), &tl)?;

    let mut seg = format!("segment_start_s,segment_end_s,{header}\n");
    if let Some(first) = run.schemes.first() {
        for (i, sg) in first.timeline.segments.iter().enumerate() {
            seg.push_str(&format!("{},{}", sg.start, sg.end));
            for s in &run.schemes {
                seg.push_str(&format!(",{:.4}", s.timeline.segments[i].mean_psnr_db));
            }
            seg.push('\n');
        }
    }
    put(&outdir.join("segment_psnr.csv"), &seg)?;

    let mut dec = format!("metric,{header}\ndecodable_percent");
    for s in &run.schemes {
        dec.push_str(&format!(",{:.2}", s.report.decodable_frame_ratio * 100.0));
    }
    dec.push('\n');
    put(&outdir.join("decodable_frames.csv"), &dec)
}

/// Re-scores a written run from its config and trace files alone.
pub fn recompute_report(rundir: &Path) -> Result<RunReport> {
    let cfg_path = rundir.join("config.toml");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Parse { line, column, reason, .. } => {
            Error::Parse { path: cfg_path.display().to_string(), line, column, reason }
        }
        other => other,
    })?;
    let mut report = RunReport { seed: cfg.seed, schemes: Default::default() };
    for &scheme in &cfg.schemes {
        let dir = rundir.join(scheme.as_str());
        let nalus = read_nalu_trace(&dir.join("nalus.txt"))?;
        let ladder = read_bitrate_ladder(&dir.join("ladder.txt"))?;
        let packets = read_packet_trace(&dir.join("packets.txt"))?;
        let sent = read_packet_trace(&dir.join("sent.txt"))?;
        let received = read_received_trace(&dir.join("received.txt"))?;
        let scored = score(&cfg, scheme, &nalus, &ladder, &packets, &sent, &received)?;
        report.schemes.insert(scheme, scored.report);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCheck {
    pub stored: RunReport,
    pub recomputed: RunReport,
    /// Human-readable differences; empty when the run is self-consistent.
    pub mismatches: Vec<String>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Compares `report.json` with a fresh re-scoring of the traces.
pub fn check_report(rundir: &Path) -> Result<ReportCheck> {
    let path = rundir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let stored: RunReport = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), line: e.line(), column: e.column(), reason: e.to_string() })?;
    let recomputed = recompute_report(rundir)?;
    let mut mismatches = Vec::new();
    if stored.seed != recomputed.seed {
        mismatches.push(format!("seed: stored {} vs config {}", stored.seed, recomputed.seed));
    }
    for scheme in Scheme::ALL {
        match (stored.schemes.get(&scheme), recomputed.schemes.get(&scheme)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                let pairs = [
                    ("run_mean_psnr_db", a.run_mean_psnr_db, b.run_mean_psnr_db),
                    ("decodable_frame_ratio", a.decodable_frame_ratio, b.decodable_frame_ratio),
                    ("loss_rate", a.loss_rate, b.loss_rate),
                    ("mean_delay_s", a.mean_delay_s, b.mean_delay_s),
                ];
                for (name, x, y) in pairs {
                    if !close(x, y) {
                        mismatches.push(format!("{scheme}.{name}: stored {x} vs recomputed {y}"));
                    }
                }
                let counts = [
                    ("mos", u64::from(a.mos), u64::from(b.mos)),
                    ("decodable_frames", u64::from(a.decodable_frames), u64::from(b.decodable_frames)),
                    ("packets_sent", a.packets_sent, b.packets_sent),
                    ("packets_received", a.packets_received, b.packets_received),
                    ("packets_filtered", a.packets_filtered, b.packets_filtered),
                ];
                for (name, x, y) in counts {
                    if x != y {
                        mismatches.push(format!("{scheme}.{name}: stored {x} vs recomputed {y}"));
                    }
                }
                if a.segments.len() != b.segments.len()
                    || a.segments.iter().zip(&b.segments).any(|(s, t)| !close(s.mean_psnr_db, t.mean_psnr_db))
                {
                    mismatches.push(format!("{scheme}.segments differ"));
                }
            }
            (a, _) => mismatches.push(format!(
                "{scheme}: present only in the {}",
                if a.is_some() { "stored report" } else { "config" }
            )),
        }
    }
    Ok(ReportCheck { stored, recomputed, mismatches })
}
