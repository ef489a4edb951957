use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::svc::{GopConfig, LayerId};

use super::{BitrateLadder, LadderRow, NaluKind, NaluRecord};

/// Parameters of the synthetic coded-size model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeModel {
    /// Standard deviation of log frame complexity.
    pub sigma: f64,
    pub parameter_set_bytes: u32,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel {
            sigma: 0.25,
            parameter_set_bytes: 24,
        }
    }
}

/// Per-(tid, qid) sub-stream rates recovered from the cumulative ladder by
/// inclusion-exclusion over the DTQ lattice.
pub fn substream_rates_kbps(ladder: &BitrateLadder, gop: &GopConfig) -> Result<BTreeMap<(u8, u8), f64>> {
    ladder.validate()?;
    let expected = usize::from(gop.temporal_levels) * usize::from(gop.quality_levels);
    if ladder.rows.len() != expected {
        return Err(Error::config(
            "ladder",
            format!(
                "{} rows for a {}x{} temporal/quality grid (expected {expected})",
                ladder.rows.len(),
                gop.temporal_levels,
                gop.quality_levels
            ),
        ));
    }
    let mut cumulative = BTreeMap::new();
    for (i, row) in ladder.rows.iter().enumerate() {
        let l = row.layer;
        if l.did != 0 {
            return Err(Error::config(format!("ladder.rows[{i}].did"), "spatial layers are not supported"));
        }
        if l.tid >= gop.temporal_levels || l.qid >= gop.quality_levels {
            return Err(Error::config(format!("ladder.rows[{i}]"), format!("layer {l} outside the GOP grid")));
        }
        if cumulative.insert((l.tid, l.qid), row.bitrate_kbps).is_some() {
            return Err(Error::config(format!("ladder.rows[{i}]"), format!("duplicate layer {l}")));
        }
    }
    let cum = |t: i32, q: i32| -> f64 {
        if t < 0 || q < 0 {
            0.0
        } else {
            cumulative[&(t as u8, q as u8)]
        }
    };
    let mut out = BTreeMap::new();
    for t in 0..i32::from(gop.temporal_levels) {
        for q in 0..i32::from(gop.quality_levels) {
            let r = cum(t, q) - cum(t - 1, q) - cum(t, q - 1) + cum(t - 1, q - 1);
            if r <= 0.0 {
                return Err(Error::config(
                    "ladder",
                    format!("layer T{t}Q{q} adds {r:.3} kbps; every sub-stream needs a positive rate"),
                ));
            }
            out.insert((t as u8, q as u8), r);
        }
    }
    Ok(out)
}

/// Generates a NALU trace whose per-layer byte rates reproduce `ladder`.
///
/// One parameter-set NALU is followed by one NALU per (frame, quality level)
/// in frame order. Each frame draws a log-normal complexity factor shared by
/// all of its layers; sizes within a sub-stream are then scaled so the
/// sub-stream hits its ladder rate over the video duration. Returns the trace
/// and the ladder re-measured from it.
pub fn synthesize_trace(
    gop: &GopConfig,
    num_frames: u32,
    ladder: &BitrateLadder,
    frame_rate: f64,
    seed: u64,
    model: &SizeModel,
) -> Result<(Vec<NaluRecord>, BitrateLadder)> {
    gop.validate()?;
    if num_frames == 0 {
        return Err(Error::config("num_frames", "must be at least 1"));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::config("frame_rate", format!("{frame_rate} is not positive")));
    }
    if !(model.sigma.is_finite() && model.sigma >= 0.0) {
        return Err(Error::config("size_model.sigma", "must be a non-negative number"));
    }
    let rates = substream_rates_kbps(ladder, gop)?;
    let duration = f64::from(num_frames) / frame_rate;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lognormal = LogNormal::new(-model.sigma * model.sigma / 2.0, model.sigma)
        .map_err(|e| Error::config("size_model.sigma", e.to_string()))?;
    let complexity: Vec<f64> = (0..num_frames).map(|_| lognormal.sample(&mut rng)).collect();

    let mut level_weight = vec![0.0f64; usize::from(gop.temporal_levels)];
    for f in 0..num_frames {
        level_weight[usize::from(gop.tid_of(f))] += complexity[f as usize];
    }

    let mut nalus = Vec::with_capacity(num_frames as usize * usize::from(gop.quality_levels) + 1);
    nalus.push(NaluRecord {
        nalu_id: 0,
        frame_index: 0,
        layer: LayerId::BASE,
        size_bytes: model.parameter_set_bytes.max(1),
        kind: NaluKind::ParameterSet,
    });
    for f in 0..num_frames {
        let tid = gop.tid_of(f);
        for qid in 0..gop.quality_levels {
            let budget_bytes = rates[&(tid, qid)] * 1000.0 / 8.0 * duration;
            let share = complexity[f as usize] / level_weight[usize::from(tid)];
            let size = (budget_bytes * share).round().max(1.0) as u32;
            nalus.push(NaluRecord {
                nalu_id: nalus.len() as u64,
                frame_index: f,
                layer: LayerId::tq(tid, qid),
                size_bytes: size,
                kind: if qid == 0 { NaluKind::SliceBase } else { NaluKind::SliceEnhancement },
            });
        }
    }

    let realized = measure_ladder(&nalus, ladder, duration);
    Ok((nalus, realized))
}

/// Ladder with bitrates measured from `nalus`; everything else copied from `template`.
pub(crate) fn measure_ladder(nalus: &[NaluRecord], template: &BitrateLadder, duration_s: f64) -> BitrateLadder {
    let rows = template
        .rows
        .iter()
        .map(|row| {
            let bytes: u64 = nalus
                .iter()
                .filter(|n| n.kind != NaluKind::ParameterSet && n.layer.within(&row.layer))
                .map(|n| u64::from(n.size_bytes))
                .sum();
            LadderRow {
                bitrate_kbps: bytes as f64 * 8.0 / duration_s / 1000.0,
                ..*row
            }
        })
        .collect();
    BitrateLadder { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svc::Scheme;

    fn ladder_6(rates: [f64; 6]) -> BitrateLadder {
        let layers = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)];
        let fps = [7.5, 7.5, 15.0, 15.0, 30.0, 30.0];
        BitrateLadder::new(
            (0..6)
                .map(|i| LadderRow {
                    layer_id: i as u32,
                    layer: LayerId::tq(layers[i].0, layers[i].1),
                    frame_rate: fps[i],
                    bitrate_kbps: rates[i],
                    psnr_db: 20.0 + i as f64 * 2.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn substreams_invert_the_cumulative_ladder() {
        let gop = GopConfig::new(4, 2, Scheme::Mgs).unwrap();
        let rates = substream_rates_kbps(&ladder_6([200.0, 320.0, 350.0, 560.0, 700.0, 1000.0]), &gop).unwrap();
        assert!((rates[&(0, 0)] - 200.0).abs() < 1e-9);
        assert!((rates[&(0, 1)] - 120.0).abs() < 1e-9);
        assert!((rates[&(1, 0)] - 150.0).abs() < 1e-9);
        assert!((rates[&(1, 1)] - 90.0).abs() < 1e-9);
        assert!((rates[&(2, 0)] - 350.0).abs() < 1e-9);
        assert!((rates[&(2, 1)] - 90.0).abs() < 1e-9);
        let total: f64 = rates.values().sum();
        assert!((total - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn ladder_gop_mismatch_rejected() {
        let gop = GopConfig::new(8, 2, Scheme::Cgs).unwrap();
        assert!(substream_rates_kbps(&ladder_6([200.0, 350.0, 360.0, 560.0, 600.0, 900.0]), &gop).is_err());
        // T1Q1 increment would be negative
        let gop = GopConfig::new(4, 2, Scheme::Cgs).unwrap();
        assert!(substream_rates_kbps(&ladder_6([200.0, 400.0, 410.0, 500.0, 600.0, 900.0]), &gop).is_err());
    }

    #[test]
    fn single_frame_single_layer_gives_two_nalus() {
        let gop = GopConfig::new(1, 1, Scheme::Fgs).unwrap();
        let ladder = BitrateLadder::new(vec![LadderRow {
            layer_id: 0,
            layer: LayerId::BASE,
            frame_rate: 30.0,
            bitrate_kbps: 300.0,
            psnr_db: 30.0,
        }])
        .unwrap();
        let (nalus, _) = synthesize_trace(&gop, 1, &ladder, 30.0, 7, &SizeModel::default()).unwrap();
        assert_eq!(nalus.len(), 2);
        assert_eq!(nalus[0].kind, NaluKind::ParameterSet);
        assert_eq!(nalus[1].kind, NaluKind::SliceBase);
    }

    #[test]
    fn same_seed_same_trace() {
        let gop = GopConfig::new(4, 2, Scheme::Cgs).unwrap();
        let ladder = ladder_6([200.0, 320.0, 350.0, 560.0, 700.0, 1000.0]);
        let a = synthesize_trace(&gop, 64, &ladder, 30.0, 11, &SizeModel::default()).unwrap();
        let b = synthesize_trace(&gop, 64, &ladder, 30.0, 11, &SizeModel::default()).unwrap();
        let c = synthesize_trace(&gop, 64, &ladder, 30.0, 12, &SizeModel::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn base_nalus_outweigh_enhancement_of_same_frame() {
        let gop = GopConfig::new(4, 2, Scheme::Mgs).unwrap();
        let ladder = ladder_6([200.0, 300.0, 320.0, 480.0, 500.0, 750.0]);
        let (nalus, _) = synthesize_trace(&gop, 120, &ladder, 30.0, 3, &SizeModel::default()).unwrap();
        for pair in nalus[1..].chunks(2) {
            assert_eq!(pair[0].frame_index, pair[1].frame_index);
            assert!(pair[0].size_bytes > pair[1].size_bytes, "{pair:?}");
        }
    }
}
