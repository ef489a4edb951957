use proptest::prelude::*;
use svcsim::adaptation::{filter_packet, select_layer, AdaptationUnit, EstimatorConfig, Selection};
use svcsim::netsim::{run_link, Admission, BandwidthSchedule, LinkConfig, PacketFate};
use svcsim::svc::{GopConfig, LayerId, Scheme};
use svcsim::trace::{packetize, synthesize_trace, BitrateLadder, LadderRow, PacketRecord, SizeModel};
use svcsim::SimTime;

fn ladder(rates: &[f64]) -> BitrateLadder {
    let rows = rates
        .iter()
        .enumerate()
        .map(|(i, &r)| LadderRow {
            layer_id: i as u32,
            layer: LayerId::tq((i / 2) as u8, (i % 2) as u8),
            frame_rate: 30.0,
            bitrate_kbps: r,
            psnr_db: 24.0 + i as f64,
        })
        .collect();
    BitrateLadder::new(rows).unwrap()
}

fn six_layer() -> BitrateLadder {
    ladder(&[150.0, 210.0, 280.0, 400.0, 520.0, 800.0])
}

fn pkt(layer: LayerId) -> PacketRecord {
    PacketRecord {
        packet_id: 0,
        send_time: SimTime::ZERO,
        size_bytes: 100,
        nalu_id: 0,
        fragment_index: 0,
        layer,
        frame_index: 0,
    }
}

fn sel(layer: LayerId) -> Selection {
    Selection { time: SimTime::ZERO, estimate_bps: 0.0, chosen_layer: layer, chosen_bitrate_kbps: 0.0 }
}

#[test]
fn floor_selection_examples() {
    let l = ladder(&[200.0, 400.0, 800.0, 1200.0, 1500.0]);
    let kbps = |est: f64| select_layer(&l, est, SimTime::ZERO).unwrap().chosen_bitrate_kbps;
    assert_eq!(kbps(900_000.0), 800.0);
    assert_eq!(kbps(100_000.0), 200.0);
    assert_eq!(kbps(400_000.0), 400.0);
    assert_eq!(kbps(399_999.0), 200.0);
    assert_eq!(kbps(f64::INFINITY), 1500.0);
}

#[test]
fn filter_matches_component_wise_table() {
    // Rows: chosen point; columns: packet layer in T0Q0 T0Q1 T1Q0 T1Q1 T2Q0 T2Q1 order.
    let grid: Vec<LayerId> = (0..3).flat_map(|t| (0..2).map(move |q| LayerId::tq(t, q))).collect();
    let table = [
        [1, 0, 0, 0, 0, 0],
        [1, 1, 0, 0, 0, 0],
        [1, 0, 1, 0, 0, 0],
        [1, 1, 1, 1, 0, 0],
        [1, 0, 1, 0, 1, 0],
        [1, 1, 1, 1, 1, 1],
    ];
    for (i, chosen) in grid.iter().enumerate() {
        for (j, layer) in grid.iter().enumerate() {
            let want = if table[i][j] == 1 { Admission::Transmit } else { Admission::DropAtSource };
            assert_eq!(filter_packet(&pkt(*layer), &sel(*chosen)), want, "chosen {chosen}, packet {layer}");
        }
    }
    assert_eq!(filter_packet(&pkt(LayerId::tq(1, 0)), &sel(LayerId::tq(2, 0))), Admission::Transmit);
    assert_eq!(filter_packet(&pkt(LayerId::tq(0, 1)), &sel(LayerId::tq(2, 0))), Admission::DropAtSource);
}

fn stream(ladder: &BitrateLadder, frames: u32, start_s: u64) -> Vec<PacketRecord> {
    let gop = GopConfig::new(4, 2, Scheme::Mgs).unwrap();
    let (nalus, _) = synthesize_trace(&gop, frames, ladder, 30.0, 9, &SizeModel::default()).unwrap();
    let mut packets = packetize(&nalus, 1500, 40, 30.0).unwrap();
    for p in &mut packets {
        p.send_time = p.send_time + SimTime(start_s * 1_000_000_000);
    }
    packets
}

#[test]
fn unlimited_estimate_transmits_everything() {
    let l = six_layer();
    let packets = stream(&l, 240, 0);
    let link = LinkConfig::new(BandwidthSchedule::constant(SimTime::ZERO, 10_000_000_000).unwrap());
    let mut unit = AdaptationUnit::new(l.clone(), EstimatorConfig::default()).unwrap();
    let run = run_link(&packets, &link, Some(&mut unit)).unwrap();
    assert!(run.fates.iter().all(|f| *f == PacketFate::Delivered));
    assert!(unit.log().iter().all(|s| s.chosen_layer == l.top().layer));
}

#[test]
fn transmitted_packets_lie_within_the_active_selection() {
    let l = six_layer();
    let packets = stream(&l, 48 * 30, 10);
    let link = LinkConfig::new(BandwidthSchedule::default_staircase());
    let mut unit = AdaptationUnit::new(l, EstimatorConfig::default()).unwrap();
    let run = run_link(&packets, &link, Some(&mut unit)).unwrap();
    let log = unit.into_log();
    assert!(log.windows(2).all(|w| w[1].time - w[0].time == SimTime(1_000_000_000)));
    let active = |t: SimTime| log[log.partition_point(|s| s.time <= t) - 1];

    let mut filtered = 0;
    for (i, p) in packets.iter().enumerate() {
        // A NALU is judged by its first fragment.
        let head = packets[..=i].iter().rev().find(|q| q.nalu_id == p.nalu_id && q.fragment_index == 0).unwrap();
        let s = active(head.send_time);
        let within = p.layer.within(&s.chosen_layer);
        match run.fates[i] {
            PacketFate::SourceFiltered => {
                filtered += 1;
                assert!(!within, "packet {} filtered although within {}", p.packet_id, s.chosen_layer);
            }
            _ => assert!(within, "packet {} ({}) sent outside {}", p.packet_id, p.layer, s.chosen_layer),
        }
    }
    assert!(filtered > 0);
}

proptest! {
    #[test]
    fn selection_is_monotone_and_feasible(
        steps in proptest::collection::vec(1.0f64..300.0, 1..8),
        a in 0.0f64..3e6,
        b in 0.0f64..3e6,
    ) {
        let mut acc = 0.0;
        let rates: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
        let l = ladder(&rates);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = select_layer(&l, lo, SimTime::ZERO).unwrap();
        let s_hi = select_layer(&l, hi, SimTime::ZERO).unwrap();
        prop_assert!(s_lo.chosen_bitrate_kbps <= s_hi.chosen_bitrate_kbps);
        for s in [s_lo, s_hi] {
            prop_assert!(s.chosen_bitrate_kbps * 1000.0 <= s.estimate_bps || s.chosen_layer == l.lowest().layer);
            // Nothing better fits.
            prop_assert!(l.rows.iter().all(|r| r.bitrate_kbps <= s.chosen_bitrate_kbps || r.bitrate_kbps * 1000.0 > s.estimate_bps));
        }
    }
}
