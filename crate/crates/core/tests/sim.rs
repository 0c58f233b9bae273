mod common;

use esrp_core::metrics::{MetricsRecord, RunLabels};
use esrp_core::sim::trace::TraceEvent;
use esrp_core::sim::{self, CbrTraffic, EnergyParams, Scenario, Simulation};
use esrp_core::sweep::run_sweep;
use esrp_core::time::SimDuration;
use esrp_core::{NodeId, Pdr};
use proptest::prelude::*;

use common::{bfs_hops, events, fixed, records};

#[test]
fn five_node_line_delivers_every_packet() {
    let line: Vec<(f64, f64)> = (0..5).map(|i| (200.0 * f64::from(i), 0.0)).collect();
    let s = Scenario { traffic: CbrTraffic { destination: NodeId(4), ..CbrTraffic::default() }, ..Scenario::default() }
        .with_positions(line);
    let out = sim::run(&s).unwrap();
    assert_eq!((out.counters.sent, out.counters.received), (200, 200));
    assert_eq!(out.metrics.pdr, Some(Pdr::from_integer(1)));
}

#[test]
fn empty_traffic_is_idle_only() {
    let s = Scenario {
        node_count: 20,
        traffic: CbrTraffic { packet_count: 0, ..CbrTraffic::default() },
        ..Scenario::default()
    };
    let out = sim::run(&s).unwrap();
    assert_eq!(out.metrics.pdr, None);
    assert_eq!(out.metrics.mean_delay_s, None);
    let idle = s.energy.idle_mw * s.sim_time.as_secs_f64() / 3600.0;
    for e in &out.energy {
        assert_eq!((e.tx, e.rx), (0.0, 0.0));
        assert!((e.idle - idle).abs() < 1e-12, "{} vs {idle}", e.idle);
    }
}

#[test]
fn unreachable_sink_completes_with_zero_pdr() {
    let out = sim::run(&fixed(&[(0.0, 0.0), (900.0, 0.0)], 1, 10, 60)).unwrap();
    assert_eq!(out.counters.received, 0);
    assert_eq!(out.metrics.pdr, Some(Pdr::from_integer(0)));
}

#[test]
fn too_few_nodes_is_a_config_error() {
    let e = Simulation::new(&Scenario { node_count: 1, ..Scenario::default() }).err().unwrap();
    assert!(e.is_config_error());
}

#[test]
fn metrics_rescanned_from_trace_match_online_values() {
    let mut security = fixed(&[(0.0, 0.0), (300.0, 0.0), (600.0, 0.0), (300.0, 200.0), (300.0, -200.0)], 2, 40, 60);
    security.black_holes = vec![NodeId(1)];
    for s in [Scenario { node_count: 150, seed: 4, ..Scenario::default() }, security] {
        let out = sim::run_traced(&s).unwrap();
        let labels = RunLabels {
            node_count: s.node_count,
            tx_power_dbm: s.radio.tx_power.0,
            payload_bytes: s.traffic.payload_bytes,
            seed: s.seed,
            sim_time_s: s.sim_time.as_secs_f64(),
        };
        let rescanned = MetricsRecord::from_trace(&labels, &records(&out.trace), &out.counters).unwrap();
        assert_eq!(rescanned, out.metrics);
    }
}

#[test]
fn degenerate_sweep_equals_single_run() {
    let s = Scenario { node_count: 60, seed: 9, sim_time: SimDuration::from_millis(120_000), ..Scenario::default() };
    let swept = run_sweep(&s, &[], &[9]).unwrap();
    assert_eq!(swept.runs, vec![sim::run(&s).unwrap().metrics]);
    assert_eq!(swept.rows.len(), 1);
    assert!(!swept.rows[0].duplicate_seeds);
}

#[test]
fn repeated_seeds_are_flagged() {
    let s = Scenario { node_count: 40, sim_time: SimDuration::from_millis(60_000), ..Scenario::default() };
    let swept = run_sweep(&s, &["tx_power=10,15".parse().unwrap()], &[3, 3]).unwrap();
    assert_eq!(swept.runs.len(), 4);
    assert_eq!(swept.runs[0], swept.runs[1]);
    assert!(swept.rows.iter().all(|r| r.duplicate_seeds));
}

#[test]
fn exhausted_nodes_stop_without_breaking_the_run() {
    let s = Scenario {
        node_count: 30,
        energy: EnergyParams { budget_mwh: 0.05, ..EnergyParams::default() },
        ..Scenario::default()
    };
    let out = sim::run(&s).unwrap();
    assert!(out.energy.iter().all(|e| e.dead_at.is_some()));
    assert!(out.energy.iter().all(|e| e.tx + e.rx + e.idle <= 0.05 + 1e-9));
}

#[test]
fn power_control_lowers_data_power_on_short_links() {
    let s = fixed(&[(0.0, 0.0), (100.0, 0.0)], 1, 60, 80);
    let out = sim::run_traced(&s).unwrap();
    let data_powers: Vec<f64> = events(&out.trace)
        .into_iter()
        .filter_map(|(_, n, e)| match e {
            TraceEvent::Tx { kind, power_dbm, .. } if n == NodeId(0) && kind == "data" => Some(power_dbm),
            _ => None,
        })
        .collect();
    assert_eq!(out.counters.received, 60);
    assert!(data_powers.last().unwrap() < &s.radio.tx_power.0, "{data_powers:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn small_runs_conserve_and_route_shortest(
        pos in prop::collection::vec((0.0f64..700.0, 0.0f64..700.0), 2..8),
        seed in any::<u64>(),
    ) {
        let dest = pos.len() - 1;
        let s = Scenario { seed, ..fixed(&pos, dest as u32, 4, 20) };
        let out = sim::run_traced(&s).unwrap();
        let total: f64 = out.energy.iter().map(|e| e.tx + e.rx + e.idle).sum();
        prop_assert_eq!(total, out.metrics.total_energy_mwh);
        prop_assert!(out.counters.received <= out.counters.sent);
        if let Some(p) = out.metrics.pdr {
            prop_assert_eq!(p * Pdr::from_integer(out.counters.sent), Pdr::from_integer(out.counters.received));
        }
        let range = esrp_core::linkbudget::max_range(&s.radio, s.pathloss).unwrap();
        let expect = bfs_hops(&pos, range, 0, dest);
        for d in &out.deliveries {
            prop_assert!(d.delay_ns() >= d.airtime_ns);
            prop_assert_eq!(Some(d.hops as u32), expect);
        }
    }
}
