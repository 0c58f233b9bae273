#![allow(dead_code)]

use std::collections::VecDeque;

use esrp_core::sim::trace::{parse_line, TraceEvent, TraceRecord};
use esrp_core::sim::{CbrTraffic, Scenario};
use esrp_core::time::{SimDuration, SimTime};
use esrp_core::NodeId;

/// Scenario on fixed coordinates, node 0 sending to `dest`.
pub fn fixed(positions: &[(f64, f64)], dest: u32, packets: u32, sim_s: u64) -> Scenario {
    Scenario {
        sim_time: SimDuration::from_millis(sim_s * 1000),
        traffic: CbrTraffic {
            destination: NodeId(dest),
            packet_count: packets,
            interval: SimDuration::from_millis(1000),
            start: SimTime::from_secs_f64(2.0),
            ..CbrTraffic::default()
        },
        ..Scenario::default()
    }
    .with_positions(positions.to_vec())
}

/// Hop distance from `src` to `dst` over the unit-disk graph of radius
/// `range`.
pub fn bfs_hops(positions: &[(f64, f64)], range: f64, src: usize, dst: usize) -> Option<u32> {
    let n = positions.len();
    let mut dist = vec![None; n];
    dist[src] = Some(0u32);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for v in 0..n {
            if dist[v].is_none() {
                let (dx, dy) = (positions[u].0 - positions[v].0, positions[u].1 - positions[v].1);
                if dx.hypot(dy) <= range {
                    dist[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
    }
    dist[dst]
}

pub fn records(trace: &[String]) -> Vec<TraceRecord> {
    trace.iter().map(|l| parse_line(l).expect("trace line parses")).collect()
}

pub fn events(trace: &[String]) -> Vec<(SimTime, NodeId, TraceEvent)> {
    records(trace).into_iter().map(|r| (SimTime(r.t_ns), r.node, r.event)).collect()
}
