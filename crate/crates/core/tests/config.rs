use esrp_core::config::parse_config;
use esrp_core::linkbudget::PathlossModel;
use esrp_core::metrics::{read_aggregate_csv, write_aggregate_csv, AggregateRow, Counters, MetricsRecord, RunLabels};
use esrp_core::sim::Scenario;
use esrp_core::time::SimDuration;
use proptest::prelude::*;

#[test]
fn empty_file_is_the_default_scenario() {
    let s = parse_config("").unwrap();
    assert_eq!(s, Scenario::default());
    assert_eq!(s.node_count, 500);
    assert_eq!(s.field, (1000.0, 1000.0));
    assert_eq!(s.sim_time, SimDuration::from_millis(600_000));
    assert_eq!(s.radio.frequency, 2.4e9);
    assert_eq!(s.data_rate, 2e6);
    assert_eq!(s.radio.propagation_limit.0, -111.0);
    assert_eq!(s.pathloss, PathlossModel::TwoRay);
}

#[test]
fn single_keys() {
    assert_eq!(parse_config("RADIO-TX-POWER 15").unwrap().radio.tx_power.0, 15.0);
    assert_eq!(parse_config("PROPAGATION-PATHLOSS FREE-SPACE").unwrap().pathloss, PathlossModel::FreeSpace);
}

#[test]
fn printed_parameter_block_loads_verbatim() {
    let text = "PROPAGATION-PATHLOSS = TWO-RAY, PROPAGATION-LIMIT = -111 (dBm), RADIO-FREQUENCY = 2.4 e 9 (hertz), \
                RADIO-TX-POWER = 15 (dBm), RADIO-RX-THRESHOLD = -81 (dBm), RADIO-ANTENNA-GAIN = 0.0 (dBm).";
    let s = parse_config(text).unwrap();
    assert_eq!(s, Scenario::default());
}

#[test]
fn invariant_violations_are_located() {
    let e = parse_config("# header\nTERRAIN-DIMENSIONS (300, 300)\nSOURCE-SINK-DISTANCE 350\n").unwrap_err();
    assert_eq!(e.key.as_deref(), Some("SOURCE-SINK-DISTANCE"));
    assert_eq!(e.line, Some(3));
    let e = parse_config("NUMBER-OF-NODES 10\nCBR-DESTINATION 12\n").unwrap_err();
    assert_eq!((e.key.as_deref(), e.line), (Some("CBR-DESTINATION"), Some(2)));
    let e = parse_config("BLACK-HOLE-NODES 7\nNUMBER-OF-NODES 5\n").unwrap_err();
    assert_eq!((e.key.as_deref(), e.line), (Some("BLACK-HOLE-NODES"), Some(1)));
}

/// Keys with a generator of valid values that keep the default scenario
/// valid.
fn valid_pair() -> impl Strategy<Value = (String, String)> {
    prop_oneof![
        (5.0f64..20.0).prop_map(|v| ("RADIO-TX-POWER".into(), format!("{v} (dBm)"))),
        (-95.0f64..-70.0).prop_map(|v| ("RADIO-RX-THRESHOLD".into(), format!("{v}"))),
        (2usize..600).prop_map(|v| ("NUMBER-OF-NODES".into(), v.to_string())),
        any::<u64>().prop_map(|v| ("SEED".into(), v.to_string())),
        (1u64..1000).prop_map(|v| ("SIMULATION-TIME".into(), format!("{v}S"))),
        (1u32..100_000).prop_map(|v| ("SIMULATION-TIME".into(), format!("{v}MS"))),
        (30u32..71).prop_map(|v| ("CBR-PAYLOAD".into(), v.to_string())),
        (0u32..500).prop_map(|v| ("CBR-PACKETS".into(), v.to_string())),
        prop_oneof![Just("TWO-RAY"), Just("FREE-SPACE")].prop_map(|v| ("PROPAGATION-PATHLOSS".into(), v.to_string())),
        prop_oneof![Just("YES"), Just("NO")].prop_map(|v| ("POWER-CONTROL".into(), v.to_string())),
        (0.01f64..1.0).prop_map(|v| ("SNR-ALPHA".into(), v.to_string())),
    ]
}

fn file(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
}

proptest! {
    #[test]
    fn valid_files_parse(pairs in prop::collection::btree_map(any::<u8>(), valid_pair(), 0..8)) {
        // Deduplicate keys: the last generated value of a key wins.
        let mut by_key = std::collections::BTreeMap::new();
        for (_, (k, v)) in pairs {
            by_key.insert(k, v);
        }
        let pairs: Vec<_> = by_key.into_iter().collect();
        let s = parse_config(&file(&pairs));
        prop_assert!(s.is_ok(), "{:?}", s);
        let s = s.unwrap();
        for (k, v) in &pairs {
            if k == "SEED" {
                prop_assert_eq!(s.seed, v.parse::<u64>().unwrap());
            }
            if k == "NUMBER-OF-NODES" {
                prop_assert_eq!(s.node_count, v.parse::<usize>().unwrap());
            }
        }
    }

    #[test]
    fn mutated_files_never_panic_and_errors_are_located(
        pairs in prop::collection::vec(valid_pair(), 0..6),
        victim in any::<prop::sample::Index>(),
        junk in "[ -~]{0,24}",
        mode in 0u8..4,
    ) {
        let mut lines: Vec<String> = pairs.iter().map(|(k, v)| format!("{k} {v}")).collect();
        if !lines.is_empty() {
            let i = victim.index(lines.len());
            let (k, v) = &pairs[i];
            lines[i] = match mode {
                0 => format!("{k} {junk}"),
                1 => format!("{junk} {v}"),
                2 => format!("{k}{junk}"),
                _ => junk.clone(),
            };
        }
        let text = lines.join("\n");
        match parse_config(&text) {
            Ok(s) => prop_assert!(s.validate().is_ok()),
            Err(e) => {
                prop_assert!(e.line.is_some() || e.key.is_some(), "unlocated error {e:?} for {text:?}");
                if let Some(l) = e.line {
                    prop_assert!(l >= 1 && l <= lines.len());
                }
            }
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[ -~\n]{0,200}") {
        if let Err(e) = parse_config(&text) {
            prop_assert!(e.line.is_some() || e.key.is_some());
        }
    }

    #[test]
    fn aggregate_csv_round_trips(
        energies in prop::collection::vec(0.0f64..1.0, 1..6),
        received in prop::collection::vec(0u64..=200, 1..6),
    ) {
        let runs: Vec<MetricsRecord> = received
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let labels = RunLabels { node_count: 100, tx_power_dbm: 10.0, payload_bytes: 70, seed: i as u64, sim_time_s: 600.0 };
                let counters = Counters { sent: 200, received: r, ..Counters::default() };
                let per_node: Vec<f64> = energies.iter().map(|e| e + i as f64 * 1e-3).collect();
                MetricsRecord::build(&labels, &counters, &[], &per_node).unwrap()
            })
            .collect();
        let row = AggregateRow::from_runs(&runs).unwrap();
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let back = read_aggregate_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![row]);
    }
}
