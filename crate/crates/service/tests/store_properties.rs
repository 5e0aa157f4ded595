use aquagreen_core::telemetry::{SeriesValue, TelemetryRecord};
use aquagreen_service::store::{anchored, ReadingQuery, Store};
use proptest::prelude::*;
use std::collections::BTreeSet;

const SERIES: [&str; 3] = ["water_temperature_c", "dissolved_oxygen_mgl", "ph"];

fn record(node_id: u32, seq: u16, ts: u64, n: usize) -> TelemetryRecord {
    TelemetryRecord {
        gateway_id: "gw-1".into(),
        node_id,
        seq,
        timestamp_s: ts,
        readings: SERIES[..n]
            .iter()
            .map(|s| SeriesValue {
                series: s.to_string(),
                value: 1.0,
            })
            .collect(),
        battery_v: 3.9,
        rssi_dbm: -100.0,
        received_at_s: ts,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Replays never inflate counts, and every stored reading is found by a
    /// query for its own series and timestamp.
    #[test]
    fn conservation_and_query_completeness(
        posts in prop::collection::vec((1u32..4, 0u16..30, 0u64..5000, 1usize..=3), 1..120),
    ) {
        let mut store = Store::in_memory();
        let mut accepted = BTreeSet::new();
        let mut expected_rows = 0;
        for &(node, seq, ts, n) in &posts {
            let created = matches!(
                store.ingest(record(node, seq, ts, n), None, 0).unwrap(),
                aquagreen_service::store::IngestOutcome::Created(_)
            );
            prop_assert_eq!(created, accepted.insert((node, seq)));
            if created {
                expected_rows += n;
            }
        }
        prop_assert_eq!(store.record_count(), accepted.len());
        prop_assert_eq!(store.reading_count(), expected_rows);
        let keys: BTreeSet<_> = store.rows().iter().map(|r| r.idempotency_key.clone()).collect();
        prop_assert_eq!(keys.len(), store.reading_count());
        for row in store.rows() {
            let hits = store.query(&ReadingQuery {
                pattern: Some(anchored(&regex::escape(&row.series)).unwrap()),
                node_id: Some(row.node_id),
                from_s: Some(row.timestamp_s),
                to_s: Some(row.timestamp_s + 1),
                limit: usize::MAX,
            });
            prop_assert!(hits.iter().any(|h| h.id == row.id));
        }
    }
}
