use aifgen_bench::report::{csv_rows, read_csv};
use aifgen_bench::{emit_report, BenchResult, ReportFormat};
use aifgen_core::{Boxplot, MetricsSummary};
use proptest::prelude::*;

fn result(id: String, latencies: Vec<f64>) -> BenchResult {
    BenchResult {
        variant_id: id,
        summary: MetricsSummary::from_latencies(&latencies, Some(2.0)),
        request_count: latencies.len(),
        client_latencies_ms: latencies,
        server_summary: MetricsSummary::empty(),
        errors: 0,
        warmup_count: 0,
        warmup_errors: 0,
        server_count_before: 0,
    }
}

fn latencies() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..500.0, 1..60)
}

proptest! {
    #[test]
    fn summary_matches_brute_force(v in latencies()) {
        let s = MetricsSummary::from_latencies(&v, Some(2.0));
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = (0.9 * n as f64).ceil() as usize;
        prop_assert_eq!(s.p90_ms, Some(sorted[rank.max(1) - 1]));
        prop_assert_eq!(s.min_ms, Some(sorted[0]));
        prop_assert_eq!(s.max_ms, Some(sorted[n - 1]));
        prop_assert_eq!(s.throughput_rps, Some(n as f64 / 2.0));
        prop_assert!(s.is_ordered());
    }

    #[test]
    fn boxplot_partitions_the_values(v in latencies()) {
        let b = Boxplot::from_values(&v).unwrap();
        prop_assert!(b.q1 <= b.q2 && b.q2 <= b.q3);
        let iqr = b.q3 - b.q1;
        let inside = v.iter().filter(|x| **x >= b.q1 - 1.5 * iqr && **x <= b.q3 + 1.5 * iqr).count();
        prop_assert_eq!(inside + b.outliers.len(), v.len());
        prop_assert!(b.whisker_lo <= b.q1 + 1e-12 || inside == 0);
    }

    #[test]
    fn baseline_speedup_is_exactly_one(sets in prop::collection::vec(latencies(), 1..5), pick in 0usize..5) {
        let results: Vec<_> = sets.into_iter().enumerate().map(|(i, v)| result(format!("v{i}"), v)).collect();
        let base = &results[pick % results.len()];
        let rows = csv_rows(&results, &base.variant_id).unwrap();
        for (row, r) in rows.iter().zip(&results) {
            let expected = base.summary.mean_ms.unwrap() / r.summary.mean_ms.unwrap();
            prop_assert_eq!(row.speedup_vs_baseline, Some(expected));
            if r.variant_id == base.variant_id {
                prop_assert_eq!(row.speedup_vs_baseline, Some(1.0));
            }
        }
    }
}

#[test]
fn csv_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let results = vec![
        result("A".into(), vec![20.0, 20.0]),
        result("B".into(), vec![10.0, 10.0]),
    ];
    emit_report(&results, "A", ReportFormat::Csv, &out).unwrap();
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows, csv_rows(&results, "A").unwrap());
    assert_eq!(rows[1].speedup_vs_baseline, Some(2.0));
}
