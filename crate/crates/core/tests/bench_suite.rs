//! End-to-end checks of the benchmark harness on the motivating fixture.

mod common;

use std::time::Duration;

use egx_core::bench::*;

fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/motivating.json")
}

fn options() -> SuiteOptions {
    SuiteOptions {
        time_limit: Duration::from_secs(30),
        curves: true,
        parallel: false,
    }
}

fn methods() -> Vec<MethodSpec> {
    MethodSpec::parse_list("greedy,hybrid:1.25,parallel:2").unwrap()
}

#[test]
fn motivating_gap_records_hit_the_boundaries() {
    let mut bks = BksTable::default();
    bks.insert("motivating", 16);
    let output = run_suite(&[fixture_path()], &methods(), &bks, &options()).unwrap();
    assert_eq!(output.records.len(), 3);

    let by_method = |m: &str| {
        output
            .records
            .iter()
            .find(|r| r.method == m)
            .unwrap_or_else(|| panic!("row for {m}"))
    };
    let greedy = by_method("greedy");
    assert_eq!(greedy.final_cost.finite(), Some(17));
    assert_eq!(greedy.heuristic_cost, 17);
    assert_eq!(greedy.alpha, Some((1, 1)));
    assert!(!greedy.bks_provisional);
    assert_eq!(greedy.status, "heuristic");

    let hybrid = by_method("hybrid");
    assert_eq!(hybrid.final_cost.finite(), Some(16));
    assert_eq!(hybrid.alpha, Some((0, 1)));
    assert_eq!(hybrid.status, "optimal");
    assert_eq!(hybrid.theta.map(|t| t.to_string()), Some("5/4".into()));

    let parallel = by_method("parallel");
    assert_eq!(parallel.final_cost.finite(), Some(17));
    assert_eq!(parallel.workers, Some(2));

    // incumbent curve: the hybrid solve starts at 17 and ends at 16
    let costs: Vec<u64> = output
        .curves
        .iter()
        .filter(|c| c.method == "hybrid")
        .map(|c| c.cost)
        .collect();
    assert_eq!(costs.first(), Some(&17));
    assert_eq!(costs.last(), Some(&16));
}

#[test]
fn missing_bks_is_provisional_best_observed() {
    let output = run_suite(
        &[fixture_path()],
        &methods(),
        &BksTable::default(),
        &options(),
    )
    .unwrap();
    for record in &output.records {
        assert_eq!(record.bks, Some(16), "best observed across methods");
        assert!(record.bks_provisional);
        assert!(record.status.is_empty() || !record.status.starts_with(';'));
    }
    let csv = write_csv(&output.records);
    assert!(csv.contains("provisional-bks"));
}

#[test]
fn csv_is_deterministic_modulo_wall_time() {
    let mut bks = BksTable::default();
    bks.insert("motivating", 16);
    let strip_time = |csv: &str| -> String {
        csv.lines()
            .map(|line| {
                let cells: Vec<&str> = line.split(',').collect();
                let mut cells = cells;
                if cells.len() > 4 && cells[0] != "benchmark" {
                    cells[4] = "-";
                }
                cells.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = run_suite(&[fixture_path()], &methods(), &bks, &options()).unwrap();
    let b = run_suite(&[fixture_path()], &methods(), &bks, &options()).unwrap();
    assert_eq!(
        strip_time(&write_csv(&a.records)),
        strip_time(&write_csv(&b.records))
    );
    assert!(write_csv(&a.records).starts_with(CSV_HEADER));
}

#[test]
fn unloadable_corpus_is_an_error() {
    let missing = std::path::PathBuf::from("/nonexistent/graph.json");
    assert!(matches!(
        run_suite(&[missing], &methods(), &BksTable::default(), &options()),
        Err(SuiteError::Read { .. })
    ));
}

#[test]
fn diamond_selection_cost_confirmed_by_enumeration() {
    // root + two intermediates sharing one expensive leaf: 1 + 1 + 1 + 5
    let g = egx_core::EGraph::load_str(
        r#"{"nodes": {
            "l":  {"op": "leaf", "children": [], "eclass": "cl", "cost": 5},
            "m0": {"op": "f", "children": ["l"], "eclass": "cm0", "cost": 1},
            "m1": {"op": "g", "children": ["l"], "eclass": "cm1", "cost": 1},
            "r":  {"op": "h", "children": ["m0", "m1"], "eclass": "cr", "cost": 1}},
            "root_eclasses": ["cr"]}"#,
        None,
    )
    .unwrap();
    assert_eq!(common::brute_force_dag_optimum(&g), Some(8));
}

#[test]
fn parallel_suite_reports_the_same_records() {
    let mut bks = BksTable::default();
    bks.insert("motivating", 16);
    let mut par_options = options();
    par_options.parallel = true;
    let sequential = run_suite(&[fixture_path()], &methods(), &bks, &options()).unwrap();
    let parallel = run_suite(&[fixture_path()], &methods(), &bks, &par_options).unwrap();
    assert_eq!(sequential.records.len(), parallel.records.len());
    for (a, b) in sequential.records.iter().zip(&parallel.records) {
        assert_eq!(a.benchmark, b.benchmark);
        assert_eq!(a.method, b.method);
        assert_eq!(a.final_cost, b.final_cost);
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.status, b.status);
    }
}
