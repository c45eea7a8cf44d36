use std::fs;

use robust_power::experiment::{
    read_summary, read_table, run_scenario, simulate, sweep_surface, P_CDF, P_INSTANCES, RATE_CDF,
    RATE_INSTANCES, SUMMARY, SURFACE,
};
use robust_power::scenario::{preset, Scenario, SweepGrid};
use robust_power::stats::variance;

fn table1() -> Scenario {
    preset("table1-3term").unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let s = table1().with_iterations(20_000).with_seed(3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&s, a.path()).unwrap();
    run_scenario(&s, b.path()).unwrap();
    for name in [P_INSTANCES, P_CDF, RATE_CDF, RATE_INSTANCES, SUMMARY] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn cdfs_are_monotone_from_zero_to_one() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&table1().with_iterations(20_000), dir.path()).unwrap();
    for (file, prefix) in [(P_CDF, "cdf_p"), (RATE_CDF, "cdf_rate")] {
        let table = read_table(&dir.path().join(file)).unwrap();
        for k in 1..=3 {
            let col = table.column(&format!("{prefix}{k}")).unwrap();
            assert!(col.windows(2).all(|w| w[0] <= w[1]), "{file} column {k}");
            assert!(col[0] >= 0.0);
            assert_eq!(*col.last().unwrap(), 1.0);
        }
    }
}

#[test]
fn power_rows_sum_and_stay_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&table1().with_iterations(5_000), dir.path()).unwrap();
    let t = read_table(&dir.path().join(P_INSTANCES)).unwrap();
    assert_eq!(t.header[0], "time");
    assert_eq!(t.rows.len(), 100);
    for row in &t.rows {
        let parts = &row[1..4];
        assert!(parts.iter().all(|&p| p >= 0.0));
        let sum: f64 = parts.iter().sum();
        assert!((sum - row[4]).abs() <= 1e-9 * (1.0 + sum));
    }
}

#[test]
fn robust_run_has_steadier_total_power() {
    let robust = tempfile::tempdir().unwrap();
    let neutral = tempfile::tempdir().unwrap();
    let s = table1().with_seed(12);
    run_scenario(&s, robust.path()).unwrap();
    run_scenario(&s.with_uniform_phi(1.0).unwrap(), neutral.path()).unwrap();
    let col = |dir: &tempfile::TempDir| {
        read_table(&dir.path().join(P_INSTANCES))
            .unwrap()
            .column("sum_p")
            .unwrap()
    };
    assert!(variance(&col(&robust)) < variance(&col(&neutral)));
}

#[test]
fn table_one_meets_the_power_budget() {
    let out = simulate(&table1().with_seed(13)).unwrap().summary;
    let ratio = out.sum_cvar_p / out.p0;
    assert!((0.97..=1.03).contains(&ratio), "{ratio}");
}

#[test]
fn summary_file_reports_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&table1().with_iterations(4_000), dir.path()).unwrap();
    let map = read_summary(&dir.path().join(SUMMARY)).unwrap();
    assert_eq!(map["iterations"], vec!["4000".to_string()]);
    assert_eq!(map["z"].len(), 3);
    let rate: f64 = map["rate"][0].parse().unwrap();
    assert!((rate - out.summary.rate).abs() <= 1e-9 * rate);
}

#[test]
fn single_point_sweep_matches_a_run() {
    let mut s = table1().with_iterations(20_000);
    s.sweep = Some(SweepGrid {
        phi_low: vec![0.9],
        phi_high: vec![0.9],
    });
    let dir = tempfile::tempdir().unwrap();
    let surface = sweep_surface(&s, dir.path()).unwrap();
    let single = simulate(&s.at_sweep_point(0.9, 0.9).unwrap())
        .unwrap()
        .summary;
    assert_eq!(surface.len(), 1);
    assert_eq!(surface[0].rate, single.rate);
    let t = read_table(&dir.path().join(SURFACE)).unwrap();
    assert_eq!(t.header, vec!["x", "y", "z"]);
    assert_eq!(t.rows, vec![vec![0.9, 0.9, single.rate]]);
}

#[test]
fn realistic_sweep_peaks_at_the_neutral_corner() {
    let s = preset("table2-realistic8")
        .unwrap()
        .with_iterations(100_000);
    let dir = tempfile::tempdir().unwrap();
    let surface = sweep_surface(&s, dir.path()).unwrap();
    assert_eq!(surface.len(), 16);
    let max = surface
        .iter()
        .map(|p| p.rate)
        .fold(f64::NEG_INFINITY, f64::max);
    let corner = surface.last().unwrap();
    assert_eq!((corner.phi_low, corner.phi_high), (1.0, 1.0));
    assert_eq!(corner.rate, max);
    let worst = surface
        .iter()
        .map(|p| (max - p.rate) / max)
        .fold(0.0, f64::max);
    assert!(worst <= 0.06, "worst relative drop {worst}");
}
