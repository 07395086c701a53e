use std::path::Path;

use torm::bench::{load_suite, run_bench, write_bench, BenchOptions};
use torm::optimizer::ClockKind;

fn quick() -> BenchOptions {
    BenchOptions {
        runs: 1,
        budget: Some(1.0),
        clock: Some(ClockKind::Work),
        jobs: 1,
    }
}

#[test]
fn one_run_gives_a_row_per_variant_and_repeats_exactly() {
    let suite = load_suite(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/suites/planar.toml")).unwrap();
    let rows = run_bench(&suite, &quick()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.solved()));
    assert_eq!(run_bench(&suite, &quick()).unwrap(), rows);

    let dir = tempfile::tempdir().unwrap();
    let written = write_bench(&rows, &dir.path().join("runs.csv")).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    assert!(dir.path().join("runs_summary.csv").exists());
}
