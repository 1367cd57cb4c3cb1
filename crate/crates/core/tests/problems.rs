//! Experiment harness: run records, sweeps and CSV output.

use phasekit::problems::{run_experiment, sweep, write_csv, ProblemKind, ProblemSpec, RunOptions};

fn csv_without_time(records: &[phasekit::problems::RunRecord]) -> Vec<Vec<String>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|&(i, _)| i != 2).map(|(_, s)| s.to_string()).collect())
        .collect()
}

#[test]
fn small_sweeps_meet_their_thresholds() {
    let opts = RunOptions { repeats: 1, ..Default::default() };
    for (kind, params) in [
        (ProblemKind::Legendre, vec![16.0, 100.0]),
        (ProblemKind::ThirdOrder, vec![16.0, 40.0]),
        (ProblemKind::ThirdOrder52, vec![32.0]),
        (ProblemKind::FourthOrder, vec![16.0, 40.0]),
    ] {
        let records = sweep(&ProblemSpec::new(kind, params[0]), &params, &opts).unwrap();
        assert_eq!(records.len(), params.len());
        for r in &records {
            assert!(r.passed, "{kind} {}: {:e} {:?}", r.param, r.max_abs_err, r.diagnostic);
            assert!(r.max_abs_err <= kind.threshold());
            assert!(r.time_s > 0.0 && r.ncoefs > 0 && r.omega_freq > 0.0);
        }
    }
}

#[test]
fn csv_is_reproducible_apart_from_timings() {
    let opts = RunOptions { repeats: 1, ..Default::default() };
    let template = ProblemSpec::new(ProblemKind::ThirdOrder, 20.0);
    let a = sweep(&template, &[20.0, 50.0], &opts).unwrap();
    let b = sweep(&template, &[20.0, 50.0], &opts).unwrap();
    let (ca, cb) = (csv_without_time(&a), csv_without_time(&b));
    assert_eq!(ca, cb);
    assert_eq!(ca[0], ["problem", "param", "max_abs_err", "ncoefs", "omega_freq"]);
    assert_eq!(ca.len(), 3);
}

#[test]
fn invalid_specs_give_failed_records() {
    let opts = RunOptions { repeats: 1, ..Default::default() };
    let mut spec = ProblemSpec::new(ProblemKind::Legendre, 16.5);
    let r = run_experiment(&spec, &opts).unwrap();
    assert!(!r.passed && r.diagnostic.is_some());
    spec.param = 16.0;
    spec.window = (5.0, 6.0);
    let r = run_experiment(&spec, &opts).unwrap();
    assert!(!r.passed && r.time_s.is_nan());
    assert!(run_experiment(&ProblemSpec::new(ProblemKind::Legendre, 16.0), &RunOptions { repeats: 0, ..opts }).is_err());
}
