use proptest::prelude::*;
use slb_robot::trials::{run_fault_trials, TrialConfig};

#[test]
fn thousand_faulty_paths_hold_invariants() {
    let report = run_fault_trials(&TrialConfig::default());
    assert_eq!(report.trials, 1000);
    assert!(report.violations.is_empty(), "{:?}", &report.violations[..report.violations.len().min(5)]);
    assert_eq!(report.misattributed, 0);
    assert_eq!(report.completed + report.timed_out + report.protocol_errors, report.paths);
    // The profile must actually bite.
    assert!(report.timed_out > 0);
    assert!(report.protocol_errors > 0);
    assert!(report.completed > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn any_fault_mix_is_never_silent(
        seed in any::<u64>(),
        delay in 0.0f64..0.8,
        dup in 0.0f64..0.8,
        timeout in 500i64..5000,
    ) {
        let report = run_fault_trials(&TrialConfig {
            trials: 8,
            seed,
            timeout_ms: timeout,
            delay_prob: delay,
            duplicate_prob: dup,
            paths_per_trial: 3,
        });
        prop_assert!(report.clean(), "{:?}", report.violations);
    }
}
