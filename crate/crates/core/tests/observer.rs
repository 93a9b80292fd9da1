mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DEPTH: usize = 8;

fn spec_for(seed: u64) -> Spec {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pass_through_observer_is_invisible(seed in any::<u64>(), pick in any::<usize>()) {
        let spec = spec_for(seed);
        let gate = pick % spec.gates.len();
        let n = spec.procs.len();
        let (plain, observed) = (build(&spec), with_pass_through(&spec, gate));
        prop_assert!(traces_related(&plain, n, &observed, n + 1, DEPTH, |a, b| a == b));
    }

    #[test]
    fn supervisor_only_removes_traces(seed in any::<u64>(), pick in any::<usize>(), banned in 0..DOMAIN) {
        let spec = spec_for(seed);
        let gate = pick % spec.gates.len();
        let n = spec.procs.len();
        let (plain, sup) = (build(&spec), with_supervisor(&spec, gate, banned));
        prop_assert!(traces_related(&sup, n + 1, &plain, n, DEPTH, |a, b| a.is_subset(b)));
    }
}

/// A blocking process is visible: the checker must notice.
#[test]
fn checker_detects_a_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut found = false;
    for _ in 0..200 {
        let spec = random_spec(&mut rng);
        let n = spec.procs.len();
        let plain = build(&spec);
        for g in 0..spec.gates.len() {
            let sup = with_supervisor(&spec, g, 0);
            if !traces_related(&plain, n, &sup, n + 1, DEPTH, |a, b| a == b) {
                found = true;
            }
        }
    }
    assert!(found);
}
