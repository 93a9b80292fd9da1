mod common;

use common::*;
use prodcell::sync_core::{Composition, Rendezvous, SchedulerPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec_for(seed: u64) -> Spec {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn thousand_random_compositions_match_the_oracle() {
    for seed in 0..1000 {
        let spec = spec_for(seed);
        if let Err(e) = oracle_agrees(&spec) {
            panic!("seed {seed}: {e}\n{spec:#?}");
        }
    }
}

fn disjoint(c: &Composition<u8>, a: &Rendezvous, b: &Rendezvous) -> bool {
    let pa = c.participation(a.gate);
    c.participation(b.gate).iter().all(|p| !pa.contains(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn independent_rendezvous_commute(seed in any::<u64>()) {
        let spec = spec_for(seed);
        let comp = build(&spec);
        for states in reachable(&spec, 3, 32) {
            let en = comp.enabled(&states);
            for a in &en {
                for b in &en {
                    if a.gate == b.gate || !disjoint(&comp, a, b) {
                        continue;
                    }
                    let mut ab = states.clone();
                    comp.fire(&mut ab, a).unwrap();
                    prop_assert!(comp.enabled(&ab).contains(b));
                    comp.fire(&mut ab, b).unwrap();
                    let mut ba = states.clone();
                    comp.fire(&mut ba, b).unwrap();
                    comp.fire(&mut ba, a).unwrap();
                    prop_assert_eq!(ab, ba);
                }
            }
        }
    }

    #[test]
    fn firing_moves_only_participants(seed in any::<u64>()) {
        let spec = spec_for(seed);
        let comp = build(&spec);
        for states in reachable(&spec, 3, 32) {
            for r in comp.enabled(&states) {
                let mut next = states.clone();
                comp.fire(&mut next, &r).unwrap();
                let parts = comp.participation(r.gate);
                for p in 0..states.len() {
                    if !parts.contains(&p) {
                        prop_assert_eq!(next[p], states[p]);
                    }
                }
            }
        }
    }

    #[test]
    fn seeded_runs_replay(seed in any::<u64>(), sched in any::<u64>()) {
        let spec = spec_for(seed);
        let comp = build(&spec);
        let policy = SchedulerPolicy::uniform(sched);
        let run = || {
            let mut s = vec![0u8; spec.procs.len()];
            let t = comp.run(&mut s, &policy, 30);
            (t.events.iter().map(|e| e.to_string()).collect::<Vec<_>>(), t.outcome, s)
        };
        prop_assert_eq!(run(), run());
    }
}
