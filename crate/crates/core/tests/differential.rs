use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlist::probe::{CountingProbe, StepCounts};
use vlist::{ImplKind, OpKind, SequentialSet, SetOps};

fn op_strategy() -> impl Strategy<Value = Vec<(OpKind, i64)>> {
    let kind = prop_oneof![
        Just(OpKind::Insert),
        Just(OpKind::Remove),
        Just(OpKind::Contains)
    ];
    prop::collection::vec((kind, 1i64..=16), 0..300)
}

proptest! {
    #[test]
    fn every_impl_matches_the_sequential_list(ops in op_strategy()) {
        let oracle = SequentialSet::new();
        let sets: Vec<_> = ImplKind::CONCURRENT.iter().map(|k| k.build()).collect();
        for (kind, key) in ops {
            let want = kind.apply(&oracle, key);
            for (set, impl_kind) in sets.iter().zip(ImplKind::CONCURRENT) {
                prop_assert_eq!(kind.apply(&**set, key), want, "{} {}({})", impl_kind, kind, key);
            }
        }
        for set in &sets {
            prop_assert_eq!(set.keys(), oracle.keys());
        }
    }

    /// Instrumentation only observes: results with a counting probe equal
    /// those of the uninstrumented build.
    #[test]
    fn probes_do_not_change_behaviour(ops in op_strategy()) {
        for kind in ImplKind::ALL {
            let plain = kind.build();
            let counted = kind.build_with(CountingProbe);
            for &(op, key) in &ops {
                prop_assert_eq!(op.apply(&*plain, key), op.apply(&*counted, key));
            }
            prop_assert_eq!(plain.keys(), counted.keys());
        }
    }
}

#[test]
fn long_random_sequence_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1FF);
    let oracle = SequentialSet::new();
    let sets: Vec<_> = ImplKind::CONCURRENT.iter().map(|k| k.build()).collect();
    for i in 0..20_000 {
        let kind = [OpKind::Insert, OpKind::Remove, OpKind::Contains][rng.random_range(0..3)];
        let key = rng.random_range(1..=64);
        let want = kind.apply(&oracle, key);
        for set in &sets {
            assert_eq!(kind.apply(&**set, key), want, "op {i}: {kind}({key})");
        }
    }
}

#[test]
fn contains_takes_no_locks_and_writes_nothing() {
    for kind in ImplKind::CONCURRENT {
        let set = kind.build_with(CountingProbe);
        for k in (1..40).step_by(3) {
            set.insert(k);
        }
        let before = StepCounts::current();
        for k in 0..50 {
            set.contains(k);
        }
        let delta = StepCounts::current().since(&before);
        assert_eq!(delta.synchronizing(), 0, "{kind}");
        assert!(delta.get(vlist::Action::ReadVal) > 0);
    }
}
