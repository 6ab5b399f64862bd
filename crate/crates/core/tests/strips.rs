mod common;

use std::collections::BTreeSet;

use common::replay_list;
use nsplan::kb::{ActionClass, Catalog, ClassId, StatePredicate};
use nsplan::seed::derive_seed;
use nsplan::strips::{replay_validate, state_generator, StateSet, StateTemplateCatalog};
use nsplan::synth::{generate_corpus, SynthSpec};
use proptest::prelude::*;

fn predicate(i: u8) -> StatePredicate {
    let t = StateTemplateCatalog::shipped();
    let names = ["IsOpen", "IsClosed", "IsOn", "IsOff", "IsClean", "IsDirty"];
    t.predicate(names[usize::from(i % 6)], &[["door", "lamp"][usize::from(i / 6)]]).unwrap()
}

fn effects() -> impl Strategy<Value = BTreeSet<StatePredicate>> {
    prop::collection::btree_set(0u8..12, 0..=3).prop_map(|s| s.into_iter().map(predicate).collect())
}

fn world() -> impl Strategy<Value = (Catalog, Vec<ClassId>)> {
    let classes = prop::collection::vec((effects(), effects(), effects()), 1..=5);
    classes.prop_flat_map(|schemas| {
        let n = schemas.len() as u32;
        let classes: Vec<ActionClass> = schemas
            .into_iter()
            .enumerate()
            .map(|(i, (pre, add, del))| {
                let mut c = ActionClass::new(i as u32, format!("c{i}"), format!("c{i}"), 0);
                c.pre = pre;
                // a schema never adds and deletes the same state
                c.del = &del - &add;
                c.add = add;
                c
            })
            .collect();
        (Just(Catalog::new(1, classes).unwrap()), prop::collection::vec(0..n, 1..=6))
    })
}

proptest! {
    #[test]
    fn replay_matches_list_oracle((catalog, seq) in world()) {
        let states = state_generator(&seq, &catalog).unwrap();
        let init: Vec<_> = states.init.iter().cloned().collect();
        let replay = replay_validate(&seq, &states.init, &catalog).unwrap();
        let (violation, list) = replay_list(&seq, &init, &catalog);
        prop_assert_eq!(replay.first_violation, violation);
        prop_assert_eq!(&replay.final_state, &list.into_iter().collect::<StateSet>());
        if replay.ok() {
            prop_assert_eq!(&replay.final_state, &states.final_state);
        }
    }

    #[test]
    fn generated_states_are_bounded((catalog, seq) in world()) {
        let states = state_generator(&seq, &catalog).unwrap();
        let class = |id: &ClassId| catalog.get(*id).unwrap();
        let all_pre: StateSet = seq.iter().flat_map(|id| class(id).pre.iter().cloned()).collect();
        let all_add: StateSet = seq.iter().flat_map(|id| class(id).add.iter().cloned()).collect();
        prop_assert!(states.init.is_subset(&all_pre));
        prop_assert!(states.final_state.is_subset(&(&states.init | &all_add)));
        prop_assert!(class(&seq[0]).pre.is_subset(&states.init));
    }
}

#[test]
fn synthetic_sequences_replay_cleanly() {
    let spec = SynthSpec { n_sequences: 100, feature_dim: 4, ..SynthSpec::default() };
    let corpus = generate_corpus(&spec, derive_seed(5, "strips-test")).unwrap();
    for seq in &corpus.sequences {
        let ids = seq.class_ids();
        let states = state_generator(&ids, &corpus.catalog).unwrap();
        let replay = replay_validate(&ids, &states.init, &corpus.catalog).unwrap();
        assert!(replay.ok(), "{}", seq.seq_id);
        assert_eq!(replay.final_state, states.final_state);
    }
}
