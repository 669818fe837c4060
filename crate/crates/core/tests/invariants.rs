use std::sync::OnceLock;

use iecc_core::adversaries::{apply_chunk_actions, strategy_random, ChunkAction};
use iecc_core::channel::{run_session, Protocol, ProtocolKind, ProtocolParams, SessionOptions};
use iecc_core::ecc::{below_list_threshold, erasure_list_decode, Candidate};
use iecc_core::p35::{Msg, Protocol35};
use iecc_core::p611::Protocol611;
use iecc_core::{BitWord, ErasedWord, Rational};
use proptest::prelude::*;

fn p611() -> &'static Protocol611 {
    static P: OnceLock<Protocol611> = OnceLock::new();
    P.get_or_init(|| Protocol611::new(ProtocolParams::new(ProtocolKind::P611, 3, Rational::new(1, 2), 64)).unwrap())
}

fn p35() -> &'static Protocol35 {
    static P: OnceLock<Protocol35> = OnceLock::new();
    P.get_or_init(|| Protocol35::new(ProtocolParams::desk_default(ProtocolKind::P35)).unwrap())
}

fn word(len: usize) -> impl Strategy<Value = BitWord> {
    prop::collection::vec(any::<bool>(), len).prop_map(BitWord::from_bits)
}

fn action() -> impl Strategy<Value = ChunkAction> {
    prop::sample::select(ChunkAction::ALL.to_vec())
}

fn budget() -> impl Strategy<Value = Rational> {
    prop::sample::select(vec![Rational::new(1, 4), Rational::new(2, 5), Rational::new(1, 2)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xor_is_an_involution(a in word(70), b in word(70)) {
        let c = a.xor(&b).unwrap();
        prop_assert_eq!(c.xor(&b).unwrap(), a.clone());
        prop_assert_eq!(a.hamming(&b).unwrap(), c.count_ones());
        prop_assert_eq!(a.to_string().parse::<BitWord>().unwrap(), a);
    }

    #[test]
    fn list_decode_keeps_the_sent_word(index in 0usize..32, mask in word(64)) {
        let p = p611();
        let cb = p.alice_codebook();
        let sent = cb.encode(index).unwrap();
        let received = ErasedWord::deliver(sent, &mask).unwrap();
        let list = erasure_list_decode(cb, &received, p.alice_extras()).unwrap();
        if below_list_threshold(mask.count_ones(), cb.epsilon(), 64) {
            prop_assert!(list.len() <= 2);
        }
        prop_assert!(list.contains(&Candidate::Word(index)));
    }

    #[test]
    fn sessions_are_deterministic(x in 0usize..8, b in budget(), seed in any::<u64>()) {
        let p = p611();
        let x = BitWord::from_index(x, 3);
        let opts = SessionOptions { trace: true, ..Default::default() };
        let r1 = run_session(p, &x, &mut strategy_random(b, seed), opts).unwrap();
        let r2 = run_session(p, &x, &mut strategy_random(b, seed), opts).unwrap();
        prop_assert_eq!(r1.bob_output, r2.bob_output);
        prop_assert_eq!(r1.trace, r2.trace);
    }

    #[test]
    fn random_budget_is_spent_exactly(x in 0usize..8, b in budget(), seed in any::<u64>()) {
        let p = p611();
        let r = run_session(p, &BitWord::from_index(x, 3), &mut strategy_random(b, seed), SessionOptions::default()).unwrap();
        let total = p.schedule().total_rounds();
        let erased = r.erased_alice_rounds + r.erased_bob_rounds;
        prop_assert_eq!(Rational::from_integer(erased as i64), (b * Rational::from_integer(total as i64)).floor());
        prop_assert!(r.invariant_violations.is_empty(), "{:?}", r.invariant_violations);
    }

    #[test]
    fn p611_scripts_keep_invariants(x in 0usize..8, d in 1usize..8, script in prop::collection::vec(action(), 8)) {
        let p = p611();
        let x = BitWord::from_index(x, 3);
        let decoy = BitWord::from_index((x.to_index() + d) % 8, 3);
        let mut adv = apply_chunk_actions::<Protocol611>(script, decoy);
        let r = run_session(p, &x, &mut adv, SessionOptions::default()).unwrap();
        prop_assert!(r.invariant_violations.is_empty(), "{:?}", r.invariant_violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn p35_random_keeps_invariants(x in 0usize..4, b in budget(), seed in any::<u64>()) {
        let p = p35();
        let r = run_session(p, &BitWord::from_index(x, 2), &mut strategy_random(b, seed), SessionOptions::default()).unwrap();
        prop_assert!(r.invariant_violations.is_empty(), "{:?}", r.invariant_violations);
    }

    #[test]
    fn p35_scripts_keep_invariants(x in 0usize..4, d in 1usize..4, script in prop::collection::vec(action(), 1..40)) {
        let p = p35();
        let x = BitWord::from_index(x, 2);
        let decoy = BitWord::from_index((x.to_index() + d) % 4, 2);
        let mut adv = apply_chunk_actions::<Protocol35>(script, decoy);
        let r = run_session(p, &x, &mut adv, SessionOptions::default()).unwrap();
        prop_assert!(r.invariant_violations.is_empty(), "{:?}", r.invariant_violations);
    }

    /// Simulating from a message alone agrees with stepping Alice's full state.
    #[test]
    fn simulation_matches_alice(x in 0usize..4, heard in prop::collection::vec(prop::option::of(any::<bool>()), 1..40)) {
        let p = p35();
        let slots = p.schedule().chunks();
        let mut state = p.alice_start(&BitWord::from_index(x, 2));
        let (next, mut msg, _) = p.alice_step(&state, None, &slots[0]);
        state = next;
        for (k, h) in heard.iter().enumerate().take(slots.len() - 1) {
            let slot = &slots[k + 1];
            let (next, sent, _) = p.alice_step(&state, *h, slot);
            let simulated = p.simulate_alice_step(msg, *h, slot).unwrap();
            prop_assert_eq!(simulated, sent);
            state = next;
            msg = sent;
        }
        prop_assert!(matches!(msg, Msg::Ecc(_) | Msg::Const(_)));
    }
}
