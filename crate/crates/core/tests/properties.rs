mod common;

use num_bigint::BigInt;
use proptest::prelude::*;

use common::{contains, engine, leak_patterns, oracle_sum, run};
use verifiable_pcf::bench::build_process;
use verifiable_pcf::domain::{
    aggregate, compute_emissions, sum_emissions, ArithmeticError, EmissionFactor, EmissionQuantity,
    ResourceAmount, Strategy as PcfStrategy,
};
use verifiable_pcf::engine::extract_pcf;
use verifiable_pcf::guests::{
    reference_descriptor, ChainedGuestInput, ComposerGuestInput, ComposerPrivate, GuestInput,
    ProcessPublic, SingleStepGuestInput, SingleStepItem, SingleStepPrivate,
};
use verifiable_pcf::proofsys::{
    commit_private_inputs, verify_bytes, Composition, GuestRole, ProofBackend, Receipt,
    ReceiptVerifier, SimulatedBackend,
};

fn in_range_pairs(max_len: usize) -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((1u64..=1 << 24, 1u64..=1 << 24), 1..=max_len)
}

fn chained_genesis(backend: &SimulatedBackend, id: &str, f: u64, a: u64) -> Receipt {
    let input = GuestInput::Chained(ChainedGuestInput::genesis(
        id,
        EmissionFactor(f),
        ResourceAmount(a),
    ));
    backend
        .prove(&reference_descriptor(GuestRole::ChainedFootprint), &input)
        .unwrap()
}

fn composed_receipt(backend: &SimulatedBackend, pairs: &[(u64, u64)]) -> Receipt {
    let chained = reference_descriptor(GuestRole::ChainedFootprint).image_id();
    let inner = pairs
        .iter()
        .enumerate()
        .map(|(i, &(f, a))| (chained, chained_genesis(backend, &format!("a{i}"), f, a)))
        .collect();
    let input = GuestInput::Composer(ComposerGuestInput {
        private: ComposerPrivate { inner },
        public: ProcessPublic {
            process_id: "p".into(),
        },
    });
    backend
        .prove(&reference_descriptor(GuestRole::Composer), &input)
        .unwrap()
}

proptest! {
    #[test]
    fn emissions_match_bigint_oracle(pairs in prop::collection::vec((any::<u64>(), any::<u64>()), 1..8)) {
        let oracle = oracle_sum(&pairs);
        let computed = pairs
            .iter()
            .map(|&(f, a)| compute_emissions(EmissionFactor(f), ResourceAmount(a)))
            .collect::<Result<Vec<_>, _>>()
            .and_then(sum_emissions);
        let fits_each = pairs.iter().all(|&(f, a)| {
            BigInt::from(f) * BigInt::from(a) <= BigInt::from(i64::MAX)
        });
        let mut partial = BigInt::from(0);
        let mut fits_prefix = true;
        for &(f, a) in &pairs {
            partial += BigInt::from(f) * BigInt::from(a);
            fits_prefix &= partial <= BigInt::from(i64::MAX);
        }
        match computed {
            Ok(q) => prop_assert_eq!(BigInt::from(q.0), oracle),
            Err(e) => {
                prop_assert_eq!(e, ArithmeticError::Overflow);
                prop_assert!(!(fits_each && fits_prefix));
            }
        }
    }

    #[test]
    fn aggregate_is_commutative_and_associative(
        a in 0i64..1 << 60, b in 0i64..1 << 60, c in 0i64..1 << 60,
    ) {
        let (a, b, c) = (EmissionQuantity(a), EmissionQuantity(b), EmissionQuantity(c));
        prop_assert_eq!(aggregate(a, b), aggregate(b, a));
        let left = aggregate(aggregate(a, b).unwrap(), c);
        let right = aggregate(a, aggregate(b, c).unwrap());
        prop_assert_eq!(left, right);
    }

    #[test]
    fn aggregate_rejects_overflow(a in 1i64..=i64::MAX) {
        prop_assert_eq!(
            aggregate(EmissionQuantity(i64::MAX), EmissionQuantity(a)),
            Err(ArithmeticError::Overflow)
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prove_verify_round_trip_all_guests(pairs in in_range_pairs(6), seed in any::<u64>()) {
        let backend = SimulatedBackend::with_seed(seed);
        let chained = reference_descriptor(GuestRole::ChainedFootprint);
        let single = reference_descriptor(GuestRole::SingleStepFootprint);
        let composer = reference_descriptor(GuestRole::Composer);

        let mut prev: Option<Receipt> = None;
        for (i, &(f, a)) in pairs.iter().enumerate() {
            let id = format!("a{i}");
            let input = match prev.take() {
                None => ChainedGuestInput::genesis(&id, EmissionFactor(f), ResourceAmount(a)),
                Some(r) => ChainedGuestInput::linked(
                    &id, EmissionFactor(f), ResourceAmount(a), chained.image_id(), r,
                ),
            };
            let receipt = backend.prove(&chained, &GuestInput::Chained(input)).unwrap();
            let journal = backend.verify(&chained.image_id(), &receipt).unwrap();
            prop_assert_eq!(&journal, &receipt.journal);
            prop_assert!(backend.verify(&single.image_id(), &receipt).is_err());
            prev = Some(receipt);
        }
        let last = prev.unwrap();
        prop_assert_eq!(BigInt::from(last.journal.cumulative_total.0), oracle_sum(&pairs));

        let items = pairs
            .iter()
            .enumerate()
            .map(|(i, &(f, a))| SingleStepItem {
                activity_id: format!("a{i}"),
                factor: EmissionFactor(f),
                amount: ResourceAmount(a),
            })
            .collect();
        let input = GuestInput::SingleStep(SingleStepGuestInput {
            private: SingleStepPrivate { items, external_receipts: vec![] },
            public: ProcessPublic { process_id: "p".into() },
        });
        let receipt = backend.prove(&single, &input).unwrap();
        prop_assert_eq!(backend.verify(&single.image_id(), &receipt).unwrap(), receipt.journal.clone());
        prop_assert_eq!(BigInt::from(receipt.journal.cumulative_total.0), oracle_sum(&pairs));

        let composed = composed_receipt(&backend, &pairs);
        prop_assert!(backend.verify(&composer.image_id(), &composed).is_ok());
        prop_assert_eq!(BigInt::from(composed.journal.cumulative_total.0), oracle_sum(&pairs));

        let json = Receipt::from_json(&composed.to_json()).unwrap();
        prop_assert_eq!(&json, &composed);
        prop_assert_eq!(Receipt::from_bytes(&composed.to_bytes()).unwrap(), composed);
    }

    #[test]
    fn strategies_agree_with_oracle(pairs in in_range_pairs(30), seed in any::<u64>()) {
        let e = engine(seed);
        let oracle = oracle_sum(&pairs);
        for strategy in PcfStrategy::ALL {
            let inst = run(&e, build_process("p", strategy, &pairs));
            let pcf = extract_pcf(&inst).unwrap();
            prop_assert_eq!(BigInt::from(pcf.total.0), oracle.clone(), "{}", strategy);
        }
    }

    #[test]
    fn composed_valid_implies_inner_valid(pairs in in_range_pairs(5), victim in any::<prop::sample::Index>(), bit in 0usize..8) {
        let backend = SimulatedBackend::with_seed(3);
        let composer = reference_descriptor(GuestRole::Composer).image_id();
        let mut receipt = composed_receipt(&backend, &pairs);
        let Composition::ComposedInner { inner } = &mut receipt.composition else {
            panic!("composer emits ComposedInner");
        };
        for r in inner.iter() {
            prop_assert!(backend.verify(&r.image_id, r).is_ok());
        }
        let index = victim.index(inner.len());
        inner[index].journal.cumulative_total.0 ^= 1 << bit;
        prop_assert!(backend.verify(&composer, &receipt).is_err());
    }

    #[test]
    fn distinct_salts_give_distinct_commitments(a in any::<[u8; 16]>(), b in any::<[u8; 16]>(), data in prop::collection::vec(any::<u8>(), 0..64)) {
        prop_assume!(a != b);
        prop_assert_ne!(commit_private_inputs(&a, &data), commit_private_inputs(&b, &data));
    }

    #[test]
    fn canaries_never_reach_receipts(
        factor in (1u64 << 40)..(1u64 << 41),
        amount in (1u64 << 17)..(1u64 << 18),
        seed in any::<u64>(),
    ) {
        let e = engine(seed);
        let pairs = [(factor, amount), (factor ^ 0x5a5a5a, amount ^ 0x3c3c)];
        for strategy in PcfStrategy::ALL {
            let inst = run(&e, build_process("p", strategy, &pairs));
            for (_, value) in inst.variables.iter() {
                for &(f, a) in &pairs {
                    for pattern in leak_patterns(f).iter().chain(&leak_patterns(a)) {
                        prop_assert!(!contains(value, pattern));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_bit_flips_on_large_composed_receipt(offset in any::<prop::sample::Index>(), bit in 0u8..8) {
        let backend = SimulatedBackend::with_seed(11);
        let pairs: Vec<(u64, u64)> = (1..=20).map(|i| (1000 + i, i)).collect();
        let receipt = composed_receipt(&backend, &pairs);
        let composer = reference_descriptor(GuestRole::Composer).image_id();
        let mut bytes = receipt.to_bytes();
        let at = offset.index(bytes.len());
        bytes[at] ^= 1 << bit;
        prop_assert!(verify_bytes(&backend, &composer, &bytes).is_err(), "flip at byte {} accepted", at);
    }
}
