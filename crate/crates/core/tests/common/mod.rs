#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use verifiable_pcf::bench::reference_engine;
use verifiable_pcf::domain::ProcessModel;
use verifiable_pcf::engine::{Engine, ProcessInstance, DEFAULT_SIZE_LIMIT};
use verifiable_pcf::proofsys::SimulatedBackend;

/// Arbitrary-precision Σ factor × amount, independent of the crate's
/// fixed-point arithmetic.
pub fn oracle_sum(pairs: &[(u64, u64)]) -> BigInt {
    pairs
        .iter()
        .map(|(f, a)| BigInt::from(*f) * BigInt::from(*a))
        .sum()
}

pub fn engine(seed: u64) -> Engine {
    reference_engine(Arc::new(SimulatedBackend::with_seed(seed)))
}

pub fn run(engine: &Engine, model: ProcessModel) -> ProcessInstance {
    engine
        .run(model, BTreeMap::new(), DEFAULT_SIZE_LIMIT)
        .expect("valid model")
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Byte patterns under which a private value could leak into an artifact.
pub fn leak_patterns(value: u64) -> Vec<Vec<u8>> {
    vec![
        value.to_le_bytes().to_vec(),
        value.to_be_bytes().to_vec(),
        value.to_string().into_bytes(),
        hex::encode(value.to_le_bytes()).into_bytes(),
        hex::encode(value.to_be_bytes()).into_bytes(),
    ]
}
