//! Verifiable carbon-footprinting workflows.
//!
//! A small orchestrator-worker process engine whose activities run guest
//! programs under a pluggable [`proofsys::ProofBackend`], passing receipts
//! between activities as process variables. Three proving strategies are
//! supported (single-step, composed, chained), plus a certification-agency
//! setup phase, a benchmark harness and a two-party supply-chain scenario.

pub mod agency;
pub mod bench;
pub mod codec;
pub mod domain;
pub mod engine;
pub mod guests;
pub mod proofsys;
pub mod scenario;
