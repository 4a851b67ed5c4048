//! Deterministic simulation of multi-agent partial-order plan execution
//! mediated by contract state machines on a hash-chained ledger.

pub mod agents;
pub mod contracts;
pub mod harness;
pub mod ledger;
pub mod plan;
pub mod world;
