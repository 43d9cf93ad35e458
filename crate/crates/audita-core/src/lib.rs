//! Core library for audita: a toolkit that measures how auditable an agent
//! execution is from the records it left behind.
//!
//! The library is organized around a ground-truth execution model paired with
//! partial audit records ([`trace`]), ten auditability metrics over that pair
//! ([`metrics`]), a three-valued structural policy engine ([`policy`]),
//! tamper-evident evidence logs on a four-level integrity ladder
//! ([`evidence`]), the thresholded auditability predicate with verdicts and
//! disclosure cards ([`auditability`]), and a synthetic trace generator with
//! degradation operators ([`lab`]).
//!
//! Everything here is a pure function over immutable values; the only stateful
//! object is [`evidence::EvidenceLog`], which is single-writer by ownership.

pub mod auditability;
pub mod canonical;
pub mod evidence;
pub mod formats;
pub mod lab;
pub mod metrics;
pub mod policy;
pub mod rational;
pub mod trace;

#[cfg(test)]
pub(crate) mod testutil;
