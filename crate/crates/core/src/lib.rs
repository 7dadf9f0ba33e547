//! Hyperparameter optimization for models built from several subnetworks.
//!
//! The crate provides grouped configuration spaces ([`space`]), a TPE
//! sampler with a focal variant that restricts groups to previously trained
//! assignments ([`tpe`]), the baseline, divide-and-conquer and
//! subnetwork-adaptive schedulers ([`sched`]), a seeded surrogate objective
//! with a transfer-aware cost model ([`surrogate`]) and regret/speedup
//! reporting ([`metrics`]).

pub mod metrics;
pub mod sched;
pub mod space;
pub mod surrogate;
pub mod tpe;
