//! Learned parent-set marginalizers for Bayesian structure learning.
//!
//! Each node of a Bayesian network gets an unnormalized probabilistic
//! circuit trained to reproduce its log local score over parent-indicator
//! vectors. Because the circuit is smooth and decomposable, any
//! marginal/zero query over the indicators is answered exactly in one
//! forward pass. An exact dynamic-programming marginalizer over a candidate
//! set serves as teacher and baseline, and a small order-MCMC harness
//! consumes either backend.

pub mod bge;
pub mod circuit;
pub mod dp;
pub mod error;
pub mod harness;
pub mod logspace;
pub mod pattern;
pub mod synthesis;
pub mod trainer;

pub use error::{Error, Result};
pub use pattern::{QueryPattern, State};
