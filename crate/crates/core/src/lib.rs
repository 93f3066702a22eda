//! Bayesian information theory over finite spaces, plus the probing
//! pipeline built on top of it.
//!
//! * [`info`] exact Shannon, belief and Bayesian quantities in bits.
//! * [`agents`] conjugate and enumerated Bayesian agents.
//! * [`theorems`] executable constructions checking the theory numerically.
//! * [`probe`] MLP probe agents, learning curves and Pareto envelopes.
//! * [`data`] CoNLL-U, the BMIE embedding format and synthetic datasets.

pub mod agents;
pub mod data;
pub mod error;
pub mod info;
pub mod numerics;
pub mod probe;
pub mod theorems;

pub use error::{Error, Result};
pub use info::{ConditionalBelief, FiniteDistribution, JointDistribution};
