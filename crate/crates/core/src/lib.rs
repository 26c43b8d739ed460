//! Stress-testing group-fair classifiers against under-representation and
//! label bias in the training data.
//!
//! The crate covers the data model ([`dataset`], [`preprocess`]), bias
//! injection ([`bias`]), an exact synthetic model ([`synthetic`]),
//! metrics, a small classifier zoo, the audit harness, numerical checks of
//! the recovery and reweighing guarantees ([`theory`]), and report
//! emitters.

pub mod audit;
pub mod bias;
pub mod classifiers;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod preprocess;
pub mod report;
pub mod synthetic;
pub mod theory;

pub use error::{Error, Result};
