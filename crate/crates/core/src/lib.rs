//! SEAndroid policy normalization and customization analysis.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`parse`] turns CIL, flat (setools-style) rule text, TE comment blocks
//!    and Android context/init files into a [`policy::PolicyDb`] and
//!    auxiliary tables.
//! 2. [`atomic`] expands rules into atomic four-tuples, infers extra allow
//!    atomics from negated attribute sets, and diffs a device policy against
//!    a reference.
//! 3. [`uid`], [`nlp`] and [`features`] derive per-rule features: attribute
//!    flags, a static privilege bucket for each domain, and paragraph vectors
//!    of keyword triplets mined from policy comments.
//! 4. [`model`] trains a joint wide (sparse linear) and deep (embedding +
//!    four hidden layers) classifier on the reference policy and flags
//!    customized allow rules it predicts as neverallow. [`report`] tags the
//!    findings and aggregates corpus statistics.
//!
//! [`synth`] generates a planted synthetic corpus for end-to-end testing.

pub mod atomic;
pub mod data;
pub mod error;
pub mod features;
pub mod model;
pub mod nlp;
pub mod parse;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod synth;
pub mod uid;

pub use error::{Error, Result};
