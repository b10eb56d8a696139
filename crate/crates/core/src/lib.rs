//! Two-server secure computation for fairness-constrained logistic
//! classifiers.
//!
//! A modeler and a regulator hold additive secret shares of users'
//! sensitive attributes and jointly train, certify, and verify linear
//! models that satisfy a p%-rule style disparate-impact constraint,
//! without either server ever seeing the attributes in the clear. All
//! secure arithmetic runs over Q16.16 fixed-point values embedded in
//! `Z_{2^64}`, with correlated randomness from a trusted dealer.
//!
//! Module map:
//!
//! * [`fixedpoint`] — ring-embedded fixed-point scalars and matrices,
//! * [`sharing`] — additive shares and the dealer's offline phase,
//! * [`container`] — the FPSH on-disk format for shares and pools,
//! * [`transport`] — framed, deterministic two-party messaging,
//! * [`mpc`] — shared-value operations (openings, Beaver products,
//!   truncation, comparison, the piecewise sigmoid, equality tests),
//! * [`data`] — CSV ingestion, whitening, synthetic data, user-side
//!   share splitting,
//! * [`reference`] — single-process float/fixed trainers and metrics
//!   used to validate the secure path,
//! * [`fairtrain`] — the two-party constrained SGD protocol,
//! * [`attest`] — certification and decision verification.

pub mod container;
pub mod data;
pub mod error;
pub mod fixedpoint;
pub mod mpc;
pub mod sharing;
pub mod transport;

pub use error::{Error, Result};
