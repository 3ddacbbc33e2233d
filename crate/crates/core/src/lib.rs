//! Multi-level order-flow imbalance (MLOFI) and linear price-impact fits.
//!
//! The pipeline replays LOBSTER-style event streams through [`book`], turns
//! each event into per-level flow deltas ([`imbalance`]), aggregates them on a
//! two-level calendar grid ([`sampling`]) and fits OLS and Ridge models
//! ([`inference`]) whose goodness of fit is assessed in [`evaluation`].
//! [`synth`] generates reproducible synthetic markets for testing.

pub mod book;
pub mod cv;
pub mod lobster;
pub mod imbalance;
pub mod sampling;
pub mod inference;
pub mod evaluation;
pub mod synth;
