//! Fixed-point iteration schedules for maximum-likelihood estimation with
//! missing data: EM, ECM and parameter-expanded EM (PX-EM) over pluggable
//! complete-data models.
//!
//! Two models ship with the crate:
//!
//! * [`toy`] — a single-observation Poisson-Binomial mixed-effects model with
//!   closed-form steps, a one-step PX-EM update, expanded-likelihood surface
//!   evaluation and an efficient-data-augmentation construction;
//! * [`robit`] — binary regression with a Student-t link, fit by EM over
//!   latent (precision, propensity) pairs, with a scale-expanded PX variant.
//!
//! The [`engine`] module drives any [`engine::EmModel`] through the three
//! schedules, records per-iteration traces and computes convergence-rate
//! diagnostics. [`special`] holds the self-contained Student-t machinery.

pub mod dataset;
pub mod engine;
mod error;
pub mod robit;
pub mod special;
pub mod toy;

pub use error::{Error, Result};
