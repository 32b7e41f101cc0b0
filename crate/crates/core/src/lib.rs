//! Online learning under temporal domain shift.
//!
//! Trainers deploy `theta_t`, observe the round-`t` data, then fit `theta_{t+1}` by descending on a
//! gradient generator: the averaged recent gradients (batch update), a pre-specified forecast
//! (meta gradient descent), or a learned forecast of the next round's gradient (future gradient
//! descent, linear or attention-based). Every run writes a ledger from which local regret,
//! gradient variation, generator error and the associated bounds are computed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod generators;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod stream;
pub mod trainers;

pub use error::{Error, Result};
