//! Classical and quantum simulation of the atomic modulated pendulum
//! `H = p^2/2 - gamma (1 + eps cos t) cos x`: chaos-assisted tunneling
//! between regular islands, Floquet spectra, Landau-Zener extraction of
//! splittings and their statistics.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod error;
pub mod floquet;
pub mod protocols;
pub mod stats;
pub mod twolevel;
pub mod units;

pub use error::{Error, Result};
