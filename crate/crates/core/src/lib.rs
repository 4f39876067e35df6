//! Locally private sharing of per-appliance energy streams.
//!
//! Clients quantize each appliance reading, one-hot encode it, concatenate
//! the blocks and perturb the combined vector with optimized unary encoding
//! under a w-event budget scheduler. The server sums released vectors,
//! estimates per-level counts and ranks appliances by estimated energy.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregator;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod nullable;
pub mod pipeline;
pub mod quantizer;
pub mod randomizer;
pub mod scheduler;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
