#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod contrastive;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod lingauss;
pub mod report;
pub mod selection;
pub mod verify;
pub mod rng;

pub use error::{Error, Result};
