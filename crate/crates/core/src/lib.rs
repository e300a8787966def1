//! MS-NOMA simulator: positioning and communication signals sharing one
//! band, DLL ranging accuracy, least-squares geometry, random scenarios and
//! the joint positioning power allocator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocator;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod geometry;
pub mod mathkit;
pub mod ranging;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
pub use exec::Exec;
