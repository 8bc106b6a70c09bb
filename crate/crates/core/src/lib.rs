#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod controller;
pub mod designer;
pub mod error;
pub mod evaluator;
pub mod harness;
pub mod pomdp;
pub mod rng;
pub mod toyworld;

pub use error::{Error, Result};
