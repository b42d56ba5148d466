#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod se3;
pub mod filters;
pub mod ehcc;
pub mod interaction;
pub mod hfc;
pub mod sim;
pub mod session;
pub mod stats;
pub mod harness;
pub mod scenarios;
