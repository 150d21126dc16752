//! Deterministic simulation of cloud/fog/device controller-worker programs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod cli;
pub mod dsl;
pub mod experiments;
pub mod runtime;
pub mod topology;
