// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod awareness;
pub mod broker;
pub mod cloud;
pub mod config;
pub mod controller;
pub mod experiment;
pub mod goals;
pub mod kernel;
pub mod metrics;
pub mod mode;
pub mod report;
pub mod sim;
pub mod workload;
