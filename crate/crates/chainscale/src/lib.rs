//! Scenario configuration, simulation, reports and parameter sweeps on top
//! of `chainscale-core`.

// Negated float comparisons are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod sim;
pub mod sweep;
pub mod traffic;
