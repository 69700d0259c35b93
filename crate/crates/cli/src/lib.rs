//! Experiment runner for the regional-variance filters: scenario
//! simulation, Monte-Carlo filter runs with per-region statistics, the
//! oracle self-check and the complexity benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod experiments;
pub mod oracle_check;
pub mod output;
