//! Max-Weight scheduling on switched multi-hop networks.
//!
//! The crate covers four layers that build on each other:
//!
//! * [`netmodel`]: network instances, the (weighted) Max-Weight scheduler, the
//!   one-slot evolution rule and the weighted-to-plain reduction.
//! * [`arrivals`]: seeded arrival generators and the partial-sum deviation
//!   statistic that drives every distance bound.
//! * [`geometry`] and [`fluid`]: least-norm points, half-space projections,
//!   phase-one simplex, and an exact event-driven integrator for the
//!   piecewise-linear fluid model seen as a subgradient flow.
//! * [`experiments`]: Monte Carlo harnesses for fluid-limit sensitivity and
//!   state space collapse, including the bursty converse construction.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example <name>`.
//! The `mwlab` binary is a thin front end over [`cli`].

// `!(x <= y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fluid;
pub mod geometry;
pub mod linalg;
pub mod netmodel;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use netmodel::{Network, QueueState, ScheduleDecision};
