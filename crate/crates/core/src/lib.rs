//! Divide-and-conquer multi-objective channel pruning planner.
//!
//! A network is split into sub-networks; each is searched independently for
//! a Pareto front of (parameters, error) codings, and the fronts are merged
//! into one network-wide scheme by greedily applying the codings with the
//! smallest relative performance impairment first.

pub mod arch;
pub mod eval;
pub mod exec;
pub mod fsio;
pub mod gpir;
pub mod moo;
pub mod pipeline;
pub mod rng;
pub mod space;
