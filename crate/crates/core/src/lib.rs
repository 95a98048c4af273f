//! Publicness-specific recommendation mechanisms for Bayesian congestion games.
//!
//! A planner observes the network state and privately recommends a mixed
//! routing policy to each of `K` traveler groups. This crate builds and solves
//! the planner's optimal-mechanism linear program over a discretized policy
//! simplex, checks obedience of arbitrary recommendation rules (nonatomic and
//! weighted-atomic), evaluates the bounded-partition-disparity test, the
//! accumulated-cost-loss test, and runs the atomic-to-nonatomic convergence
//! experiment.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod acl;
pub mod atomic;
pub mod bpd;
pub mod cli;
pub mod corpus;
pub mod costs;
pub mod error;
pub mod lp;
pub mod mechanism;
pub mod model;
pub mod obedience;
pub mod planner;
pub mod policy;
mod util;

pub use error::{Error, Result};
pub use mechanism::{RecommendationRule, RuleAtom, Scenario};
pub use model::{CostModel, EdgeLoadProfile, FlowProfile, Network, Objective};
pub use policy::{AtomicPublicness, PartitionProfile, Policy, PolicyGrid};

/// Default obedience tolerance in absolute cost units.
pub const DEFAULT_EPS: f64 = 1e-7;
