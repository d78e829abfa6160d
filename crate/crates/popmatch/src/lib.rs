//! Popular and minimal-envy matchings for the house allocation problem.
//!
//! A *problem* is a set of agents, an at-least-as-large set of houses, and a
//! strict ranking of all houses per agent (having no house is implicitly
//! worst). A *matching* assigns houses to agents injectively, possibly leaving
//! some of either side unmatched. A matching is *popular* if no other matching
//! is preferred by a strict majority of agents, and has *minimal envy* if it
//! lexicographically minimizes the envying agents, then envy among them.
//!
//! The crate provides:
//!
//! - [`problem`]: the data model, preference queries, pairwise comparison and
//!   problem reduction;
//! - [`popularity`]: three independent popularity tests (the first/second
//!   house characterization, the local test over agent triples, and brute
//!   force) plus a blocking-triple constructor;
//! - [`exchange`]: the constructive algorithm that walks from any matching to
//!   a popular one through local popular exchanges, or certifies that none
//!   exists;
//! - [`mem`]: the minimal-envy matching algorithm, the minimal-envy test and
//!   a Pareto-efficiency check;
//! - [`oracle`]: exhaustive ground truth for small instances (all popular /
//!   minimal-envy / most-popular matchings);
//! - [`sim`]: a decentralized random-exchange market simulation;
//! - [`instances`]: text formats for problems and matchings, plus a seeded
//!   random instance generator.

pub mod exchange;
pub mod instances;
pub mod mem;
pub mod oracle;
pub mod popularity;
pub mod problem;
pub mod sim;

pub use problem::{AgentId, HouseClassification, HouseId, Matching, Problem};
