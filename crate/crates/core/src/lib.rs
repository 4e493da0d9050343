//! Interaction-aware spatio-temporal speed planning along a merge path, with
//! baseline planners, a closed-loop simulator and experiment tooling.

pub mod baselines;
pub mod config;
pub mod corpus;
pub mod experiment;
pub mod frenet;
pub mod geometry;
pub mod interaction;
pub mod plot;
pub mod prediction;
pub mod scenario;
pub mod simloop;
pub mod stsearch;
pub mod types;

pub use config::PlannerConfig;
pub use types::{AvState, PoseState, Shape};
