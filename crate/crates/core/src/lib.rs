//! Cooperative policy evaluation for decentralized POMDPs.
//!
//! Agents track a shared hidden state from private observations, exchange
//! beliefs and value-function parameters with their graph neighbours, and
//! learn a linear value function with regularized TD(0). The crate provides
//! the centralized, diffusion and centralized-training baselines, the
//! theoretical disagreement constants, and a grid target-tracking scenario.

pub mod analysis;
pub mod evaluation;
pub mod exec;
pub mod filtering;
pub mod gridworld;
pub mod harness;
pub mod model;
pub mod network;
pub mod rng;

pub use exec::Exec;
