//! Core library for active mapping experiments: occupancy-grid beliefs, the
//! disaster-mapping gridworld, baseline exploration policies, and a small
//! from-scratch actor-critic with its training loop.

pub mod belief;
pub mod env;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod train;
