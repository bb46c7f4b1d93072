//! Partition-based asynchronous ADMM for non-convex coupled problems.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod io;
pub mod kernel;
pub mod opf;
pub mod problem;
pub mod runner;
pub mod solver;
