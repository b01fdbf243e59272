//! Simulation and Monte Carlo verification for the complex branching random
//! walk on the binary tree.
//!
//! A tree is a pure function of a [`rng::TreeKey`]: every node value can be
//! regenerated independently, which lets the breadth-first
//! ([`cascade::LevelState`]) and depth-first ([`cascade::StreamCursor`])
//! traversals produce the same leaves bit for bit.

// Guards like `!(x >= 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod measure;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod stats;
pub mod summation;
pub mod walk;
pub mod weights;

pub use cascade::{simulate, CascadeConfig, LevelState, Mode, StreamCursor};
pub use error::{Error, Result};
pub use measure::PartialSumProcess;
pub use parallel::Runner;
pub use report::{Estimate, EstimateReport, Report};
pub use rng::TreeKey;
pub use weights::{classify_phase, ModelParams, Phase};
