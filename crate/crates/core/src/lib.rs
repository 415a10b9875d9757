//! Stochastic optimization of weakly convex losses: projected SGD,
//! AdaGrad-Norm and DP-SGD, Moreau-envelope machinery, and Monte Carlo
//! estimators of algorithmic stability and generalization gaps.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the experiment
//! harness uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod generalization;
pub mod linalg;
pub mod moreau;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod scalar;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use generalization::{GapKind, GapReport, RateFit};
pub use scalar::Scalar;
pub use stability::{Measure, StabilityReport};

pub type Example = problems::Example<f64>;
pub type Dataset = problems::Dataset<f64>;
pub type PopulationPool = problems::PopulationPool<f64>;
pub type Loss = problems::Loss<f64>;
pub type ProblemInstance = problems::ProblemInstance<f64>;
pub type ProblemConstants = problems::ProblemConstants<f64>;
pub type OptimizerConfig = optimizers::OptimizerConfig<f64>;
pub type Trace = optimizers::Trace<f64>;
pub type MoreauConfig = moreau::MoreauConfig<f64>;
pub type MoreauResult = moreau::MoreauResult<f64>;
pub type NeighborPair = stability::NeighborPair<f64>;

pub type Loss32 = problems::Loss<f32>;
pub type Dataset32 = problems::Dataset<f32>;
pub type OptimizerConfig32 = optimizers::OptimizerConfig<f32>;
