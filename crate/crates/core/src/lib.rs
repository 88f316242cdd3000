pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod image;
pub mod operators;
pub mod pgm;
pub mod risk;
pub mod shrinkage;
pub mod solvers;
pub mod tuning;

pub use dictionary::{HaarFrame, WeightMatrix};
pub use error::{Error, Result};
pub use image::{isnr, mse, psnr, CoefficientVector, Image};
pub use operators::{BlurKernel, ConditionReport, DegradationOperator};
pub use risk::RiskReport;
pub use shrinkage::Penalty;
pub use solvers::{Algorithm, Observation, Probe, Solver, SolverConfig, SolverState, StepSize};
pub use tuning::{Criterion, TuningConfig, TuningContext, TuningResult};
