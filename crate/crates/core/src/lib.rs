//! Solvers for constrained monotone and negatively comonotone inclusions
//! `0 in F(z) + A(z)`: projected extra anchored gradient (EAG), accelerated
//! forward-backward splitting (AS) and an extragradient baseline, together
//! with numerical checks of their potential-function analyses.

pub mod diagnostics;
pub mod error;
pub mod operators;
pub mod problems;
pub mod residuals;
pub mod solvers;
pub mod types;

pub use error::{Error, Result};
pub use operators::{ConeCertificate, ConvexSet, LipschitzOperator, MaxMonotoneOperator};
pub use problems::{Constraint, ProblemInstance, ProblemSpec};
pub use solvers::{run, StepObserver, StepView};
pub use types::{
    Algorithm, DenseVector, EnvelopeVerdict, IterateRecord, RunReport, SolverConfig, Termination,
};
