//! Random feature solvers for stationary multiscale radiative transfer.
//!
//! Two discretizations share one pipeline:
//!
//! * the vanilla random feature method, which fits `f(x, v)` directly, and
//! * the asymptotic-preserving variant, which fits the micro-macro pair
//!   `(rho(x), g(x, v))` with `f = rho + eps g` and stays accurate as `eps -> 0`.
//!
//! The pipeline is `catalog -> models -> collocation -> assemble -> rescale -> lstsq
//! -> reconstruct -> error`; [`experiment::run`] drives it end to end.
//!
//! All numerical code is generic over [`Real`]; the `*64` aliases fix `f64`.

pub mod assemble;
pub mod basis;
pub mod collocation;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod quadrature;
pub mod reference;
pub mod scalar;
pub mod solve;

pub use assemble::{
    assemble_aprfm, assemble_rfm, reconstruct_f, rescale_rows, AssembleOptions, LinearSystem,
    RowKind,
};
pub use basis::{Activation, BoxPartition, FeatureModel, FeatureWeights, Hyperbox, PouKind};
pub use collocation::{BoundaryPoint, CollocationSet, PhasePoint};
pub use error::{Error, Result};
pub use experiment::{Method, RunConfig, RunReport};
pub use problems::{catalog, ProblemId, ProblemSpec};
pub use quadrature::AngularRule;
pub use reference::GridField;
pub use scalar::Real;
pub use solve::{lstsq, SolveOptions, SolveReport};

pub type FeatureModel64 = FeatureModel<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type LinearSystem64 = LinearSystem<f64>;
pub type CollocationSet64 = CollocationSet<f64>;
pub type AngularRule64 = AngularRule<f64>;
pub type SolveReport64 = SolveReport<f64>;
pub type GridField64 = GridField<f64>;
