//! Heisenberg-picture engine for a continuous-variable one-way gate sequence:
//! a six-mode linear cluster, a measurement-based squeezing gate cascaded into
//! a controlled-Z gate, and the figures of merit used to characterise it.

pub mod cluster;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod montecarlo;
pub mod optics;
pub mod report;
pub mod scenarios;
pub mod sequence;
pub mod units;

pub use error::{Error, Result};
pub use gaussian::{
    Basis, BasisId, BasisKind, BasisMode, CovarianceMatrix, GaussianState, ModeQuads, Observable,
    QuadExpr, Quadrature,
};
pub use optics::{BeamSplitterSpec, BsSign, Channel, ImperfectionSpec, SymplecticOp};
pub use report::{Cell, Check, Report, SCHEMA_VERSION};
pub use scenarios::{Scenario, ScenarioConfig};
pub use sequence::{
    angle_for_squeezing, run_sequence, Ancilla, InputSpec, MeasurementAngles, SequenceConfig,
    SequenceOutput,
};
