//! Stabilization of a nonautonomous parabolic equation under a known input
//! delay: finite-rank indicator actuators and sensors, a Luenberger observer,
//! and a time-`tau` predictor, all on P1 finite elements over the unit square.
//! Also hosts the scalar delayed-feedback analysis that motivates the
//! predictor.

// `!(x > 0.0)` guards are meant to reject NaN too; index loops mirror the
// matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod delay;
pub mod engine;
pub mod error;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod observer;
pub mod predictor;
pub mod sensing;
pub mod sparse;
pub mod stepping;

pub use delay::{
    classify, solve_dde, spectral_demo, tau_hat, DdeParams, SpectralParams, Stability, Trajectory,
};
pub use engine::{
    fit_decay_rate, plateau_level, run, Coefficients, Mode, QuadraticField, ScenarioConfig,
    SimulationTrace, TraceRow,
};
pub use error::{Error, Result};
pub use fem::{CoefficientField, FieldVector, SemidiscreteOperators};
pub use io::{parse_config, write_trace_csv, DdeRun, ParsedConfig, RunManifest};
pub use mesh::{RegionFamily, RegionRole, TriMesh};
pub use sensing::{ActuatorArray, SensorArray};
