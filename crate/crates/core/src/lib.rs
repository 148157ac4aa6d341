//! Constructive Barron-class approximation by shallow networks, parameter
//! coverings of bounded network families, concatenated and cascaded
//! reservoirs, and numerical checks of the associated error bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barron;
pub mod composite;
pub mod covering;
pub mod diagnostics;
pub mod domain;
pub mod dynsys;
pub mod error;
pub mod fnn;
pub mod harness;
pub mod quad;
pub mod rng;

pub use barron::{approximate_relu, approximate_sigmoid, BarronTarget, FourierAtom, MuSample};
pub use composite::{CascadeReservoir, ConcatenatedReservoir};
pub use covering::{CoverIndex, CoveringSpec};
pub use domain::{DomainSpec, EvalGrid, NormDegree};
pub use dynsys::{approximate_system, filter_distance, run_filter, InputSampler, StateMap, TargetSystem};
pub use error::{Error, Result};
pub use fnn::{delta_sigmoid, internal_error_bound, Activation, Flavor, FnnFamily, ScalarFnn, SigmoidSpec, VectorFnn};
pub use harness::{run_experiment, Config, ExperimentKind, Table};
