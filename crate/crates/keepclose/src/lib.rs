//! Worst-case tracking-error certification for neural-network controlled
//! systems.
//!
//! The crate bounds how far an uncertain plant in feedback with a trained
//! neural-network controller can deviate from an ideal linear closed-loop
//! reference model. Deviation is measured by two metrics over the joint
//! output energy:
//!
//! * RISE — relative integral square error, an L2-to-L2 worst-case gain,
//! * SSE — supreme square error, an L2-to-Linf worst-case gain.
//!
//! Certification works on the error system between the two closed loops.
//! The controller difference is linearized exactly through the differential
//! mean value theorem, enclosing the network Jacobian over an operating box
//! and enumerating the vertices of the enclosure. Plant nonlinearities and
//! the residual training error are characterized by hard integral quadratic
//! constraints, and a dissipation certificate (a semidefinite feasibility
//! problem over a shared storage matrix) yields the certified level.
//!
//! Two executable fixtures ship with the crate: a single-link robot arm
//! (scalar output) and a powered planetary lander with polynomial guidance
//! (multiple outputs). Both pair every certificate with closed-loop
//! nonlinear simulation so certified levels can be checked against
//! empirical metrics.
//!
//! Entry points:
//! * [`scenarios`] — the bundled fixtures and their constants,
//! * [`certify`] — certificate search (bisection and direct modes),
//! * [`simkit`] — fixed-step closed-loop simulation and empirical metrics,
//! * the `keepclose` binary — `certify`, `simulate`, `validate` commands.

pub mod certify;
pub mod errorsys;
pub mod iqclib;
pub mod lmi;
pub mod nncontroller;
pub mod scenarios;
pub mod simkit;
pub mod sysmodels;

pub use certify::{Certificate, Metric, TubeBound};
pub use errorsys::{ControllerErrorGain, DeltaRouting, ErrorSystem, ExtendedSystem};
pub use iqclib::{IqcFactor, UncertaintyClass};
pub use lmi::{Feasibility, LmiProblem, Witness};
pub use nncontroller::{Activation, EpsilonBound, IntervalMatrix, MlpController};
pub use simkit::Trajectory;
pub use sysmodels::{LpvParameterBox, SignalNorms, StateSpace};
