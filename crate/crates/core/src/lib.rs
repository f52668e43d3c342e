//! Simulation and adaptive voltage control of a double-wound induction generator.
//!
//! * [`machine`]: nonlinear seventh-order dq0 plant, RK4 stepping and a
//!   steady-state solver.
//! * [`sysid`]: reduced ARX model and recursive least squares with forgetting.
//! * [`control`]: penalized minimum-variance law and the dither source.
//! * [`experiment`]: open/closed-loop scenarios, metrics and tuning sweeps.
//! * [`config`], [`io`], [`cli`]: file formats and the `dwig` command.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod io;
pub mod machine;
pub mod ode;
pub mod sysid;

pub use error::{Error, Result};
