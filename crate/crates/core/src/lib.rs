//! Simulation of stochastic differential equations with Markovian switching.
//!
//! The crate provides exact simulation of the switching chain, a coupled
//! noise construction shared by every scheme and step size, the
//! drift-randomized Milstein scheme with its half-order variants, and a
//! strong-error benchmark harness.
//!
//! ```no_run
//! use sdewms::{experiment::{run_experiment, ExperimentConfig}, models::{make_builtin, BuiltinModel}, schemes::SchemeKind};
//!
//! let mut cfg = ExperimentConfig::new(make_builtin(BuiltinModel::Ex1));
//! cfg.schemes = vec![SchemeKind::RandMilstein, SchemeKind::Euler];
//! cfg.level_min = 5;
//! cfg.level_max = 10;
//! cfg.level_ref = 13;
//! cfg.n_paths = 1000;
//! let table = run_experiment(&cfg).unwrap();
//! for (scheme, order) in table.orders() {
//!     println!("{scheme}: {order:?}");
//! }
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod models;
pub mod noise;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};
