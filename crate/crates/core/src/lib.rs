//! Two-stage global sensitivity analysis for expensive simulation models.
//!
//! A campaign usually runs Morris elementary-effects screening over the full
//! factor set ([`design::generate_morris_design`], [`effects`]), keeps the
//! influential factors, and then estimates Sobol indices on the reduced set
//! from a Saltelli design ([`design::generate_saltelli_design`], [`indices`]).
//! Models are evaluated by [`runner`], which persists results and can resume
//! interrupted campaigns. [`pipeline::staged_analysis`] chains all stages.

pub mod demo;
pub mod design;
pub mod effects;
pub mod error;
pub mod evaluation;
pub mod factors;
pub mod indices;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod sobol;

pub use error::{Error, Result};
