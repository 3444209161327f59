//! Causal sample construction, social visual prompting, coarse-to-fine
//! forecasting and evaluation for online multi-party social interaction tasks.

pub mod dataset;
pub mod forecast;
pub mod inference;
pub mod io;
pub mod model;
pub mod prompt;
pub mod visual;
pub mod synthetic;
pub mod eval;
pub mod cli;
