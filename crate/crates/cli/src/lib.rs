//! Command-line front end for basket-trial fits and simulation studies.

pub mod commands;
pub mod config;
pub mod plot;
