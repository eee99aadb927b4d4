//! Coefficient-level quantum stochastic calculus.
//!
//! Itô and Stratonovich coefficient blocks with a complex gauge parameter,
//! Hudson–Parthasarathy unitarity, Evans–Hudson flow generators, a toy-Fock
//! slot simulator and a classical colored-noise experiment.

pub mod cli;
pub mod coeff_file;
pub mod coeffs;
pub mod config;
pub mod flow;
pub mod itoalg;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod toyfock;
pub mod wongzakai;
