#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fock;
pub mod model;
pub mod solver;
pub mod chd;
pub mod spectra;
pub mod sensors;
pub mod config;
pub mod output;
pub mod runner;
