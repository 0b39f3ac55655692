//! Helpers shared by integration tests and the acceptance suite.

#![allow(dead_code)]

pub mod dataset;
pub mod eval;
pub mod losses;
