//! Thermal-storage reserve scheduling for building cooling.
//!
//! A first-order room model is driven by a piecewise-constant cooling
//! control. On top of it sit three optimization problems: the cheapest
//! overnight schedule (reference), an alternative schedule that sells
//! decremental reserve capacity, and a delivery schedule that honours
//! reserve instructions.

pub mod cli;
pub mod constraints;
pub mod error;
pub mod problems;
pub mod profiles;
pub mod solver;
pub mod thermal;

pub use error::{Error, Result};
