//! Core library for mapping aid project records to SDG labels and
//! downstream budget analysis.

pub mod attention;
pub mod autodiff;
pub mod corpus;
pub mod country;
pub mod decision;
pub mod data;
pub mod encoder;
pub mod error;
pub mod finance;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod semantics;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
