pub mod claims;
pub mod config;
pub mod error;
pub mod estimates;
pub mod exponent;
pub mod expr;
pub mod grid;
pub mod linear;
pub mod measure;
pub mod operator;
pub mod par;
pub mod quadrature;
pub mod runner;
pub mod serde_ext;
pub mod singular;
pub mod truncation;

pub use error::{Error, Result};
