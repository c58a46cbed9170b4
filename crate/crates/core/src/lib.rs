// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod energy;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod fekete;
pub mod field;
pub mod io;
pub mod ldp;
pub mod measure;
pub mod mop;
pub mod quadrature;
pub mod system;

pub use error::{Error, Result};
