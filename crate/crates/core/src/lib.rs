//! Synthesis and verification of bounded Neumann boundary controls that drive
//! a vibrating membrane on a disk or ellipse to rest.

pub mod cli;
pub mod domain;
pub mod error;
pub mod fields;
pub mod freespace;
pub mod quad;
pub mod solver;
pub mod synthesis;

pub use error::{Error, Result};
