//! File formats, datasets, fixtures and the `tent` command line on top of
//! [`tent_core`].

pub mod bitpack;
pub mod blob;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod manifest;
pub mod qmodel;

pub use error::{Error, Result};
