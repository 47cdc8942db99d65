//! Files, adapters, reports and the `winoprobe` command line on top of
//! [`winoprobe_core`].

pub mod adapter;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod lexicon;
pub mod pipeline;
pub mod pmi_file;
pub mod report;
pub mod scores;

pub use error::{Error, ExitStatus};
