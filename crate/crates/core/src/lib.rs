//! Quality assessment of bicycle infrastructure network data.

pub mod compare;
pub mod config;
pub mod error;
pub mod graph;
pub mod grid;
pub mod geom;
pub mod index;
pub mod ingest;
pub mod matching;
pub mod pipeline;
pub mod report;
pub mod runlog;
pub mod tags;
pub mod topology;

pub use error::{Error, Result};
