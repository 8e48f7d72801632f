//! File formats, checkpoints, ablation sweeps and the command-line front end
//! for [`hpc_core`].

pub mod ablation;
pub mod checkpoint;
pub mod cli;
pub mod colormap;
pub mod config;
pub mod error;
pub mod ply;
pub mod tables;

pub use error::{Error, Result};
