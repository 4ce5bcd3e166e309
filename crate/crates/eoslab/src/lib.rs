//! IO, file formats, experiment drivers, and the CLI for the masked-diffusion
//! lab. All numerics live in `eoslab-core`; this crate only moves data.

pub mod checkpoint;
pub mod cli;
pub mod driver;
pub mod jsonl;
pub mod reports;
pub mod vocabfile;
