//! Core engine for a desk-scale masked-diffusion language modeling lab.
//!
//! Everything in this crate is `no_std + alloc` and deterministic: synthetic
//! task corpora with exact oracles, a closed-vocabulary tokenizer, a small
//! bidirectional transformer with analytic gradients, the masked-diffusion
//! training objective, the confidence-based remasking decoder, an
//! activation-patching harness, and task scoring. IO, file formats, and the
//! CLI live in the companion `eoslab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod decode;
pub mod diffusion;
pub mod evalmetrics;
pub mod net;
pub mod patchbench;
pub mod rng;
pub mod tensor;
pub mod textcodec;

pub use corpus::{TaskInstance, TaskKind};
pub use textcodec::{TokenSeq, Vocab, EOS_ID, BOS_ID, MASK_ID, SEP_ID};
