//! Call-graph recovery for x86-64 binaries.
//!
//! The library matches indirect callsites to candidate callees in four
//! stages: parse a normalized disassembly into a program model
//! ([`ingest`]), extract argument/return/global/control-flow slices around
//! callsites and callees ([`slicer`]), rewrite open-set assembly tokens
//! into a closed vocabulary and embed them ([`symbolizer`], [`embedder`]),
//! and score callsite-callee pairs with a pseudo-Siamese network trained
//! under a contrastive loss ([`matcher`]). [`pipeline`] wires the stages
//! into pretrain/fine-tune runs with split-by-binary evaluation, and
//! [`corpus`] generates synthetic binaries with complete ground truth for
//! desk-scale experiments.
//!
//! Data-parallel fan-out (slicing, embedding, batch inference) runs on
//! rayon when the `parallel` feature is enabled (default) and falls back
//! to sequential iteration otherwise.

pub mod corpus;
pub mod embedder;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod matcher;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod slicer;
pub mod symbolizer;
pub mod x86;

pub use error::{CgError, Result};
