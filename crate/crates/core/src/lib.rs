//! Core of the slang-aware hybrid chatbot.
//!
//! Everything here is `no_std` + `alloc`: corpus handling, the hashed n-gram
//! intent classifier, evaluation metrics, the retrieval knowledge base and the
//! per-turn dialogue router. File formats, persistence, the HTTP service and
//! the command line live in the `slangbot` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod text;
pub mod classifier;
pub mod features;
pub mod metrics;
pub mod rag;
pub mod router;
