//! File formats, HTTP service and command-line front end for the hybrid
//! slang-aware chatbot built on `slangbot-core`.

pub mod cli;
pub mod commands;
pub mod compare;
pub mod config;
pub mod corpus_io;
pub mod engine;
pub mod error;
pub mod kb_io;
pub mod model_io;
pub mod service;

pub use engine::{Engine, SystemClock};
pub use error::{Error, Result};
