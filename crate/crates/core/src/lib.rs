//! Multimodal growth-and-development assessment engine.
//!
//! Pipeline: bone-age regression from hand X-rays ([`boneage`]), fusion of
//! bone age, age and hormone level into case embeddings ([`fusion`]),
//! in-context exemplar selection and ordering ([`icl`]), training of the
//! classification head ([`training`]), and prompt-based advice generation
//! against a pluggable completion backend ([`advisor`]).

pub mod advisor;
pub mod boneage;
pub mod casedata;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod icl;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
