//! Zero-shot instance navigation in a procedural gridworld.
//!
//! A synthetic embedding space stands in for a frozen vision-language
//! encoder. Agents are pretrained on image-goal navigation with
//! entropy-selected goal views and a pitch-relaxed reward, then evaluated
//! zero-shot on text goals, optionally expanded by retrieval over a support
//! set of training goal embeddings.

pub mod agent;
pub mod config;
pub mod env;
pub mod episodes;
pub mod error;
pub mod infer;
pub mod io;
pub mod math;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod reward;
pub mod seed;
pub mod semspace;
pub mod train;
pub mod world;

pub use error::{Error, Result};
