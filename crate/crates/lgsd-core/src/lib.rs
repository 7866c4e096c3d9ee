//! Language-guided skill discovery at desk scale.
//!
//! A skill-conditioned policy is trained without task rewards: a describer
//! turns states into short sentences, a text embedder turns sentences into
//! vectors, and the cosine distance between those vectors (`d_lang`) bounds
//! how far a learned representation `phi` may move per transition. The policy
//! maximizes traveled distance in the `phi` space along a sampled skill
//! direction, so different skills visit states with different descriptions.
//! Trained skills can be recalled zero-shot from a natural-language goal via
//! a separate inference network `psi`.

pub mod checkpoint;
pub mod config;
pub mod describer;
pub mod embed;
pub mod env;
pub mod error;
pub mod eval;
pub mod metric;
pub mod nn;
pub mod ppo;
pub mod skill;
pub mod suites;
pub mod trainer;

pub use config::RunConfig;
pub use error::{Error, Result};
