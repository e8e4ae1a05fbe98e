//! Evolutionary search over generator latent spaces, guided by embedding
//! similarity to a target and, optionally, a discriminator's realness loss.
//!
//! The pieces:
//! - [`space`]: mixed boolean/real/integer latent spaces and genetic operators;
//! - [`engine`]: NSGA-II (and its single-objective degenerate case);
//! - [`objectives`]: cosine similarity, discriminator loss, direction handling;
//! - [`oracle`]: the evaluation boundary to model processes, plus synthetic oracles;
//! - [`cli`]: run configuration, manifests and the `glass` command line.

pub mod engine;
pub mod objectives;
pub mod space;
pub mod oracle;
pub mod cli;
