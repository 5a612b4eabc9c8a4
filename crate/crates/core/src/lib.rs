//! Desk-scale simulator of federated contrastive learning under backdoor
//! attacks and server-side defenses.
//!
//! The crate is organized bottom-up:
//!
//! * [`numcore`] — flat parameter vectors, deterministic RNG streams, and the
//!   small amount of linear algebra everything else is built on.
//! * [`data`] — synthetic image datasets, trigger embedding, augmentation,
//!   on-disk format, and client partitioning.
//! * [`contrastive`] — encoder/projector networks, the InfoNCE objective with
//!   analytic gradients, and benign local training.
//! * [`attack`] — feature-similarity backdoor losses, malicious local
//!   training, and attacker target rosters.
//! * [`defense`] — FoolsGold and clip-and-noise robust aggregation rules.
//! * [`eval`] — weighted-KNN monitoring, linear probes, attack success rate,
//!   and cosine-similarity CDF diagnostics.
//! * [`federation`] — client selection, aggregation, and the round loop that
//!   ties the pieces together.
//!
//! All randomness flows through [`numcore::RngStream`], so a full experiment
//! is bitwise reproducible from a single seed regardless of thread count.

pub mod attack;
pub mod contrastive;
pub mod data;
pub mod defense;
pub mod error;
pub mod eval;
pub mod federation;
pub mod numcore;

pub use error::{Error, Result};
