//! Content-aware embeddings for heterogeneous networks.
//!
//! A typed graph ([`graph`]) is turned into walk-sampled training triplets
//! ([`walk`]); node vectors are learned jointly with a GRU text encoder
//! ([`text`], [`train`]). Nodes that arrive later get vectors without
//! retraining ([`online`]), and [`eval`] implements the ranking and
//! classification protocols used to judge the result. [`synth`] builds
//! planted-community fixtures.

pub mod eval;
pub mod graph;
pub mod online;
pub mod seed;
pub mod synth;
pub mod text;
pub mod train;
pub mod walk;

pub use graph::{GraphError, GraphSchema, HetGraph, NodeId, NodeType, RelationType};
pub use online::{FrozenModel, OnlineConfig, OnlineError, OnlineUpdate};
pub use text::{GruParams, TextEncoder, WordTable};
pub use train::{train, TrainConfig, TrainError, TrainOutcome, TrainedModel, Variant};
pub use walk::{ContextTriplet, MetaPathScheme, WalkConfig, WalkCorpus, WalkMode};
