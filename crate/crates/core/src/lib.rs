//! Personalized neural embedding (PNE) recommender.
//!
//! Learns user, item, and word embeddings jointly from implicit-feedback
//! interactions and per-item text. Scores a (user, item) pair by fusing two
//! latent factors: a *behavior factor* from a one-hidden-layer CF network
//! over the concatenated user/item embeddings, and a *semantic factor* read
//! from the item's words by content-based attention over a shared word
//! memory matrix. Training is hand-derived backpropagation with Adam and
//! per-epoch negative resampling; evaluation is leave-one-out ranking with
//! HR@K, NDCG@K, and MRR@K over sampled candidates.
//!
//! Modules:
//! - [`numkernel`]: dense vector/matrix kernels and the seeded RNG
//! - [`data`]: ingestion, vocabulary/corpus building, leave-one-out split,
//!   negative sampling, synthetic planted-cluster datasets
//! - [`model`]: parameters, forward pass, checkpoint format
//! - [`train`]: loss, backward pass, lazy sparse Adam, epoch loop
//! - [`eval`]: candidate ranking, metrics, report output

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numkernel;
pub mod train;

pub use error::PneError;
