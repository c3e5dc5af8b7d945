//! First-order Takagi–Sugeno ANFIS.
//!
//! Layers: bell membership functions per input, rule firing strengths as
//! products, normalization, affine rule consequents, and the weighted sum.
//! Training alternates an exact least-squares solve for the consequents with
//! a gradient step on the premises.

pub mod dataset;
pub mod membership;
pub mod model;
pub mod train;

pub use dataset::{generate_dataset, Dataset, SplitManifest};
pub use membership::BellMf;
pub use model::{normalize, AnfisModel, Metadata};
pub use train::{train_hybrid, EpochRecord, TrainConfig, TrainReport};
