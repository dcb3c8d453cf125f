//! Kernel-weighted contrastive losses for regression on multi-site data.
//!
//! Continuous labels do not admit a hard positive/negative split, so every
//! pair of samples gets a *degree of positiveness* from a kernel on the
//! label difference. Three losses built on that idea ([`losses`]), an
//! encoder mapping features onto the unit hypersphere with the matching
//! training recipe ([`encoder`]), a synthetic multi-site benchmark
//! ([`datagen`]), the challenge evaluation stack ([`metrics`]) and an
//! experiment runner with a resumable ablation grid ([`experiment`]).

pub mod datagen;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod similarity;

pub use error::{Error, Result};
pub use kernels::{kernel_eval, weight_matrix, KernelKind, LabelKernel, WeightMatrix};
pub use losses::{
    exp_loss, loss_gradient_check, loss_on_similarities, loss_with_gradient, lse_relaxation,
    margin_oracle, supcon_loss, thr_loss, thr_loss_with, yaware_loss, LossKind, LossOpts,
    LossOutput, LseBound, SimGrad, ThrNorm,
};
pub use similarity::{
    cosine_similarity_matrix, project_to_sphere, EmbeddingBatch, SimilarityMatrix,
};
