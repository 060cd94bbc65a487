//! Unsupervised representation learners for guest parties: noise-as-targets
//! (random unit targets plus a learned sample→target permutation) and PCA.

pub mod hungarian;
pub mod pca;
pub mod targets;
pub mod train;

pub use hungarian::{hungarian, Assignment};
pub use pca::{pca_fit, pca_inverse_transform, pca_transform, PcaModel};
pub use targets::{init_targets, nat_assign_batch, nat_loss, TargetSet};
pub use train::{extract_representation, nat_train, NatConfig, NatOutcome};
