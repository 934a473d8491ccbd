//! Application front-ends built on the RISRO step: phase retrieval, matrix
//! completion and robust PCA.

pub mod completion;
pub mod phase;
pub mod rpca;

pub use completion::{completion_problem, mc_risro};
pub use phase::{
    pr_gd_init, pr_objective, pr_objective_gradient, pr_rank2_eig_update, pr_risro, pr_sketch_and_solve,
    pr_spectral_init, pr_truncated_spectral_init, PrSketchSolution, SymmetricFactoredMatrix,
};
pub use rpca::{rpca_risro, rpca_spectral_init, rpca_truncate, RpcaConfig};
