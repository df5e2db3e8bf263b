//! Low-rank tensor reconstruction as a defense against gradient-based
//! adversarial perturbations on images.
//!
//! The crate is organized around a full attack → defend → classify loop that
//! runs at desk scale with no external numerical dependencies:
//!
//! - [`tensor`]: dense N-mode arrays plus the index algebra (unfold/fold,
//!   mode-n products, Khatri-Rao) every decomposition uses
//! - [`linalg`]: one-sided Jacobi SVD and rank truncation
//! - [`decomp`]: CP-ALS, Tucker (HOSVD init + HOOI), and Tensor-Train (TT-SVD)
//! - [`defense`]: batch representations, patch splitting, randomized rank
//!   selection, and the reconstruct-and-clamp pipeline
//! - [`attack`]: linear-softmax and one-hidden-layer surrogate classifiers
//!   with analytic gradients driving FGSM, I-FGSM, and PGD
//! - [`slq`]: stochastic local quantization baseline (blockwise DCT
//!   quantization at randomly drawn qualities)
//! - [`imageio`]: binary PPM I/O, dataset manifests, synthetic low-rank
//!   dataset generation

pub mod attack;
pub mod decomp;
pub mod defense;
pub mod error;
pub mod imageio;
pub mod linalg;
pub mod rng;
pub mod slq;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, Matrix};
