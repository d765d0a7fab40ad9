//! Grayscale image compression by trigonometric moments.
//!
//! An image is mirrored into a double-even periodic grid and lifted to a
//! strictly positive field `Φ = exp(Y)`. The compressed form is the set of
//! low-order trigonometric moments of that field, optionally accompanied by a
//! low-rank SVD factor pair that shapes a prior field `Ψ`. Reconstruction picks
//! the moment-matching field closest to the prior in an Alpha divergence,
//! which is computed through its convex dual with a matrix-free Newton method.
//!
//! Module map:
//!
//! * [`image`]: pixel images, mirroring, the exponential lift, PSNR.
//! * [`spectral`]: index sets, FFT-based moments and trigonometric polynomial evaluation.
//! * [`divergence`]: the Alpha divergence family and the dual objectives.
//! * [`solver`]: damped Newton-CG on the dual problem.
//! * [`priors`]: uniform, low-rank SVD and similar-image priors.
//! * [`codec`]: rate bookkeeping, the ν and rank sweeps, reconstruction, and the `MCC1` container.

pub mod codec;
pub mod divergence;
mod error;
pub mod image;
pub mod priors;
pub mod solver;
pub mod spectral;

pub use codec::container::{Container, PriorPayload};
pub use codec::{
    compress_hybrid, compress_hybrid_ranks, compress_sweep_nu, decode_prior, reconstruct, Candidate, CodecOptions,
    CompressionOutcome, PriorSpec, Reconstruction,
};
pub use divergence::{alpha_divergence, stationary_field, DualObjective, DualState, Nu};
pub use error::{Error, FormatError, Result};
pub use image::{lift, mirror, psnr, unlift, GridField, Image};
pub use priors::{prior_from_factors, prior_from_similar_image, svd_factors, uniform_prior, SvdFactors};
pub use solver::{
    solve_dual, solve_dual_from, verify_duality, DualityCertificate, Solution, SolveReport, SolverConfig,
};
pub use spectral::{
    compute_moments, evaluate_on_grid, truncate_to_index_set, DualPolynomial, GridDims, IndexSet, MomentSet,
    SpectralKernel,
};
