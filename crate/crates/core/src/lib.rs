//! Exact sampling from determinantal point processes (DPPs) under cardinality
//! and partition constraints, and greedy plus local-search MAP inference for
//! k-DPPs.
//!
//! Items are rows of a feature matrix `A`; the DPP kernel is `K = A Aᵀ` and a
//! subset `S` has weight `det(A_S A_Sᵀ)`. A partition constraint fixes how many
//! items are drawn from each of a set of disjoint parts. Its normalizing
//! constant is a single coefficient of the multivariate characteristic
//! polynomial `det(K - x₁I₁ - … - x_pI_p)`, which [`charpoly`] computes by
//! evaluating the polynomial on a grid of scaled roots of unity.
//!
//! Every fast path has a brute-force counterpart in [`oracle`].
//!
//! All indices in this crate are 0-based.
//!
//! ```
//! use partdpp::{sample_partition_dpp, FeatureMatrix, Partition, PartitionSpec, RngSeed};
//!
//! // Four orthogonal items in two parts; draw one item from each part.
//! let a = FeatureMatrix::identity(4);
//! let spec = PartitionSpec::new(Partition::new(vec![0, 0, 1, 1])?, vec![1, 1])?;
//! let s = sample_partition_dpp(&a, &spec, RngSeed(7))?;
//! assert_eq!(spec.partition().counts(s.as_slice()), vec![1, 1]);
//! # Ok::<(), partdpp::DppError>(())
//! ```

pub mod charpoly;
pub mod error;
pub mod map;
pub mod matrix;
pub mod oracle;
mod par;
pub mod sampler;

pub use charpoly::{
    char_coeffs_univariate, constrained_partition_function, multichar_all_coeffs, multichar_coeff,
    partition_function_report, CoeffTensor, PartitionFnReport,
};
pub use error::{DppError, Result};
pub use map::{greedy_map, kappa, local_search_map, swap_cap, MapResult, Swap};
pub use matrix::{
    factor_kernel, gram, log_det_rows, principal_minor_det, project_out, project_rows_orthogonal,
    residual, FeatureMatrix, Kernel, Partition, PartitionSpec, Subset, DEFAULT_PSD_TOL,
};
pub use sampler::{
    exact_set_probability, kdpp_step_probs, marginal_step_probs, sample_kdpp, sample_partition_dpp,
    RngSeed, SampleState,
};
