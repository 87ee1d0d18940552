//! Quantization-accelerated estimation of 2-Wasserstein distances.
//!
//! The crate provides the pieces of the oversample-quantize-solve pipeline:
//!
//! - [`measure`]: discrete measures, cost matrices, transport plans, and the
//!   nearest-neighbor pushforward;
//! - [`quantize`]: k-means++ and AFK-MC^2 seeding, Lloyd refinement, and
//!   precision-targeted quantization;
//! - [`exact`]: an exact network-simplex transport solver plus brute-force
//!   oracles for small instances;
//! - [`sinkhorn`]: log-domain entropic scaling with marginal rounding and an
//!   epsilon-guaranteed approximate solver;
//! - [`estimators`]: the plug-in, quantized-oversampling, and quantized
//!   epsilon-guaranteed distance estimators;
//! - [`datasets`]: synthetic samplers with closed-form references and CSV/PGM
//!   point-cloud ingestion.
//!
//! All operations are pure given their inputs (and an explicit seeded RNG
//! where randomness is involved), so independent calls can run in parallel.

// Numeric kernels index parallel arrays; range loops are the clearest form.
#![allow(clippy::needless_range_loop)]

pub mod datasets;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod measure;
pub mod quantize;
pub mod sinkhorn;

pub use datasets::{
    dirac_pair, fragmented_hypercube, gaussian_pair, load_csv_pointcloud, load_grid_image,
    sampled_mixtures, DiscreteCloudSampler,
};
pub use error::{Error, Result};
pub use estimators::{
    oversample_budget, plugin_estimate, quantized_eps_estimate, quantized_estimate, DatasetPair,
    EpsEstimate, EstimateRecord, Sampler, SeedingMethod,
};
pub use exact::{brute_force_assignment, solve_exact, w2_distance, ExactSolution};
pub use measure::{
    euclidean_cost_with_exponent, nearest_neighbor_assign, pushforward, squared_euclidean_cost,
    transport_cost, CostMatrix, DiscreteMeasure, TransportPlan,
};
pub use quantize::{
    afk_mc2_seed, kmeanspp_seed, lloyd_refine, optimal_quantization_bruteforce, quantization_error,
    quantize_to_precision, QuantizationResult,
};
pub use sinkhorn::{
    approx_solve, approx_solve_with, round_to_feasible, sinkhorn_scale, ApproxSolveReport,
    SinkhornOutput,
};
