//! Group Lasso for row-partitioned data: grouped designs, reference solvers,
//! screening rules and regularization paths.
//!
//! The objective is
//!
//! ```text
//! 1/2 ||y - A x||^2 + lambda * sum_g w_g ||[x]_g||_2
//! ```
//!
//! over contiguous column groups `g`.

pub mod design;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod partition;
pub mod path;
pub mod screening;
pub mod solver;
pub mod standardize;
pub mod synth;

pub use design::{
    attach_lipschitz, concat_shards, correlation_vector, group_correlations, group_correlations_blocks, group_gram, group_gram_blocks,
    lambda_max, lipschitz_constants, shard_dataset, BlockView, GroupBlock, GroupVector, GroupedDesign, SiteShard,
};
pub use error::{Error, Result};
pub use linalg::{group_lipschitz, spectral_norm_sq};
pub use partition::{make_partition, uniform_partition, GroupPartition, WeightRule};
pub use path::{lambda_grid, run_path, run_path_resumable, run_path_with, LocalEngine, PathAbort, PathEngine, PathModels, PathOptions, PathSpec, Provenance, ScreenMode, SolverKind};
pub use screening::{
    edpp_init, edpp_screen_step, edpp_screen_step_blocks, kkt_violations, kkt_violations_from_gradient, strong_rule_mask, DualState, EdppStep,
    NormBound, ScreenMask, ScreenRule, ScreeningContext,
};
pub use solver::{
    admm_solve, admm_solve_with, bcd_drive, bcd_solve, bcd_solve_reduced, duality_gap, fista_solve, fista_solve_with, gap_from_moments, group_prox,
    objective, AdmmOptions, BcdBackend, FistaOptions, LocalBackend, Selection, Solution, SolveOptions,
};
pub use synth::{generate_synthetic, Synthetic, SyntheticConfig};
