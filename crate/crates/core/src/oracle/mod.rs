//! Exact solvers for small instances and numeric verifiers for the scoring
//! and training identities.

mod checks;
mod exact;

pub use checks::{
    canonical_scorer_check, finite_diff_grad, gradient_check, random_gradient_case, soft_top1_limit_check, CheckReport,
    GradCheck,
};
pub use exact::{enumerate_tsp, enumerate_vrp, exact_solver_check, exact_tsp, exact_vrp, TSP_LIMIT, VRP_LIMIT};
