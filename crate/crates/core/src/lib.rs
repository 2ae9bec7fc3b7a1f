//! Fixed points of weighted averages of resolvents.
//!
//! Given maximally monotone operators `A_1, …, A_m` with closed-form
//! resolvents and convex weights `λ`, the averaged resolvent
//! `J_A = Σ λ_i J_{A_i}` is firmly nonexpansive. Its fixed points can be found
//! by iterating `J_A` directly, or by lifting to the product space `X^m` and
//! iterating the averaged map `J ∘ R` (or the sequential sweep `T`).
//!
//! * [`operators`]: operator models, resolvents, `J_A`.
//! * [`product_space`]: block vectors and the operators `R`, `R*`, `J`, `T`, `L`.
//! * [`algorithms`]: iteration drivers, stopping rules, traces, dB error.
//! * [`least_squares`]: hyperplane systems and normal equations.
//! * [`bench`]: seeded random instances and averaged convergence curves.
//!
//! ```
//! use resolvent_core::{iterate_averaged_resolvent, OperatorModel, StoppingRule, Vector, Weights};
//!
//! let a = Vector::new(vec![1.0]).unwrap();
//! let models = vec![
//!     OperatorModel::hyperplane(a.clone(), 1.0).unwrap(),
//!     OperatorModel::hyperplane(a, 2.0).unwrap(),
//! ];
//! let w = Weights::equal(2).unwrap();
//! let trace = iterate_averaged_resolvent(&models, &w, &Vector::zeros(1), &StoppingRule::default()).unwrap();
//! assert!((trace.final_point[0] - 1.5).abs() < 1e-9);
//! ```

pub mod algorithms;
pub mod bench;
pub mod error;
pub mod least_squares;
pub mod operators;
pub mod product_space;
pub mod vector;

pub use algorithms::{
    iterate_averaged_resolvent, iterate_heuristic, iterate_product, lipschitz_probe, relative_error_db,
    IterationTrace, Outcome, ProductOptions, ProductRun, Record, StoppingRule, TraceTag,
};
pub use bench::{
    emit_plot_data, generate_random_hyperplanes, run_experiment, Algorithm, CurveTable, ExperimentConfig,
    WeightsMode,
};
pub use error::{Error, Result};
pub use least_squares::{
    normal_equation_solve, normalize_rows, verify_fixed_point_equivalence, weighted_normal_equation_solve,
    EquivalenceReport, HyperplaneSystem,
};
pub use operators::{
    averaged_resolvent, check_firm_nonexpansive, check_firm_nonexpansive_map, resolve, FirmReport,
    OperatorModel, Weights,
};
pub use product_space::{
    average_others, average_others_adjoint, average_others_at, averaging_norm, combine, isometry_part,
    ProductProblem, ProductVector,
};
pub use vector::{Metric, Vector};
