//! Cheeger constants, Cheeger clusters and their total-variation
//! formulations on pixel grids.
//!
//! A domain is a [`GridDomain`]: a padded pixel mask with spacing `h`. The
//! solvers minimize `Σ TV(uⁱ)` over skeleton-valued fields with unit-L¹
//! components ([`solve_lambda_n`]) or `TV(v)` over signed fields with unit
//! positive and negative parts ([`solve_m2`]); clusters are read off as
//! super-level sets ([`extract_cluster`]).

pub mod checks;
pub mod error;
pub mod extract;
pub mod grid;
pub mod oracle;
pub mod skeleton;
pub mod solver;
pub mod tvops;

pub use error::{Error, Result};
pub use extract::{
    eigen_bounds, eval_h2, CERTIFICATE_TOL, extract_cluster, indicator_lift, measure_set, ratio_profile, ClusterResult, EigenBounds,
    RatioProfile, SetMeasure, ThresholdStrategy,
};
pub use grid::{
    load_mask, make_barbell, make_disc, make_rectangle, make_square, rasterize_polygon, GridDomain, MultiField,
    PolygonSpec, ScalarField, Shape,
};
pub use oracle::{analytic_disc, analytic_square, brute_force_hn, OracleFixture};
pub use skeleton::{merge_signed, normalize_l1, project_sigma, split_signed};
pub use solver::{psi_perturb, solve_lambda_n, solve_m2, upper_bound_balls, SolverConfig, SolverReport};
pub use tvops::{coarea_check, divergence, energy_star, gradient, tv, DualField, VectorField};
