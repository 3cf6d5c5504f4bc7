//! Unbalanced dynamic transport distances on finite reversible Markov chains.
//!
//! The solvers are generic over the scalar type through [`Real`]; the
//! `*64` and `*32` aliases fix the common choices.

pub mod action;
pub mod calculus;
pub mod chain;
pub mod duality;
pub mod elliptic;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod linalg;
pub mod scalar;
pub mod suite;
pub mod transport;

pub use action::{
    action_linsq, action_quad, antisymmetrize, rearrange_source, shift_cost, speed_profile, Trajectory,
};
pub use calculus::{divergence, gradient, log_mean, theta};
pub use chain::{load_chain, save_chain, total_mass, ChainDocument, ChainOptions, EdgeField, MarkovChain, Measure};
pub use duality::{
    certificate_from_primal, dual_value, duality_gap, feasibility_margin, hj_surplus, DualCertificate, GapReport,
};
pub use elliptic::{solve_potential, solve_tangent, TangentSolve};
pub use error::{Error, Result};
pub use geodesic::{
    geodesic_rhs, integrate_ray, ray_directions, ray_fan, shoot, GeodesicState, RayOptions, RayResult, ShootOptions,
    StopReason,
};
pub use scalar::{Extended, Real};
pub use transport::{
    check_nonlocality, distance_d, distance_me, distance_w, Metric, Nonlocality, Shift, SolveOptions, SolveReport,
};

pub type MarkovChain64 = MarkovChain<f64>;
pub type MarkovChain32 = MarkovChain<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type EdgeField64 = EdgeField<f64>;
pub type EdgeField32 = EdgeField<f32>;
pub type SolveReport64 = SolveReport<f64>;
pub type SolveReport32 = SolveReport<f32>;
pub type GeodesicState64 = GeodesicState<f64>;
pub type GeodesicState32 = GeodesicState<f32>;
pub type RayResult64 = RayResult<f64>;
pub type RayResult32 = RayResult<f32>;
pub type DualCertificate64 = DualCertificate<f64>;
pub type DualCertificate32 = DualCertificate<f32>;
