//! Numerical laboratory for the conformal Ricci flow on flat tori.
//!
//! The flow couples a parabolic metric evolution
//! `∂t g = −2 (Rc + (p + m) g)` with an elliptic pressure equation
//! `(−Δ + (m + 1)) p = |Rc + m g|² / m` on an `(m + 1)`-dimensional closed
//! manifold. This crate discretizes the system on periodic grids, solves the
//! conjugate heat equation `∂t u = −Δu + (m + 1) p u` backward along stored
//! trajectories, and evaluates the Boltzmann–Shannon and `W`-type entropies
//! together with their predicted time derivatives.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! tolerances throughout the crate are calibrated for.

// `!(x > 0)` is used on purpose so that NaN fails the check; index loops
// mirror the tensor index notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cg;
pub mod checkpoint;
pub mod conjugate;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod identities;
pub mod nu;
pub mod pressure;
pub mod scalar;
pub mod seeds;
pub mod space_form;
pub mod tensor;
pub mod yamabe;

pub use scalar::Real;

pub type Grid = grid::GridSpec<f64>;
pub type Scalar = grid::ScalarField<f64>;
pub type Metric = tensor::MetricField<f64>;
pub type SymTensor = tensor::SymTensorField<f64>;
pub type Geom = geometry::Geometry<f64>;
pub type Trajectory = flow::FlowTrajectory<f64>;
pub type HeatSolution = conjugate::ConjugateHeatSolution<f64>;
pub type Report = functionals::FunctionalReport<f64>;
pub type SpaceForm = space_form::SpaceFormState<f64>;
