//! Neumann `(p, q)`-eigenvalues of the weighted p-Laplacian on Hölder cusp
//! domains `{0 < x_i < x_n^{γ_i}, 0 < x_n < 1}`: admissibility of the
//! exponents, the cusp-flattening maps and their transfer constants, analytic
//! upper bounds on `1/λ` and a P1 finite-element eigensolver.
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64` (and `f32` with a `32` suffix).

pub mod bound;
pub mod cusp_map;
pub mod eigen;
pub mod mesh;
pub mod param;
pub mod quadrature;
pub mod scalar;
pub mod sparse;

pub type DomainSpec = param::DomainSpec<f64>;
pub type ProblemParams = param::ProblemParams<f64>;
pub type ValidatedProblem = param::ValidatedProblem<f64>;
pub type TransferWindow = param::TransferWindow<f64>;
pub type CuspMapping = cusp_map::CuspMapping<f64>;
pub type BoundParams = bound::BoundParams<f64>;
pub type BoundReport = bound::BoundReport<f64>;
pub type PoincareProvider = bound::PoincareProvider<f64>;
pub type GradedMesh = mesh::GradedMesh<f64>;
pub type DiscreteProblem = eigen::DiscreteProblem<f64>;
pub type EigenResult = eigen::EigenResult<f64>;

pub type DomainSpec32 = param::DomainSpec<f32>;
pub type ProblemParams32 = param::ProblemParams<f32>;
pub type ValidatedProblem32 = param::ValidatedProblem<f32>;
pub type BoundParams32 = bound::BoundParams<f32>;
pub type BoundReport32 = bound::BoundReport<f32>;
pub type GradedMesh32 = mesh::GradedMesh<f32>;
pub type DiscreteProblem32 = eigen::DiscreteProblem<f32>;
pub type EigenResult32 = eigen::EigenResult<f32>;
