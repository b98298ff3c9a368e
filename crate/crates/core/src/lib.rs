//! Numerical laboratory for deformed Hermitian Yang-Mills metrics on flat tori.
//!
//! * [`phase`]: the Lagrangian phase `theta(lambda) = sum arctan(lambda_i)`,
//!   the tangent phase `f = tan(theta - theta_hat)` and its derivatives.
//! * [`concavity`]: sampling certificate for concavity of `f` on the
//!   calibrated strip, and the matrix objects behind it.
//! * [`torus`]: spectral discretization of invariant potentials, the matrix
//!   field `A[phi] = B + D^2 phi` and the invariant `Z`.
//! * [`functionals`]: Calabi-Yau, `C`, `J` and volume functionals.
//! * [`flow`]: RK4 integration of the tangent Lagrangian phase flow and the
//!   line bundle mean curvature flow, with monitors.

pub mod concavity;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod linalg;
pub mod phase;
pub mod sampling;
pub mod torus;

pub use error::{Error, Result};
pub use phase::{BranchedAngle, Spectrum};
pub use torus::{ScalarField, TorusConfig};
